"""Fit a small tanh MLP to a tabulated controller exported by `percreach export-table`.

Writes weights in the binary layout read by percreach::load_mlp:
u32 layer count, then per layer u32 rows, u32 cols, f64 weight (row-major),
f64 bias, u8 activation (0 none, 1 relu, 2 tanh). Little-endian.
"""

import argparse
import struct

import numpy as np
import torch
from torch import nn

ACT_NONE, ACT_RELU, ACT_TANH = 0, 1, 2


def load_table(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    with open(path) as f:
        header = f.readline().strip().split(",")
    n_state = sum(1 for h in header if h.startswith("x"))
    return data[:, :n_state], data[:, n_state:]


def build(n_in, n_out, hidden, depth):
    layers, width = [], n_in
    for _ in range(depth):
        layers += [nn.Linear(width, hidden), nn.Tanh()]
        width = hidden
    layers += [nn.Linear(width, n_out), nn.Tanh()]
    return nn.Sequential(*layers)


def export(model, lo, hi, u_scale, path):
    linears = [m for m in model if isinstance(m, nn.Linear)]
    # Fold the input normalization x' = (2x - (lo + hi)) / (hi - lo) into layer 0
    # and the output scaling into a final affine layer.
    scale = 2.0 / (hi - lo)
    shift = -(hi + lo) / (hi - lo)
    out = []
    for k, lin in enumerate(linears):
        w = lin.weight.detach().double().numpy()
        b = lin.bias.detach().double().numpy()
        if k == 0:
            b = b + w @ shift
            w = w * scale[None, :]
        out.append((w, b, ACT_TANH))
    n_out = out[-1][0].shape[0]
    out.append((np.diag(u_scale), np.zeros(n_out), ACT_NONE))
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(out)))
        for w, b, act in out:
            rows, cols = w.shape
            f.write(struct.pack("<II", rows, cols))
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
            f.write(struct.pack("<B", act))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("table_csv")
    ap.add_argument("out")
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--depth", type=int, default=2)
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--batch", type=int, default=1024)
    ap.add_argument("--lr", type=float, default=3e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    np.random.seed(args.seed)
    x, u = load_table(args.table_csv)
    lo, hi = x.min(axis=0), x.max(axis=0)
    u_scale = np.maximum(np.abs(u).max(axis=0), 1e-12)
    xn = torch.tensor((2 * x - (lo + hi)) / (hi - lo), dtype=torch.float32)
    un = torch.tensor(u / u_scale, dtype=torch.float32)

    model = build(x.shape[1], u.shape[1], args.hidden, args.depth)
    opt = torch.optim.Adam(model.parameters(), lr=args.lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, args.epochs)
    n = xn.shape[0]
    for epoch in range(args.epochs):
        perm = torch.randperm(n)
        total = 0.0
        for i in range(0, n, args.batch):
            idx = perm[i : i + args.batch]
            loss = ((model(xn[idx]) - un[idx]) ** 2).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        sched.step()
        if epoch % 10 == 0 or epoch == args.epochs - 1:
            print(f"epoch {epoch:3d}  mse {total / n:.4f}")
    export(model, lo, hi, u_scale, args.out)


if __name__ == "__main__":
    main()
