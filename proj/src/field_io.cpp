#include "percreach/field_io.hpp"

#include <charconv>
#include <fstream>
#include <ostream>

#include "percreach/binary_io.hpp"
#include "percreach/errors.hpp"

namespace percreach {

namespace {
constexpr std::string_view kFieldMagic = "RVCF";
}  // namespace

void write_grid_header(io::Writer& w, const Grid& grid) {
  const auto n = grid.dims();
  w.u32(static_cast<std::uint32_t>(n));
  for (std::size_t d = 0; d < n; ++d) w.u32(static_cast<std::uint32_t>(grid.shape(d)));
  for (std::size_t d = 0; d < n; ++d) w.f64(grid.lo(d));
  for (std::size_t d = 0; d < n; ++d) w.f64(grid.hi(d));
  for (std::size_t d = 0; d < n; ++d) w.u8(grid.periodic(d) ? 1 : 0);
}

Grid read_grid_header(io::Reader& r, std::uint32_t dims) {
  const std::size_t at = r.offset();
  if (dims == 0 || dims > kMaxDims) throw FormatError("unsupported dims " + std::to_string(dims), at);
  std::vector<std::size_t> shape(dims);
  std::vector<double> lo(dims), hi(dims);
  std::vector<bool> periodic(dims);
  for (auto& s : shape) s = r.u32("shape");
  for (auto& v : lo) v = r.f64("lo");
  for (auto& v : hi) v = r.f64("hi");
  for (std::size_t d = 0; d < dims; ++d) {
    const std::size_t flag_at = r.offset();
    const auto flag = r.u8("periodic");
    if (flag > 1) throw FormatError("periodic flag must be 0 or 1", flag_at);
    periodic[d] = flag == 1;
  }
  try {
    return Grid(lo, hi, shape, periodic);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid grid header: ") + e.what(), at);
  }
}

void write_field(std::ostream& os, const ScalarField& field) {
  io::Writer w(os);
  w.bytes(kFieldMagic);
  w.u32(kFieldFormatVersion);
  write_grid_header(w, field.grid());
  w.f64s(std::vector<double>(field.values().begin(), field.values().end()));
}

ScalarField read_field(std::istream& is, std::size_t start_offset) {
  io::Reader r(is, start_offset);
  const std::size_t magic_at = r.offset();
  if (r.bytes(4, "magic") != kFieldMagic) throw FormatError("bad field magic", magic_at);
  const std::size_t version_at = r.offset();
  if (r.u32("version") != kFieldFormatVersion) throw FormatError("unsupported field version", version_at);
  const auto dims = r.u32("dims");
  Grid grid = read_grid_header(r, dims);
  const std::size_t values_at = r.offset();
  auto values = r.f64s(grid.size(), "values");
  try {
    return ScalarField(std::move(grid), std::move(values));
  } catch (const ArgumentError& e) {
    throw FormatError(e.what(), values_at);
  }
}

void save_field(const std::filesystem::path& path, const ScalarField& field) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArgumentError("cannot open " + path.string() + " for writing");
  write_field(os, field);
}

ScalarField load_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArgumentError("cannot open " + path.string());
  io::Reader tail(is);
  auto field = read_field(is);
  tail.expect_end();
  return field;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

void write_slice_csv(std::ostream& os, const ScalarField& field, std::size_t dim_i,
                     std::size_t dim_j, const std::vector<std::size_t>& pinned_index) {
  const Grid& g = field.grid();
  if (dim_i >= g.dims() || dim_j >= g.dims() || dim_i == dim_j) {
    throw ArgumentError("slice dims must be two distinct grid dims");
  }
  if (pinned_index.size() != g.dims()) throw ArgumentError("pinned index needs one entry per dim");
  std::vector<std::size_t> index = pinned_index;
  for (std::size_t d = 0; d < g.dims(); ++d) {
    if (index[d] >= g.shape(d)) throw ArgumentError("pinned index out of range");
  }
  os << "x" << dim_i << ",x" << dim_j << ",value\n";
  for (std::size_t a = 0; a < g.shape(dim_i); ++a) {
    for (std::size_t b = 0; b < g.shape(dim_j); ++b) {
      index[dim_i] = a;
      index[dim_j] = b;
      os << format_double(g.coordinate(dim_i, a)) << ',' << format_double(g.coordinate(dim_j, b))
         << ',' << format_double(field[g.ravel(index)]) << '\n';
    }
  }
}

}  // namespace percreach
