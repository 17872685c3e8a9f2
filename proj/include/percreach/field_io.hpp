#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "percreach/grid.hpp"

namespace percreach {

inline constexpr std::uint32_t kFieldFormatVersion = 1;

// Grid header shared by every binary container:
//   dims u32, shape u32[dims], lo f64[dims], hi f64[dims], periodic u8[dims]
// (the magic and version precede it and differ per container).
namespace io {
class Writer;
class Reader;
}  // namespace io
void write_grid_header(io::Writer& w, const Grid& grid);
Grid read_grid_header(io::Reader& r, std::uint32_t dims);

// "RVCF" container: magic, version u32, grid header, f64 values row-major.
void write_field(std::ostream& os, const ScalarField& field);
ScalarField read_field(std::istream& is, std::size_t start_offset = 0);
void save_field(const std::filesystem::path& path, const ScalarField& field);
ScalarField load_field(const std::filesystem::path& path);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

// Writes the 2D slice spanned by dims (i, j) with every other dim pinned to
// the given node index. Columns: x_i, x_j, value. Rows run over i then j.
void write_slice_csv(std::ostream& os, const ScalarField& field, std::size_t dim_i,
                     std::size_t dim_j, const std::vector<std::size_t>& pinned_index);

}  // namespace percreach
