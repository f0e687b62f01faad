#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "rdgcn/matrix.hpp"

namespace rdgcn::io {

struct LabeledMatrix {
  Matrix values;
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
};

/// Header `id,<col ids...>`, then one line per row starting with its id.
/// Fields are quoted when they contain a comma, quote or newline. Values use
/// shortest round-trip formatting. Empty id vectors mean 0..n-1.
void write_matrix_csv(std::ostream& out, const Matrix& m, const std::vector<std::string>& row_ids,
                      const std::vector<std::string>& col_ids);
/// Throws ParseError on malformed input.
LabeledMatrix read_matrix_csv(std::istream& in);

/// `RDGM`, version byte, u64 rows, u64 cols, then row-major f64, all
/// little-endian.
void write_matrix_binary(std::ostream& out, const Matrix& m);
/// Throws DataError on bad magic, version or truncated payload.
Matrix read_matrix_binary(std::istream& in);

void save_matrix(const std::filesystem::path& path, const Matrix& m,
                 const std::vector<std::string>& row_ids = {},
                 const std::vector<std::string>& col_ids = {});
/// Chooses the format by the leading magic bytes.
LabeledMatrix load_matrix(const std::filesystem::path& path);

/// Little-endian helpers shared with the model checkpoint format.
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);
/// Throws ParseError (line 0) on garbage.
double parse_double(std::string_view s);

}  // namespace rdgcn::io
