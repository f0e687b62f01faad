#include "rdgcn/matrix_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <limits>

#include "rdgcn/error.hpp"

namespace rdgcn::io {

namespace {

constexpr std::array<char, 4> kMagic = {'R', 'D', 'G', 'M'};
constexpr std::uint8_t kVersion = 1;

std::string quote_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

/// One CSV record; quoted fields may span lines.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line_no) {
  fields.clear();
  int c = in.peek();
  if (c == std::char_traits<char>::eof()) return false;
  ++line_no;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  while (true) {
    c = in.get();
    if (c == std::char_traits<char>::eof()) {
      if (quoted) throw ParseError("unterminated quoted field", line_no, 0);
      break;
    }
    const char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field += static_cast<char>(in.get());
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line_no;
        field += ch;
      }
      continue;
    }
    if (ch == '"' && field.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else if (ch == '\n') {
      break;
    } else if (ch != '\r') {
      field += ch;
    }
  }
  fields.push_back(std::move(field));
  return true;
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw ParseError("not a number: '" + std::string(s) + "'", 0, 0);
  }
  return v;
}

void write_matrix_csv(std::ostream& out, const Matrix& m, const std::vector<std::string>& row_ids,
                      const std::vector<std::string>& col_ids) {
  if (!row_ids.empty() && row_ids.size() != m.rows()) {
    throw std::invalid_argument("write_matrix_csv: row id count mismatch");
  }
  if (!col_ids.empty() && col_ids.size() != m.cols()) {
    throw std::invalid_argument("write_matrix_csv: column id count mismatch");
  }
  out << "id";
  for (std::size_t j = 0; j < m.cols(); ++j) {
    out << ',' << quote_field(col_ids.empty() ? std::to_string(j) : col_ids[j]);
  }
  out << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << quote_field(row_ids.empty() ? std::to_string(i) : row_ids[i]);
    for (double v : m.row(i)) out << ',' << format_double(v);
    out << '\n';
  }
}

LabeledMatrix read_matrix_csv(std::istream& in) {
  std::vector<std::string> fields;
  std::size_t line_no = 0;
  if (!read_record(in, fields, line_no)) throw ParseError("empty matrix file", 1, 1);
  LabeledMatrix out;
  out.col_ids.assign(fields.begin() + 1, fields.end());
  const std::size_t cols = out.col_ids.size();
  std::vector<double> data;
  while (read_record(in, fields, line_no)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != cols + 1) {
      throw ParseError("expected " + std::to_string(cols + 1) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no, 1);
    }
    out.row_ids.push_back(fields[0]);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      try {
        data.push_back(parse_double(fields[j]));
      } catch (const ParseError&) {
        throw ParseError("not a number: '" + fields[j] + "'", line_no, j + 1);
      }
    }
  }
  out.values = Matrix(out.row_ids.size(), cols);
  out.values.data() = std::move(data);
  return out;
}

void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (std::size_t i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), b.size());
}

void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t read_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), b.size());
  if (in.gcount() != 8) throw DataError("truncated binary payload");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

void write_matrix_binary(std::ostream& out, const Matrix& m) {
  out.write(kMagic.data(), kMagic.size());
  out.put(static_cast<char>(kVersion));
  write_u64(out, m.rows());
  write_u64(out, m.cols());
  for (double v : m.data()) write_f64(out, v);
}

Matrix read_matrix_binary(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kMagic) throw DataError("not an RDGM matrix file");
  const int version = in.get();
  if (version != kVersion) throw DataError("unsupported RDGM version " + std::to_string(version));
  const std::uint64_t rows = read_u64(in);
  const std::uint64_t cols = read_u64(in);
  if (cols != 0 && rows > std::numeric_limits<std::uint32_t>::max() / cols) {
    throw DataError("RDGM dimensions too large");
  }
  Matrix m(rows, cols);
  for (double& v : m.data()) v = read_f64(in);
  return m;
}

void save_matrix(const std::filesystem::path& path, const Matrix& m,
                 const std::vector<std::string>& row_ids, const std::vector<std::string>& col_ids) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  if (path.extension() == ".csv") {
    write_matrix_csv(out, m, row_ids, col_ids);
  } else {
    write_matrix_binary(out, m);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

LabeledMatrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file: " + path.string());
  std::array<char, 4> head{};
  in.read(head.data(), head.size());
  const bool binary = in.gcount() == 4 && head == kMagic;
  in.clear();
  in.seekg(0);
  if (binary) return LabeledMatrix{read_matrix_binary(in), {}, {}};
  return read_matrix_csv(in);
}

}  // namespace rdgcn::io
