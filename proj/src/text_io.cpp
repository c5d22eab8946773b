#include "text_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace mtgrr::io {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, std::string_view content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + p.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + p.string());
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

bool looks_numeric(std::string_view field) {
  double v = 0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  while (first != last && *first == ' ') ++first;
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  return ec == std::errc() && ptr != first;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  const std::string text = read_file(p);
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (is_blank(line)) continue;
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

double parse_double(std::string_view field, const std::string& context) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '+')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::SchemaMismatch, context + ": cannot parse '" + std::string(field) + "' as a number");
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::pair<std::vector<std::string>, Matrix> read_table(const std::filesystem::path& p, int expected_rows) {
  const auto rows = read_csv(p);
  const std::string name = p.filename().string();
  if (rows.empty()) throw Error(ErrorCode::SchemaMismatch, name + ": missing header row");
  std::vector<std::string> header = rows[0];
  const auto width = static_cast<Eigen::Index>(header.size());
  if (static_cast<int>(rows.size()) - 1 != expected_rows) {
    throw Error(ErrorCode::SchemaMismatch, name + ": expected " + std::to_string(expected_rows) + " data rows, found " +
                                               std::to_string(rows.size() - 1));
  }
  Matrix m(expected_rows, width);
  for (int r = 0; r < expected_rows; ++r) {
    const auto& row = rows[r + 1];
    if (static_cast<Eigen::Index>(row.size()) != width) {
      throw Error(ErrorCode::SchemaMismatch, name + " row " + std::to_string(r + 2) + ": expected " +
                                                 std::to_string(width) + " columns, found " + std::to_string(row.size()));
    }
    for (Eigen::Index c = 0; c < width; ++c) m(r, c) = parse_double(row[c], name);
  }
  return {std::move(header), std::move(m)};
}

void write_table(const std::filesystem::path& p, const std::vector<std::string>& header, const Matrix& m) {
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out += ',';
    out += header[c];
  }
  out += '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  write_file(p, out);
}

}  // namespace mtgrr::io
