#pragma once

// Small text helpers shared by the dataset, graph and report writers.

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtgrr/common.hpp"

namespace mtgrr::io {

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::string_view content);

bool is_blank(std::string_view line);
bool looks_numeric(std::string_view field);
std::vector<std::string> split_csv_line(std::string_view line);
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p);

double parse_double(std::string_view field, const std::string& context);
/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

/// Header row plus exactly `expected_rows` numeric rows.
std::pair<std::vector<std::string>, Matrix> read_table(const std::filesystem::path& p, int expected_rows);
void write_table(const std::filesystem::path& p, const std::vector<std::string>& header, const Matrix& m);

}  // namespace mtgrr::io
