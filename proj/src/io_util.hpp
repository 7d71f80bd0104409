#pragma once

// Shared file helpers: %.17g formatting, little-endian float64 blobs and
// whole-file text reads. Internal to the library.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace pbdw::detail {

std::string format_double(double v);

/// Throws IoError for an empty path or when the directory cannot be created.
void ensure_directory(const std::filesystem::path& dir);

void write_f64(const std::filesystem::path& file, const std::vector<double>& values);
/// Reads a little-endian float64 blob; IntegrityError when the byte count is not
/// a multiple of 8 or differs from expected_count (unless expected_count < 0).
std::vector<double> read_f64(const std::filesystem::path& file, long long expected_count = -1);

void write_text(const std::filesystem::path& file, const std::string& text);
std::string read_text(const std::filesystem::path& file);

/// Pretty-printed with sorted keys (nlohmann::json objects are ordered maps).
void write_json(const std::filesystem::path& file, const nlohmann::json& j);
/// IntegrityError on malformed content.
nlohmann::json read_json(const std::filesystem::path& file);

std::vector<std::string> split_csv_line(const std::string& line);
double parse_double(const std::string& field, const std::string& context);

}  // namespace pbdw::detail
