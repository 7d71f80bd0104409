#include "io_util.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "pbdw/errors.hpp"

namespace pbdw::detail {

namespace fs = std::filesystem;

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const int len = std::snprintf(buf.data(), buf.size(), "%.17g", v);
  return std::string(buf.data(), static_cast<std::size_t>(len));
}

void ensure_directory(const fs::path& dir) {
  if (dir.empty()) {
    throw IoError("empty output path");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  }
}

namespace {

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) {
      out = (out << 8) | ((v >> (8 * i)) & 0xffu);
    }
    return out;
  }
  return v;
}

}  // namespace

void write_f64(const fs::path& file, const std::vector<double>& values) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + file.string() + " for writing");
  }
  std::vector<char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint64_t le = to_little(std::bit_cast<std::uint64_t>(values[i]));
    std::memcpy(bytes.data() + 8 * i, &le, 8);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failed for " + file.string());
  }
}

std::vector<double> read_f64(const fs::path& file, long long expected_count) {
  std::error_code ec;
  if (!fs::is_regular_file(file, ec)) {
    throw IoError("missing file " + file.string());
  }
  const auto size = fs::file_size(file, ec);
  if (ec) {
    throw IoError("cannot stat " + file.string());
  }
  if (size % 8 != 0) {
    throw IntegrityError(file.string() + ": size " + std::to_string(size) +
                         " is not a whole number of float64 values");
  }
  const auto count = static_cast<long long>(size / 8);
  if (expected_count >= 0 && count != expected_count) {
    throw IntegrityError(file.string() + ": holds " + std::to_string(count) +
                         " values, manifest implies " + std::to_string(expected_count));
  }
  std::ifstream in(file, std::ios::binary);
  std::vector<char> bytes(size);
  in.read(bytes.data(), static_cast<std::streamsize>(size));
  if (!in) {
    throw IoError("read failed for " + file.string());
  }
  std::vector<double> values(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t le = 0;
    std::memcpy(&le, bytes.data() + 8 * i, 8);
    values[i] = std::bit_cast<double>(to_little(le));
  }
  return values;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + file.string() + " for writing");
  }
  out << text;
  if (!out) {
    throw IoError("write failed for " + file.string());
  }
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + file.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& file, const nlohmann::json& j) {
  write_text(file, j.dump(2) + "\n");
}

nlohmann::json read_json(const fs::path& file) {
  const std::string text = read_text(file);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(file.string() + ": malformed JSON (" + e.what() + ")");
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

double parse_double(const std::string& field, const std::string& context) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) {
    if (field == "nan") {
      return std::numeric_limits<double>::quiet_NaN();
    }
    throw IntegrityError(context + ": cannot parse '" + field + "' as a number");
  }
  return v;
}

}  // namespace pbdw::detail
