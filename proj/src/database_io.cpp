#include <sstream>

#include "io_util.hpp"
#include "pbdw/errors.hpp"
#include "pbdw/manifold.hpp"

namespace pbdw {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kColumns[] = {"t", "HR", "s", "T_sys", "u0", "eta"};

}  // namespace

void save_database(const SnapshotDatabase& db, const fs::path& dir) {
  if (dir.empty()) {
    throw IoError("save_database: empty path");
  }
  if (db.snapshots.empty()) {
    throw ValidationError("save_database: database holds no snapshots");
  }
  const Index n = db.grid.dofs();
  detail::ensure_directory(dir);

  json manifest;
  manifest["version"] = kDatabaseFormatVersion;
  manifest["N"] = n;
  manifest["grid"] = {{"L", db.grid.axial_stations},
                      {"C", db.grid.cross_points},
                      {"beam_angle", db.grid.beam_angle}};
  manifest["weights"] = {{"kind", "uniform"}, {"value", 1.0 / static_cast<double>(db.grid.points_per_segment())}};
  manifest["count"] = db.snapshots.size();
  manifest["seed"] = db.seed;
  manifest["columns"] = json::array();
  for (const char* c : kColumns) {
    manifest["columns"].push_back(c);
  }
  detail::write_json(dir / "manifest.json", manifest);

  std::string csv = "t,HR,s,T_sys,u0,eta\n";
  std::vector<double> payload;
  payload.reserve(db.snapshots.size() * static_cast<std::size_t>(n));
  for (const auto& s : db.snapshots) {
    if (s.coeffs.size() != n) {
      throw DimensionError("save_database: snapshot length differs from the grid");
    }
    const auto& p = s.params;
    for (double v : {p.time, p.heart_rate, p.skew, p.systole, p.inlet_speed}) {
      csv += detail::format_double(v);
      csv += ',';
    }
    csv += detail::format_double(p.resistance_ratio);
    csv += '\n';
    payload.insert(payload.end(), s.coeffs.data(), s.coeffs.data() + n);
  }
  detail::write_text(dir / "params.csv", csv);
  detail::write_f64(dir / "snapshots.f64", payload);
}

SnapshotDatabase load_database(const fs::path& dir) {
  if (dir.empty()) {
    throw IoError("load_database: empty path");
  }
  if (!fs::is_directory(dir)) {
    throw IoError("load_database: " + dir.string() + " is not a directory");
  }
  const json manifest = detail::read_json(dir / "manifest.json");

  SnapshotDatabase db;
  std::size_t count = 0;
  Index n = 0;
  try {
    const int version = manifest.at("version").get<int>();
    if (version != kDatabaseFormatVersion) {
      throw IntegrityError("load_database: unsupported format version " + std::to_string(version));
    }
    db.grid.axial_stations = manifest.at("grid").at("L").get<int>();
    db.grid.cross_points = manifest.at("grid").at("C").get<int>();
    db.grid.beam_angle = manifest.at("grid").at("beam_angle").get<double>();
    db.seed = manifest.at("seed").get<std::uint64_t>();
    count = manifest.at("count").get<std::size_t>();
    n = manifest.at("N").get<Index>();
    if (manifest.at("weights").at("kind").get<std::string>() != "uniform") {
      throw IntegrityError("load_database: unknown weights descriptor");
    }
    std::vector<std::string> cols = manifest.at("columns").get<std::vector<std::string>>();
    if (cols != std::vector<std::string>(std::begin(kColumns), std::end(kColumns))) {
      throw IntegrityError("load_database: unexpected parameter column order");
    }
  } catch (const json::exception& e) {
    throw IntegrityError("load_database: corrupt manifest (" + std::string(e.what()) + ")");
  }
  try {
    db.grid.validate();
  } catch (const ValidationError& e) {
    throw IntegrityError(std::string("load_database: ") + e.what());
  }
  if (n != db.grid.dofs()) {
    throw IntegrityError("load_database: N disagrees with the grid");
  }
  if (count == 0) {
    throw IntegrityError("load_database: empty database");
  }
  db.space = grid_space(db.grid);

  std::istringstream csv(detail::read_text(dir / "params.csv"));
  std::string line;
  if (!std::getline(csv, line) || line != "t,HR,s,T_sys,u0,eta") {
    throw IntegrityError("load_database: params.csv header mismatch");
  }
  std::vector<ParameterPoint> params;
  while (std::getline(csv, line)) {
    if (line.empty()) {
      continue;
    }
    const auto f = detail::split_csv_line(line);
    if (f.size() != 6) {
      throw IntegrityError("load_database: params.csv row " + std::to_string(params.size()) +
                           " has " + std::to_string(f.size()) + " fields");
    }
    ParameterPoint p;
    p.time = detail::parse_double(f[0], "params.csv");
    p.heart_rate = detail::parse_double(f[1], "params.csv");
    p.skew = detail::parse_double(f[2], "params.csv");
    p.systole = detail::parse_double(f[3], "params.csv");
    p.inlet_speed = detail::parse_double(f[4], "params.csv");
    p.resistance_ratio = detail::parse_double(f[5], "params.csv");
    params.push_back(p);
  }
  if (params.size() != count) {
    throw IntegrityError("load_database: manifest count " + std::to_string(count) +
                         " but params.csv has " + std::to_string(params.size()) + " rows");
  }

  const auto payload = detail::read_f64(dir / "snapshots.f64",
                                        static_cast<long long>(count) * static_cast<long long>(n));
  db.snapshots.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    db.snapshots[k].params = params[k];
    db.snapshots[k].coeffs = Eigen::Map<const Vector>(payload.data() + k * static_cast<std::size_t>(n), n);
  }
  return db;
}

}  // namespace pbdw
