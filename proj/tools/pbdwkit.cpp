// pbdwkit: generate snapshot databases, build reduced bases, reconstruct fields
// from observations and benchmark the estimators.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pbdw/bench.hpp"
#include "pbdw/errors.hpp"
#include "pbdw/estimator.hpp"
#include "pbdw/manifold.hpp"
#include "pbdw/measurement.hpp"
#include "pbdw/parallel.hpp"
#include "pbdw/reduced.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pbdw;

namespace {

struct Common {
  std::string config;
  int threads = 0;
  std::string workdir = ".";
  bool force = false;
};

struct MeasurementArgs {
  std::string mode = "cfi";
  std::string footprint = "common";
  std::string block = "2,2";
  double beam_angle_deg = 60.0;
};

struct GenerateArgs {
  int patients = 0;
  int samples = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string health = "all";
  int grid_l = 8;
  int grid_c = 16;
  double beam_angle_deg = 60.0;
  std::string hr = "48:120";
  std::string skew = "0:0.2";
  std::string tsys = "0.2863:0.3182";
  std::string u0 = "17:20";
  std::string eta = "0.05:0.2,0.5:1.5,5:20";
};

struct BasisArgs {
  std::string db;
  std::string out;
  std::string kind = "pod";
  int n_max = 30;
  bool center = false;
  double tau = 0.0;
  double delta_hr = 0.0;
  bool strict = false;
};

struct ReconstructArgs {
  std::string basis;
  std::string cells;
  std::string dict;
  std::string method = "auto";
  int n = 0;
  std::string target_db;
  int index = -1;
  std::string obs;
  double t = std::numeric_limits<double>::quiet_NaN();
  double hr = std::numeric_limits<double>::quiet_NaN();
  double tau = 0.0;
  double delta_hr = 0.0;
  int grid_l = 8;
  int grid_c = 16;
  std::string out;
  bool timing = false;
  MeasurementArgs meas;
};

struct BenchArgs {
  std::string train;
  std::string test;
  std::string out;
  std::string methods = "POD-lin,P-POD-aff,P-Greedy-aff,P-DB-aff";
  std::string n_grid = "1:32";
  double tau = 0.05;
  double delta_hr = 36.0;
  bool timing = false;
  bool strict_coverage = false;
  int qoi_patients = 10;
  std::uint64_t qoi_seed = 1001;
  int qoi_n = 30;
  std::string qoi_sick = "high";
  MeasurementArgs meas;
};

fs::path resolve(const Common& c, const std::string& p) {
  if (p.empty()) {
    throw ValidationError("missing path argument");
  }
  const fs::path path(p);
  return path.is_absolute() ? path : fs::path(c.workdir) / path;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    if (!item.empty()) {
      out.push_back(item);
    }
  }
  return out;
}

double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) {
      throw std::invalid_argument(s);
    }
    return v;
  } catch (const std::exception&) {
    throw ValidationError("cannot parse '" + s + "' as a number");
  }
}

Interval parse_interval(const std::string& s) {
  const auto parts = split(s, ':');
  if (parts.size() != 2) {
    throw ValidationError("interval '" + s + "' must be lo:hi");
  }
  return {to_double(parts[0]), to_double(parts[1])};
}

std::vector<Index> parse_n_grid(const std::string& s) {
  std::vector<Index> out;
  for (const auto& item : split(s, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() == 1) {
      out.push_back(static_cast<Index>(to_double(parts[0])));
    } else if (parts.size() == 2 || parts.size() == 3) {
      const auto lo = static_cast<Index>(to_double(parts[0]));
      const auto hi = static_cast<Index>(to_double(parts[1]));
      const auto step = parts.size() == 3 ? static_cast<Index>(to_double(parts[2])) : Index{1};
      if (step < 1 || lo > hi) {
        throw ValidationError("n grid range '" + item + "' is empty");
      }
      for (Index n = lo; n <= hi; n += step) {
        out.push_back(n);
      }
    } else {
      throw ValidationError("n grid item '" + item + "' must be n, lo:hi or lo:hi:step");
    }
  }
  if (out.empty()) {
    throw ValidationError("empty n grid");
  }
  return out;
}

std::pair<int, int> parse_block(const std::string& s) {
  const auto parts = split(s, ',');
  if (parts.size() != 2) {
    throw ValidationError("block '" + s + "' must be axial,cross");
  }
  return {static_cast<int>(to_double(parts[0])), static_cast<int>(to_double(parts[1]))};
}

double degrees(double deg) { return deg * std::numbers::pi / 180.0; }

MeasurementPtr build_measurement(const MeasurementArgs& a, const GridConfig& grid, const SpacePtr& space) {
  const auto [ba, bc] = parse_block(a.block);
  const VoxelPartition vox = build_voxels(grid, parse_region(a.footprint), ba, bc);
  const double angle = degrees(a.beam_angle_deg);
  return parse_mode(a.mode) == ImagingMode::vfi ? vfi_space(vox, angle, space) : cfi_space(vox, angle, space);
}

void add_measurement_options(CLI::App* app, MeasurementArgs& a) {
  app->add_option("--mode", a.mode, "Imaging mode: cfi or vfi")->capture_default_str();
  app->add_option("--footprint", a.footprint, "Image footprint: common or full")->capture_default_str();
  app->add_option("--block", a.block, "Voxel block size as axial,cross")->capture_default_str();
  app->add_option("--beam-angle-deg", a.beam_angle_deg, "Beam angle from the axial direction")
      ->capture_default_str();
}

void add_common_options(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON file of option values; command-line flags override it");
  app->add_option("--threads", c.threads, "Worker threads (default: PBDWKIT_THREADS or all cores)");
  app->add_option("--workdir", c.workdir, "Base directory for relative paths")->capture_default_str();
  app->add_flag("--force", c.force, "Overwrite non-empty output directories");
}

// Refuses to write into a non-empty directory unless --force is given.
void prepare_output_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_empty(dir, ec) && !force) {
    throw ValidationError("output " + dir.string() + " exists and is not empty (use --force)");
  }
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
}

std::string format17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Every option of the subcommand with its effective value.
json resolved_config(const CLI::App* app, int threads) {
  json out;
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") {
      continue;
    }
    const std::string name = opt->get_lnames().front();
    if (opt->get_expected_min() == 0) {
      out[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      out[name] = opt->results().back();
    } else {
      out[name] = opt->get_default_str();
    }
  }
  out["subcommand"] = app->get_name();
  out["threads_resolved"] = threads;
  return out;
}

void write_json_file(const fs::path& file, const json& j) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + file.string());
  }
  out << j.dump(2) << "\n";
}

// Turns a JSON config object into flags placed ahead of the user's own, so that
// explicit flags (parsed later, last value wins) override the file.
std::vector<std::string> config_arguments(const fs::path& file, const std::string& subcommand) {
  std::ifstream in(file);
  if (!in) {
    throw IoError("cannot open config " + file.string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config " + file.string() + ": " + e.what());
  }
  if (!j.is_object()) {
    throw ValidationError("config " + file.string() + " must hold a JSON object");
  }
  if (j.contains(subcommand) && j[subcommand].is_object()) {
    j = j[subcommand];
  }
  std::vector<std::string> args;
  for (const auto& [key, value] : j.items()) {
    if (key == "config") {
      continue;
    }
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) {
        args.push_back(flag);
      }
    } else if (value.is_string()) {
      args.push_back(flag);
      args.push_back(value.get<std::string>());
    } else if (value.is_number_integer()) {
      args.push_back(flag);
      args.push_back(std::to_string(value.get<long long>()));
    } else if (value.is_number()) {
      args.push_back(flag);
      args.push_back(format17(value.get<double>()));
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) {
        joined += (joined.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
      }
      args.push_back(flag);
      args.push_back(joined);
    } else if (value.is_object() && (key == "generate" || key == "basis" || key == "reconstruct" || key == "bench")) {
      continue;
    } else {
      throw ValidationError("config key '" + key + "' has an unsupported value type");
    }
  }
  return args;
}

// --- generate -----------------------------------------------------------------

int run_generate(const Common& c, const GenerateArgs& a, const CLI::App* app) {
  ParameterRanges ranges;
  ranges.heart_rate = parse_interval(a.hr);
  ranges.skew = parse_interval(a.skew);
  ranges.systole = parse_interval(a.tsys);
  ranges.inlet_speed = parse_interval(a.u0);
  ranges.resistance_ratio.clear();
  for (const auto& item : split(a.eta, ',')) {
    ranges.resistance_ratio.push_back(parse_interval(item));
  }
  ranges.validate();
  GridConfig grid{a.grid_l, a.grid_c, degrees(a.beam_angle_deg)};
  grid.validate();
  const HealthFilter filter = parse_health_filter(a.health);
  const int threads = resolve_threads(c.threads);

  const fs::path out = resolve(c, a.out);
  prepare_output_dir(out, c.force);
  const SnapshotDatabase db = sample_database(ranges, a.patients, a.samples, grid, a.seed, filter, threads);
  save_database(db, out);
  write_json_file(out / "run_config.json", resolved_config(app, threads));
  std::cout << "generated " << db.size() << " snapshots in " << out.string() << "\n";
  return 0;
}

// --- basis --------------------------------------------------------------------

ReducedBasis build_one(const Matrix& cols, const SpacePtr& space, const std::string& kind, Index n_max,
                       bool center) {
  if (kind == "pod") {
    return pod(cols, space, n_max, center);
  }
  if (kind == "greedy") {
    return strong_greedy(cols, space, n_max);
  }
  throw ValidationError("unknown basis kind '" + kind + "' (expected pod|greedy)");
}

int run_basis(const Common& c, const BasisArgs& a, const CLI::App* app) {
  if (a.n_max < 1) {
    throw ValidationError("--n-max must be at least 1");
  }
  const SnapshotDatabase db = load_database(resolve(c, a.db));
  const fs::path out = resolve(c, a.out);
  const bool partitioned = a.tau > 0.0 || a.delta_hr > 0.0;
  const int threads = resolve_threads(c.threads);

  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  json index;
  std::optional<Partition> part;
  if (partitioned) {
    if (!(a.tau > 0.0 && a.delta_hr > 0.0)) {
      throw ValidationError("partitioned bases need both --tau and --delta-hr");
    }
    part = partition_database(db, a.tau, a.delta_hr);
    for (const auto& [key, members] : part->cells) {
      groups.emplace_back("cell_" + std::to_string(key.time) + "_" + std::to_string(key.hr), members);
    }
    index["tau"] = a.tau;
    index["delta_hr"] = a.delta_hr;
  } else {
    std::vector<std::size_t> all(db.size());
    for (std::size_t k = 0; k < all.size(); ++k) {
      all[k] = k;
    }
    groups.emplace_back("", all);
  }

  std::vector<std::string> capped;
  for (const auto& [name, members] : groups) {
    if (static_cast<std::size_t>(a.n_max) > members.size()) {
      capped.push_back((name.empty() ? std::string("global") : name) + " (" + std::to_string(members.size()) +
                       " snapshots)");
    }
  }
  for (const auto& msg : capped) {
    std::cerr << "warning: n_max " << a.n_max << " capped for " << msg << "\n";
  }
  if (a.strict && !capped.empty()) {
    throw ValidationError("--strict: n_max exceeds the snapshot count of " + std::to_string(capped.size()) +
                          " group(s)");
  }

  prepare_output_dir(out, c.force);
  const bool center = partitioned ? true : a.center;
  std::vector<std::optional<ReducedBasis>> built(groups.size());
  parallel_for(groups.size(), threads, [&](std::size_t g) {
    const Matrix cols = db.matrix(groups[g].second);
    const Index cap = std::min<Index>(a.n_max, cols.cols());
    ReducedBasis b = build_one(cols, db.space, a.kind, cap, center);
    b.source = groups[g].first.empty() ? "global" : groups[g].first;
    built[g] = std::move(b);
  });
  json cells = json::array();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const fs::path dir = groups[g].first.empty() ? out : out / groups[g].first;
    save_basis(*built[g], dir);
    if (partitioned) {
      const auto key = std::next(part->cells.begin(), static_cast<long>(g))->first;
      cells.push_back({{"time", key.time},
                       {"hr", key.hr},
                       {"dir", groups[g].first},
                       {"snapshots", groups[g].second.size()},
                       {"n", built[g]->size()}});
    }
  }
  if (partitioned) {
    index["cells"] = cells;
    write_json_file(out / "cells.json", index);
  }
  write_json_file(out / "run_config.json", resolved_config(app, threads));
  std::cout << "wrote " << groups.size() << " basis(es) to " << out.string() << "\n";
  return 0;
}

// --- reconstruct ----------------------------------------------------------------

int run_reconstruct(const Common& c, const ReconstructArgs& a, const CLI::App* app) {
  const int sources = !a.basis.empty() + !a.cells.empty() + !a.dict.empty();
  if (sources != 1) {
    throw ValidationError("give exactly one of --basis, --cells or --dict");
  }
  GridConfig grid{a.grid_l, a.grid_c, degrees(a.meas.beam_angle_deg)};
  std::optional<Snapshot> target;
  if (!a.target_db.empty()) {
    const SnapshotDatabase tdb = load_database(resolve(c, a.target_db));
    if (a.index < 0 || static_cast<std::size_t>(a.index) >= tdb.size()) {
      throw ValidationError("--index out of range for the target database");
    }
    target = tdb.snapshots[static_cast<std::size_t>(a.index)];
    grid = tdb.grid;
  }
  const SpacePtr space = grid_space(grid);
  const MeasurementPtr meas = build_measurement(a.meas, grid, space);

  Observation obs;
  if (target) {
    obs = observe(meas, *target);
  } else if (!a.obs.empty()) {
    obs = load_observation(resolve(c, a.obs), meas);
  } else {
    throw ValidationError("give --target-db with --index, or --obs");
  }
  const double t = target ? target->params.time : a.t;
  const double hr = target ? target->params.heart_rate : a.hr;

  Reconstruction rec;
  const auto t0 = std::chrono::steady_clock::now();
  if (!a.basis.empty()) {
    ReducedBasis b = load_basis(resolve(c, a.basis), space);
    if (a.n > 0) {
      b = b.prefix(std::min<Index>(a.n, b.size()));
    }
    const PbdwOperator op = PbdwOperator::fit(std::move(b), meas);
    const bool affine = a.method == "affine" || (a.method == "auto" && op.has_nominal());
    if (a.method != "auto" && a.method != "affine" && a.method != "linear") {
      throw ValidationError("--method must be auto, linear or affine");
    }
    rec = affine ? affine_apply(op, obs) : pbdw_apply(op, obs);
  } else if (!a.cells.empty()) {
    if (!std::isfinite(t) || !std::isfinite(hr)) {
      throw ValidationError("partitioned reconstruction needs --t and --hr (or a target snapshot)");
    }
    const fs::path dir = resolve(c, a.cells);
    std::ifstream in(dir / "cells.json");
    if (!in) {
      throw IoError("missing " + (dir / "cells.json").string());
    }
    json index;
    try {
      in >> index;
    } catch (const json::exception& e) {
      throw IntegrityError("cells.json: " + std::string(e.what()));
    }
    PartitionedModel model{Partition(index.at("tau").get<double>(), index.at("delta_hr").get<double>()), {}};
    for (const auto& cell : index.at("cells")) {
      const CellKey key{cell.at("time").get<int>(), cell.at("hr").get<int>()};
      ReducedBasis b = load_basis(dir / cell.at("dir").get<std::string>(), space);
      if (a.n > 0) {
        b = b.prefix(std::min<Index>(a.n, b.size()));
      }
      model.partition.cells[key] = {};
      model.operators.emplace(key, PbdwOperator::fit(std::move(b), meas));
    }
    rec = partitioned_apply(model, t, hr, obs);
  } else {
    const SnapshotDatabase ddb = load_database(resolve(c, a.dict));
    if (a.n < 1) {
      throw ValidationError("--dict needs --n");
    }
    std::vector<std::size_t> members(ddb.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
      members[k] = k;
    }
    if (a.tau > 0.0 || a.delta_hr > 0.0) {
      const Partition part = partition_database(ddb, a.tau, a.delta_hr);
      const Dispatch d = dispatch_point(part, t, hr, false);
      members = part.cells.at(d.cell);
    }
    const Matrix cols = ddb.matrix(members);
    const OmpDictionary dict = build_omp_dictionary(cols, nominal_state(cols), meas);
    rec = data_driven_apply(dict, obs, std::min<Index>(a.n, std::min(meas->m(), dict.elements.cols())));
  }
  const double us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();

  const fs::path stem = resolve(c, a.out);
  const fs::path sidecar = stem.string() + ".json";
  if (fs::exists(sidecar) && !c.force) {
    throw ValidationError("output " + sidecar.string() + " exists (use --force)");
  }
  save_reconstruction(rec, stem, a.timing ? std::optional<double>(us) : std::nullopt);
  write_json_file(stem.string() + ".config.json", resolved_config(app, resolve_threads(c.threads)));
  std::cout << "method " << rec.method << "  n " << rec.n << "  beta " << format17(rec.beta_used)
            << "  correction_norm " << format17(rec.correction_norm);
  if (target) {
    std::cout << "  rel_error " << format17(rel_error(*space, target->coeffs, rec.u_star));
  }
  std::cout << "\n";
  return 0;
}

// --- bench --------------------------------------------------------------------

json db_descriptor(const fs::path& path, const SnapshotDatabase& db) {
  return {{"path", path.lexically_normal().generic_string()}, {"seed", db.seed}, {"snapshots", db.size()}};
}

int run_bench(const Common& c, const BenchArgs& a, const CLI::App* app) {
  const fs::path train_path = resolve(c, a.train);
  const fs::path test_path = resolve(c, a.test);
  const SnapshotDatabase train = load_database(train_path);
  const SnapshotDatabase test = load_database(test_path);
  if (!(train.grid == test.grid)) {
    throw ValidationError("train and test databases use different grids");
  }
  const int threads = resolve_threads(c.threads);
  const MeasurementPtr meas = build_measurement(a.meas, train.grid, train.space);

  SweepConfig cfg;
  cfg.methods.clear();
  for (const auto& m : split(a.methods, ',')) {
    cfg.methods.push_back(parse_method(m));
  }
  cfg.n_grid = parse_n_grid(a.n_grid);
  cfg.tau = a.tau;
  cfg.delta_hr = a.delta_hr;
  cfg.threads = threads;
  cfg.timing = a.timing;
  cfg.nearest_fallback = !a.strict_coverage;

  const fs::path out = resolve(c, a.out);
  prepare_output_dir(out, c.force);
  const auto reports = sweep(train, test, meas, cfg);
  write_sweep_csv(reports, out / "sweep.csv");
  write_per_snapshot_csv(reports, out / "per_snapshot.csv");

  std::vector<std::string> failures;
  json methods = json::object();
  for (const auto& rep : reports) {
    json m;
    for (std::size_t i = 0; i < rep.n_values.size(); ++i) {
      if (rep.e_av[i] > rep.e_wc[i]) {
        failures.push_back(to_string(rep.method) + ": e_av > e_wc at n = " + std::to_string(rep.n_values[i]));
      }
    }
    if (rep.max_consistency > 1e-10) {
      failures.push_back(to_string(rep.method) + ": measurement consistency " + format17(rep.max_consistency));
    }
    if (rep.bound_violations > 0) {
      failures.push_back(to_string(rep.method) + ": " + std::to_string(rep.bound_violations) +
                         " reconstructions exceed the a-priori bound");
    }
    const auto n_star = rep.first_n_below(1e-2);
    m["n_for_e_av_1e-2"] = n_star ? json(*n_star) : json(nullptr);
    m["best_n_e_av"] = rep.best_n_av;
    m["best_n_e_wc"] = rep.best_n_wc;
    m["max_consistency"] = rep.max_consistency;
    m["bound_checks"] = rep.bound_checks;
    m["bound_violations"] = rep.bound_violations;
    m["coverage_fallbacks"] = rep.coverage_fallbacks;
    m["capped"] = rep.capped;
    m["beta_fallbacks"] = rep.beta_fallbacks;
    methods[to_string(rep.method)] = m;
  }

  // Method ordering in the n needed for e_av <= 1e-2 (reported, not enforced).
  json ordering = nullptr;
  const auto n_of = [&](Method target) -> std::optional<Index> {
    for (const auto& rep : reports) {
      if (rep.method == target) {
        const auto n = rep.first_n_below(1e-2);
        return n ? n : std::optional<Index>(std::numeric_limits<Index>::max());
      }
    }
    return std::nullopt;
  };
  if (auto pp = n_of(Method::ppod_aff), pd = n_of(Method::pdb_aff), pl = n_of(Method::pod_lin); pp && pd && pl) {
    ordering = *pp <= *pd && *pd <= *pl;
  }

  // Projection quality: VFI must dominate CFI on every test snapshot.
  const auto [ba, bc] = parse_block(a.meas.block);
  const VoxelPartition vox = build_voxels(train.grid, parse_region(a.meas.footprint), ba, bc);
  const MeasurementPtr cfi = cfi_space(vox, degrees(a.meas.beam_angle_deg), train.space);
  const MeasurementPtr vfi = vfi_space(vox, degrees(a.meas.beam_angle_deg), train.space);
  long vfi_violations = 0;
  for (const auto& s : test.snapshots) {
    const double ec = norm(*train.space, s.coeffs - project(cfi->representers(), s.coeffs).projection);
    const double ev = norm(*train.space, s.coeffs - project(vfi->representers(), s.coeffs).projection);
    vfi_violations += ev > ec + 1e-12 ? 1 : 0;
  }
  if (vfi_violations > 0) {
    failures.push_back("VFI projection error exceeds CFI on " + std::to_string(vfi_violations) + " snapshots");
  }

  json qoi = nullptr;
  if (a.qoi_patients > 0) {
    ParameterRanges healthy_ranges;
    ParameterRanges sick_ranges;
    if (a.qoi_sick == "high") {
      sick_ranges.resistance_ratio = {{5.0, 20.0}};
    } else if (a.qoi_sick != "all") {
      throw ValidationError("--qoi-sick must be high or all");
    }
    const MeasurementPtr qmeas = cfi_space(build_voxels(train.grid, Region::common, ba, bc),
                                           degrees(a.meas.beam_angle_deg), train.space);
    const auto healthy =
        peak_systole_snapshots(healthy_ranges, HealthFilter::healthy, a.qoi_patients, a.qoi_seed, train.grid);
    const auto sick =
        peak_systole_snapshots(sick_ranges, HealthFilter::sick, a.qoi_patients, a.qoi_seed + 1, train.grid);
    const Index qn = std::min<Index>(a.qoi_n, qmeas->m());
    const QoiReport rep = qoi_run(train, qmeas, healthy, sick, qn, a.tau, a.delta_hr, threads);
    write_qoi_csv(rep, out / "qoi.csv");
    int unsafe = 0;
    for (const auto& p : rep.patients) {
      if (p.label_true == Health::sick && p.r_rec < p.r_true - 0.05 * (1.0 + p.r_true)) {
        ++unsafe;
      }
    }
    if (unsafe > 0) {
      failures.push_back("QoI: " + std::to_string(unsafe) + " sick patients with underestimated flow ratio");
    }
    if (rep.max_flux_identity_error > 1e-10) {
      failures.push_back("QoI: generator flux identity off by " + format17(rep.max_flux_identity_error));
    }
    qoi = {{"n", rep.n},
           {"r_star", rep.r_star},
           {"true_positives", rep.true_positives},
           {"false_positives", rep.false_positives},
           {"true_negatives", rep.true_negatives},
           {"false_negatives", rep.false_negatives},
           {"sick_group", a.qoi_sick},
           {"seed", a.qoi_seed},
           {"sign_safety_violations", unsafe}};
  }

  json manifest;
  manifest["inputs"] = {{"train", db_descriptor(fs::path(a.train), train)},
                        {"test", db_descriptor(fs::path(a.test), test)},
                        {"measurement", meas->describe()},
                        {"tau", a.tau},
                        {"delta_hr", a.delta_hr},
                        {"n_grid", cfg.n_grid},
                        {"methods", split(a.methods, ',')},
                        {"nearest_fallback", cfg.nearest_fallback}};
  manifest["outputs"] = {{"sweep", "sweep.csv"},
                         {"per_snapshot", "per_snapshot.csv"},
                         {"qoi", a.qoi_patients > 0 ? json("qoi.csv") : json(nullptr)}};
  manifest["methods"] = methods;
  manifest["ordering_ppod_le_pdb_le_podlin"] = ordering;
  manifest["vfi_projection_violations"] = vfi_violations;
  manifest["qoi"] = qoi;
  manifest["invariant_failures"] = failures;
  write_json_file(out / "bench_manifest.json", manifest);
  write_json_file(out / "run_config.json", resolved_config(app, threads));

  for (const auto& rep : reports) {
    const auto n_star = rep.first_n_below(1e-2);
    std::cout << to_string(rep.method) << ": n(e_av<=1e-2) = " << (n_star ? std::to_string(*n_star) : "none")
              << ", best n = " << rep.best_n_av << "\n";
  }
  if (!failures.empty()) {
    for (const auto& f : failures) {
      std::cerr << "invariant failed: " << f << "\n";
    }
    return exit_code(ErrorKind::invariant);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced-order state estimation from partial velocity measurements"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common common;
  GenerateArgs gen;
  BasisArgs bas;
  ReconstructArgs rec;
  BenchArgs ben;

  auto* g = app.add_subcommand("generate", "Sample a snapshot database");
  add_common_options(g, common);
  g->add_option("--patients", gen.patients, "Number of patients")->required();
  g->add_option("--samples", gen.samples, "Snapshots per cardiac cycle")->required();
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_option("--out", gen.out, "Output database directory")->required();
  g->add_option("--health", gen.health, "Patient filter: all, healthy or sick")->capture_default_str();
  g->add_option("--grid-L", gen.grid_l, "Axial stations per segment")->capture_default_str();
  g->add_option("--grid-C", gen.grid_c, "Cross-section points")->capture_default_str();
  g->add_option("--beam-angle-deg", gen.beam_angle_deg, "Beam angle stored in the grid")->capture_default_str();
  g->add_option("--hr", gen.hr, "Heart-rate range lo:hi")->capture_default_str();
  g->add_option("--skew", gen.skew, "Inlet skew range lo:hi")->capture_default_str();
  g->add_option("--tsys", gen.tsys, "Systole duration range lo:hi")->capture_default_str();
  g->add_option("--u0", gen.u0, "Inlet speed range lo:hi")->capture_default_str();
  g->add_option("--eta", gen.eta, "Resistance-ratio intervals lo:hi,lo:hi,...")->capture_default_str();

  auto* b = app.add_subcommand("basis", "Build a global or per-cell reduced basis");
  add_common_options(b, common);
  b->add_option("--db", bas.db, "Snapshot database directory")->required();
  b->add_option("--out", bas.out, "Output directory")->required();
  b->add_option("--kind", bas.kind, "pod or greedy")->capture_default_str();
  b->add_option("--n-max", bas.n_max, "Maximum number of modes")->capture_default_str();
  b->add_flag("--center", bas.center, "Subtract and store the mean (always on for partitioned bases)");
  b->add_option("--tau", bas.tau, "Phase half-width of the partition windows (s)");
  b->add_option("--delta-hr", bas.delta_hr, "Heart-rate half-width of the partition windows (bpm)");
  b->add_flag("--strict", bas.strict, "Fail instead of capping n_max at a group's snapshot count");

  auto* r = app.add_subcommand("reconstruct", "Reconstruct a field from an observation");
  add_common_options(r, common);
  r->add_option("--basis", rec.basis, "Basis directory (linear or affine PBDW)");
  r->add_option("--cells", rec.cells, "Per-cell basis directory with cells.json (partitioned PBDW)");
  r->add_option("--dict", rec.dict, "Dictionary database (data-driven PBDW)");
  r->add_option("--method", rec.method, "auto, linear or affine (with --basis)")->capture_default_str();
  r->add_option("--n", rec.n, "Reduced dimension (default: full basis)");
  r->add_option("--target-db", rec.target_db, "Database holding the target snapshot");
  r->add_option("--index", rec.index, "Target snapshot index");
  r->add_option("--obs", rec.obs, "Observation CSV (voxel_index,component,value)");
  r->add_option("--t", rec.t, "Acquisition time (s) for cell dispatch");
  r->add_option("--hr", rec.hr, "Heart rate (bpm) for cell dispatch");
  r->add_option("--tau", rec.tau, "Restrict the dictionary to the cell of this partition");
  r->add_option("--delta-hr", rec.delta_hr, "Restrict the dictionary to the cell of this partition");
  r->add_option("--grid-L", rec.grid_l, "Axial stations (when no target database is given)")->capture_default_str();
  r->add_option("--grid-C", rec.grid_c, "Cross points (when no target database is given)")->capture_default_str();
  r->add_option("--out", rec.out, "Output stem; writes <stem>.f64 and <stem>.json")->required();
  r->add_flag("--timing", rec.timing, "Record the apply time in the sidecar");
  add_measurement_options(r, rec.meas);

  auto* e = app.add_subcommand("bench", "Sweep reconstruction error against the reduced dimension");
  add_common_options(e, common);
  e->add_option("--train", ben.train, "Training database")->required();
  e->add_option("--test", ben.test, "Test database")->required();
  e->add_option("--out", ben.out, "Report directory")->required();
  e->add_option("--methods", ben.methods, "Comma-separated method list")->capture_default_str();
  e->add_option("--n-grid", ben.n_grid, "Dimensions: n, lo:hi or lo:hi:step, comma-separated")->capture_default_str();
  e->add_option("--tau", ben.tau, "Phase half-width of the partition windows (s)")->capture_default_str();
  e->add_option("--delta-hr", ben.delta_hr, "Heart-rate half-width of the partition windows (bpm)")
      ->capture_default_str();
  e->add_flag("--timing", ben.timing, "Measure apply times (apply_us_p50 is nan otherwise)");
  e->add_flag("--strict-coverage", ben.strict_coverage, "Fail on test points outside every populated window");
  e->add_option("--qoi-patients", ben.qoi_patients, "Patients per group for the flow-ratio study (0 disables)")
      ->capture_default_str();
  e->add_option("--qoi-seed", ben.qoi_seed, "Seed of the flow-ratio patient groups")->capture_default_str();
  e->add_option("--qoi-n", ben.qoi_n, "Reduced dimension for the flow-ratio study")->capture_default_str();
  e->add_option("--qoi-sick", ben.qoi_sick, "Sick group: high (eta in [5,20]) or all")->capture_default_str();
  add_measurement_options(e, ben.meas);

  // Splice config-file flags in front of the command-line flags.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] == "--config") {
        const auto extra = config_arguments(args[i + 1], args.front());
        args.insert(args.begin() + 1, extra.begin(), extra.end());
        break;
      }
    }
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code(err.kind());
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& pe) {
    app.exit(pe);
    return exit_code(ErrorKind::validation);
  }

  try {
    if (*g) return run_generate(common, gen, g);
    if (*b) return run_basis(common, bas, b);
    if (*r) return run_reconstruct(common, rec, r);
    if (*e) return run_bench(common, ben, e);
  } catch (const IllPosedError& err) {
    std::cerr << "error: " << err.what() << "\n"
              << "hint: try --n below " << err.dimension() << ", --footprint full or --mode vfi\n";
    return exit_code(err.kind());
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code(err.kind());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
