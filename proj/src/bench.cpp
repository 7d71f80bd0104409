#include "pbdw/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "pbdw/errors.hpp"
#include "pbdw/parallel.hpp"

namespace pbdw {

namespace {

constexpr double kBoundSlack = 1e-8;

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

double fold_phase(double t, double heart_rate) {
  const double cycle = 60.0 / heart_rate;
  double phase = std::fmod(t, cycle);
  if (phase < 0.0) {
    phase += cycle;
  }
  return phase;
}

// Per-(n, snapshot) outcome, reduced in index order after the parallel pass.
struct Slot {
  double error = 0.0;
  double consistency = 0.0;
  double bound_excess = 0.0;
  double beta = 1.0;
  double us = nan();
  bool capped = false;
  bool beta_fallback = false;
};

// Checks one reconstruction against the measurement-consistency and a-priori
// bound properties.
Slot evaluate(const DiscreteSpace& space, const MeasurementSpace& meas, const Vector& u,
              const Vector& w, const Reconstruction& rec, const ReducedBasis& used) {
  Slot s;
  const double unorm = norm(space, u);
  s.error = norm(space, u - rec.u_star) / unorm;
  const double wnorm = w.norm();
  const double gap = (observe(meas, rec.u_star) - w).norm();
  s.consistency = wnorm > 0.0 ? gap / wnorm : gap;
  Vector centered = used.nominal ? Vector(u - *used.nominal) : u;
  const Vector proj = project(used.modes.prefix(rec.n), centered).projection;
  const double dist = norm(space, centered - proj);
  s.bound_excess = s.error - (dist / (rec.beta_used * unorm) + kBoundSlack);
  s.beta = rec.beta_used;
  return s;
}

template <class F>
double time_us(bool enabled, F&& f) {
  if (!enabled) {
    f();
    return nan();
  }
  const auto t0 = std::chrono::steady_clock::now();
  f();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::micro>(t1 - t0).count();
}

double median(std::vector<double> v) {
  if (v.empty() || std::isnan(v.front())) {
    return nan();
  }
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// Largest dimension <= n whose fit clears the beta floor.
struct Fitted {
  PbdwOperator op;
  bool capped;
  bool beta_fallback;
};

Fitted fit_down(const ReducedBasis& basis, const MeasurementPtr& meas, Index n) {
  const Index start = std::min(n, basis.size());
  double last_beta = 0.0;
  for (Index k = start; k >= 1; --k) {
    try {
      return {PbdwOperator::fit(basis.prefix(k), meas), start < n, k < start};
    } catch (const IllPosedError& e) {
      last_beta = e.beta();
    }
  }
  throw IllPosedError(static_cast<std::size_t>(n), last_beta,
                      "no dimension up to " + std::to_string(start) + " clears the stability floor for basis " +
                          basis.source);
}

ReducedBasis mean_span(const Matrix& cols, const SpacePtr& space, const std::string& source) {
  Vector mean = nominal_state(cols);
  return ReducedBasis{orthonormalize(Matrix(mean), space), std::nullopt, mean, Provenance::pod, source, {-1}, true};
}

SweepReport aggregate(Method method, const std::vector<Index>& n_grid,
                      const std::vector<std::vector<Slot>>& slots) {
  SweepReport rep;
  rep.method = method;
  rep.n_values = n_grid;
  for (std::size_t a = 0; a < n_grid.size(); ++a) {
    const auto& row = slots[a];
    double sum = 0.0;
    double worst = 0.0;
    double beta_min = std::numeric_limits<double>::infinity();
    int capped = 0;
    int fallbacks = 0;
    std::vector<double> errs;
    std::vector<double> times;
    for (const Slot& s : row) {
      sum += s.error;
      worst = std::max(worst, s.error);
      beta_min = std::min(beta_min, s.beta);
      capped += s.capped ? 1 : 0;
      fallbacks += s.beta_fallback ? 1 : 0;
      errs.push_back(s.error);
      times.push_back(s.us);
      rep.max_consistency = std::max(rep.max_consistency, s.consistency);
      rep.bound_checks += 1;
      rep.bound_violations += s.bound_excess > 0.0 ? 1 : 0;
      rep.max_bound_excess = std::max(rep.max_bound_excess, s.bound_excess);
    }
    rep.e_av.push_back(sum / static_cast<double>(row.size()));
    rep.e_wc.push_back(worst);
    rep.beta_min.push_back(beta_min);
    rep.apply_us_p50.push_back(median(times));
    rep.errors.push_back(std::move(errs));
    rep.capped.push_back(capped);
    rep.beta_fallbacks.push_back(fallbacks);
  }
  const auto argmin = [&](const std::vector<double>& v) {
    return n_grid[static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin())];
  };
  rep.best_n_av = argmin(rep.e_av);
  rep.best_n_wc = argmin(rep.e_wc);
  return rep;
}

}  // namespace

double rel_error(const DiscreteSpace& space, const Vector& u, const Vector& u_star) {
  const double unorm = norm(space, u);
  if (!(unorm > 0.0)) {
    throw ValidationError("rel_error: truth has zero norm");
  }
  if (u_star.size() != u.size()) {
    throw DimensionError("rel_error: length mismatch");
  }
  return norm(space, u - u_star) / unorm;
}

Vector time_error(const DiscreteSpace& space, const Matrix& truth, const Matrix& recon, double cycle) {
  if (truth.cols() == 0 || truth.cols() != recon.cols() || truth.rows() != recon.rows()) {
    throw DimensionError("time_error: truth and reconstructions must have matching shapes");
  }
  if (!(cycle > 0.0)) {
    throw ValidationError("time_error: cycle length must be positive");
  }
  const double dt = cycle / static_cast<double>(truth.cols());
  double energy = 0.0;
  for (Index k = 0; k < truth.cols(); ++k) {
    const double nk = norm(space, truth.col(k));
    energy += nk * nk * dt;
  }
  if (!(energy > 0.0)) {
    throw ValidationError("time_error: zero cycle energy");
  }
  const double denom = std::sqrt(energy);
  Vector out(truth.cols());
  for (Index k = 0; k < truth.cols(); ++k) {
    out[k] = norm(space, truth.col(k) - recon.col(k)) / denom;
  }
  return out;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::ppod_aff:
      return "P-POD-aff";
    case Method::pgreedy_aff:
      return "P-Greedy-aff";
    case Method::pdb_aff:
      return "P-DB-aff";
    default:
      return "POD-lin";
  }
}

Method parse_method(const std::string& s) {
  for (Method m : all_methods()) {
    if (s == to_string(m)) {
      return m;
    }
  }
  throw ValidationError("unknown method '" + s + "' (expected POD-lin|P-POD-aff|P-Greedy-aff|P-DB-aff)");
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> all{Method::pod_lin, Method::ppod_aff, Method::pgreedy_aff,
                                       Method::pdb_aff};
  return all;
}

std::map<CellKey, ReducedBasis> build_cell_bases(const SnapshotDatabase& train, const Partition& part,
                                                 Index n_max, Method method, int threads) {
  if (method != Method::ppod_aff && method != Method::pgreedy_aff) {
    throw ValidationError("build_cell_bases: only P-POD-aff and P-Greedy-aff build per-cell bases");
  }
  std::vector<CellKey> keys;
  for (const auto& [key, members] : part.cells) {
    keys.push_back(key);
  }
  std::vector<std::optional<ReducedBasis>> built(keys.size());
  parallel_for(keys.size(), resolve_threads(threads), [&](std::size_t c) {
    const Matrix cols = train.matrix(part.cells.at(keys[c]));
    const Index cap = std::min<Index>(n_max, cols.cols());
    const std::string source = to_string(keys[c]);
    try {
      ReducedBasis b = method == Method::ppod_aff ? pod(cols, train.space, cap, true)
                                                  : strong_greedy(cols, train.space, cap);
      b.source = source;
      built[c] = std::move(b);
    } catch (const RankZeroError&) {
      built[c] = mean_span(cols, train.space, source);
    }
  });
  std::map<CellKey, ReducedBasis> out;
  for (std::size_t c = 0; c < keys.size(); ++c) {
    out.emplace(keys[c], std::move(*built[c]));
  }
  return out;
}

CellFit fit_cells(const Partition& part, const std::map<CellKey, ReducedBasis>& bases,
                  const MeasurementPtr& meas, Index n) {
  CellFit out{PartitionedModel{part, {}}, 0, 0, std::numeric_limits<double>::infinity()};
  for (const auto& [key, basis] : bases) {
    Fitted f = fit_down(basis, meas, n);
    out.capped_cells += f.capped ? 1 : 0;
    out.beta_fallbacks += f.beta_fallback ? 1 : 0;
    out.beta_min = std::min(out.beta_min, f.op.beta());
    out.model.operators.emplace(key, std::move(f.op));
  }
  return out;
}

Dispatch dispatch_point(const Partition& part, double t, double heart_rate, bool allow_nearest) {
  if (!std::isfinite(t) || !(heart_rate > 0.0)) {
    throw ValidationError("dispatch: invalid (t, HR)");
  }
  const double phase = fold_phase(t, heart_rate);
  if (auto key = part.locate(phase, heart_rate)) {
    return {*key, true};
  }
  const auto nearest = part.nearest(phase, heart_rate);
  if (allow_nearest && nearest) {
    return {*nearest, false};
  }
  throw CoverageError("no populated cell contains (phase " + std::to_string(phase) + " s, HR " +
                      std::to_string(heart_rate) + "); nearest cell is " +
                      (nearest ? to_string(*nearest) : std::string("none")));
}

std::optional<Index> SweepReport::first_n_below(double tol) const {
  for (std::size_t a = 0; a < n_values.size(); ++a) {
    if (e_av[a] <= tol) {
      return n_values[a];
    }
  }
  return std::nullopt;
}

double SweepReport::e_av_at(Index n) const {
  for (std::size_t a = 0; a < n_values.size(); ++a) {
    if (n_values[a] == n) {
      return e_av[a];
    }
  }
  throw ValidationError("e_av_at: n = " + std::to_string(n) + " is not on the sweep grid");
}

std::vector<SweepReport> sweep(const SnapshotDatabase& train, const SnapshotDatabase& test,
                               const MeasurementPtr& meas, const SweepConfig& config) {
  if (config.n_grid.empty()) {
    throw ValidationError("sweep: empty n grid");
  }
  for (Index n : config.n_grid) {
    if (n < 1 || n > meas->m()) {
      throw ValidationError("sweep: n = " + std::to_string(n) + " outside [1, m = " +
                            std::to_string(meas->m()) + "]");
    }
  }
  if (!compatible(*train.space, *meas->space()) || !compatible(*test.space, *meas->space())) {
    throw IncompatibleSpaceError("sweep: databases and measurements live on different spaces");
  }
  const int threads = resolve_threads(config.threads);
  const Index n_max = *std::max_element(config.n_grid.begin(), config.n_grid.end());
  const std::size_t tests = test.size();
  const std::size_t grid = config.n_grid.size();
  const DiscreteSpace& space = *meas->space();
  const Matrix test_obs = observe_columns(*meas, test.matrix());
  const auto obs_of = [&](std::size_t j) { return Observation{test_obs.col(static_cast<Index>(j)), meas}; };

  std::vector<SweepReport> reports;
  std::optional<Partition> part;
  std::vector<Dispatch> dispatch;
  int coverage_fallbacks = 0;
  const auto ensure_partition = [&] {
    if (part) {
      return;
    }
    part = partition_database(train, config.tau, config.delta_hr);
    for (std::size_t j = 0; j < tests; ++j) {
      const auto& y = test.snapshots[j].params;
      dispatch.push_back(dispatch_point(*part, y.time, y.heart_rate, config.nearest_fallback));
      coverage_fallbacks += dispatch.back().covered ? 0 : 1;
    }
  };

  for (Method method : config.methods) {
    std::vector<std::vector<Slot>> slots(grid, std::vector<Slot>(tests));
    SweepReport rep;
    if (method == Method::pod_lin) {
      const ReducedBasis global =
          pod(train.matrix(), train.space, std::min<Index>(n_max, static_cast<Index>(train.size())), false);
      for (std::size_t a = 0; a < grid; ++a) {
        const Fitted f = fit_down(global, meas, config.n_grid[a]);
        parallel_for(tests, threads, [&](std::size_t j) {
          const Vector w = test_obs.col(static_cast<Index>(j));
          Reconstruction rec;
          const double us = time_us(config.timing, [&] { rec = pbdw_apply_values(f.op, w); });
          Slot s = evaluate(space, *meas, test.snapshots[j].coeffs, w, rec, f.op.basis());
          s.us = us;
          s.capped = f.capped;
          s.beta_fallback = f.beta_fallback;
          slots[a][j] = s;
        });
      }
      rep = aggregate(method, config.n_grid, slots);
    } else if (method == Method::ppod_aff || method == Method::pgreedy_aff) {
      ensure_partition();
      const auto bases = build_cell_bases(train, *part, n_max, method, threads);
      for (std::size_t a = 0; a < grid; ++a) {
        const Index n = config.n_grid[a];
        const CellFit fit = fit_cells(*part, bases, meas, n);
        parallel_for(tests, threads, [&](std::size_t j) {
          const PbdwOperator& op = fit.model.operators.at(dispatch[j].cell);
          const Observation obs = obs_of(j);
          Reconstruction rec;
          const double us = time_us(config.timing, [&] { rec = affine_apply(op, obs); });
          Slot s = evaluate(space, *meas, test.snapshots[j].coeffs, obs.values, rec, op.basis());
          s.us = us;
          s.capped = rec.n < n;
          s.beta_fallback = rec.n < std::min(n, bases.at(dispatch[j].cell).size());
          slots[a][j] = s;
        });
        // Partitioned methods report the smallest beta over all fitted cells.
        for (auto& s : slots[a]) {
          s.beta = fit.beta_min;
        }
      }
      rep = aggregate(method, config.n_grid, slots);
    } else {
      ensure_partition();
      std::vector<CellKey> keys;
      for (const auto& [key, members] : part->cells) {
        keys.push_back(key);
      }
      std::vector<std::optional<OmpDictionary>> built(keys.size());
      parallel_for(keys.size(), threads, [&](std::size_t c) {
        const Matrix cols = train.matrix(part->cells.at(keys[c]));
        try {
          built[c] = build_omp_dictionary(cols, nominal_state(cols), meas);
        } catch (const RankZeroError&) {
          // Every member equals the mean; such a cell is left without a dictionary.
        }
      });
      std::map<CellKey, const OmpDictionary*> dicts;
      for (std::size_t c = 0; c < keys.size(); ++c) {
        if (built[c]) {
          dicts.emplace(keys[c], &*built[c]);
        }
      }
      parallel_for(tests, threads, [&](std::size_t j) {
        const auto it = dicts.find(dispatch[j].cell);
        if (it == dicts.end()) {
          throw CoverageError("P-DB-aff: cell " + to_string(dispatch[j].cell) + " has no usable dictionary");
        }
        const OmpDictionary& dict = *it->second;
        const Observation obs = obs_of(j);
        const Index n_sel = std::min({n_max, meas->m(), dict.elements.cols()});
        const OmpSelection selection = omp_select(dict, obs, n_sel);
        for (std::size_t a = 0; a < grid; ++a) {
          const Index n = config.n_grid[a];
          Reconstruction rec = data_driven_apply(selection, obs, n);
          double us = nan();
          if (config.timing) {
            us = time_us(true, [&] { rec = data_driven_apply(dict, obs, n); });
          }
          Slot s = evaluate(space, *meas, test.snapshots[j].coeffs, obs.values, rec, selection.basis);
          s.us = us;
          s.capped = rec.n < n;
          s.beta_fallback = rec.n < std::min(n, selection.basis.size());
          slots[a][j] = s;
        }
      });
      rep = aggregate(method, config.n_grid, slots);
    }
    if (method != Method::pod_lin) {
      rep.coverage_fallbacks = coverage_fallbacks;
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

std::vector<double> beta_curve(const ReducedBasis& basis, const MeasurementSpace& meas,
                               const std::vector<Index>& n_grid) {
  std::vector<double> out;
  for (Index n : n_grid) {
    if (n < 1 || n > basis.size()) {
      throw ValidationError("beta_curve: n = " + std::to_string(n) + " outside [1, " +
                            std::to_string(basis.size()) + "]");
    }
    out.push_back(inf_sup(basis.modes.prefix(n), meas.representers()));
  }
  return out;
}

double flow_ratio(const Vector& u, const GridConfig& grid) {
  if (u.size() != grid.dofs()) {
    throw DimensionError("flow_ratio: field length differs from the grid");
  }
  const double w = 1.0 / static_cast<double>(grid.points_per_segment());
  const int k = grid.axial_stations - 1;
  double q1 = 0.0;
  double q2 = 0.0;
  for (int j = 0; j < grid.cross_points; ++j) {
    q1 += w * u[grid.dof(Segment::branch1, k, j, Component::axial)];
    q2 += w * u[grid.dof(Segment::branch2, k, j, Component::axial)];
  }
  if (q1 <= 1e-14) {
    throw ValidationError("flow_ratio: degenerate branch-1 outlet flux " + std::to_string(q1));
  }
  return q2 / q1;
}

double threshold(const std::vector<double>& healthy, const std::vector<double>& sick) {
  if (healthy.empty() || sick.empty()) {
    throw ValidationError("threshold: both healthy and sick groups must be non-empty");
  }
  return 0.5 * (*std::min_element(sick.begin(), sick.end()) +
                *std::max_element(healthy.begin(), healthy.end()));
}

std::vector<Snapshot> peak_systole_snapshots(const ParameterRanges& ranges, HealthFilter filter,
                                             int patients, std::uint64_t seed, const GridConfig& grid) {
  if (patients < 1) {
    throw ValidationError("peak_systole_snapshots: need at least one patient");
  }
  ranges.validate();
  std::vector<Snapshot> out;
  for (int p = 0; p < patients; ++p) {
    ParameterPoint y = draw_patient(ranges, filter, seed, static_cast<std::uint64_t>(p));
    y.time = 0.5 * y.systole;
    out.push_back(synthesize_snapshot(y, grid));
  }
  return out;
}

QoiReport qoi_run(const SnapshotDatabase& train, const MeasurementPtr& meas,
                  const std::vector<Snapshot>& healthy, const std::vector<Snapshot>& sick, Index n,
                  double tau, double delta_hr, int threads) {
  const Partition part = partition_database(train, tau, delta_hr);
  const auto bases = build_cell_bases(train, part, n, Method::ppod_aff, threads);
  const CellFit fit = fit_cells(part, bases, meas, n);

  QoiReport rep;
  rep.n = n;
  std::vector<const Snapshot*> all;
  for (const auto& s : healthy) all.push_back(&s);
  for (const auto& s : sick) all.push_back(&s);
  rep.patients.resize(all.size());
  parallel_for(all.size(), resolve_threads(threads), [&](std::size_t i) {
    const Snapshot& s = *all[i];
    const Dispatch d = dispatch_point(part, s.params.time, s.params.heart_rate, true);
    const Reconstruction rec = affine_apply(fit.model.operators.at(d.cell), observe(meas, s));
    QoiPatient& p = rep.patients[i];
    p.patient = i;
    p.eta = s.params.resistance_ratio;
    p.r_true = flow_ratio(s.coeffs, train.grid);
    p.r_rec = flow_ratio(rec.u_star, train.grid);
    p.label_true = label_health(s.params);
  });

  std::vector<double> r_healthy;
  std::vector<double> r_sick;
  for (const auto& p : rep.patients) {
    (p.label_true == Health::healthy ? r_healthy : r_sick).push_back(p.r_rec);
    rep.max_flux_identity_error = std::max(rep.max_flux_identity_error, std::abs(p.r_true - p.eta) / p.eta);
  }
  rep.r_star = threshold(r_healthy, r_sick);
  for (auto& p : rep.patients) {
    p.label_pred = p.r_rec > rep.r_star ? Health::sick : Health::healthy;
    const bool pos = p.label_pred == Health::sick;
    const bool truth = p.label_true == Health::sick;
    rep.true_positives += pos && truth;
    rep.false_positives += pos && !truth;
    rep.true_negatives += !pos && !truth;
    rep.false_negatives += !pos && truth;
  }
  return rep;
}

}  // namespace pbdw
