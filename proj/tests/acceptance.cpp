// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "pbdw/bench.hpp"
#include "pbdw/errors.hpp"
#include "pbdw/estimator.hpp"
#include "pbdw/manifold.hpp"
#include "pbdw/measurement.hpp"
#include "pbdw/reduced.hpp"

#ifndef PBDWKIT_CLI
#error "PBDWKIT_CLI must name the command-line tool"
#endif

using namespace pbdw;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body, double budget_s = 0.0) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0.0 && secs > budget_s) {
    out.pass = false;
    out.detail += "; over the " + std::to_string(static_cast<int>(budget_s)) + " s budget";
  }
  char timing[32];
  std::snprintf(timing, sizeof timing, "%.1f s", secs);
  std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << out.detail << " ["
            << timing << "]" << std::endl;
  failures += out.pass ? 0 : 1;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double rel(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// Default synthetic setup shared by several criteria.
struct Setup {
  GridConfig grid;
  SnapshotDatabase train;
  SnapshotDatabase test;
  MeasurementPtr cfi;
  MeasurementPtr vfi;
  std::vector<SweepReport> reports;
  double sweep_seconds = 0.0;
};

Setup& setup() {
  static Setup s = [] {
    Setup out;
    out.train = sample_database(ParameterRanges{}, 50, 40, out.grid, 1, HealthFilter::all);
    out.test = sample_database(ParameterRanges{}, 20, 10, out.grid, 2, HealthFilter::all);
    const auto vox = build_voxels(out.grid, Region::common, 2, 2);
    out.cfi = cfi_space(vox, out.grid.beam_angle, out.train.space);
    out.vfi = vfi_space(vox, out.grid.beam_angle, out.train.space);
    return out;
  }();
  return s;
}

const std::vector<SweepReport>& default_sweep() {
  Setup& s = setup();
  if (s.reports.empty()) {
    SweepConfig cfg;
    for (Index n = 1; n <= 32; ++n) {
      cfg.n_grid.push_back(n);
    }
    const auto t0 = std::chrono::steady_clock::now();
    s.reports = sweep(s.train, s.test, s.cfi, cfg);
    s.sweep_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return s.reports;
}

const SweepReport& report_for(Method m) {
  for (const auto& r : default_sweep()) {
    if (r.method == m) {
      return r;
    }
  }
  throw std::runtime_error("method missing from the sweep");
}

Outcome pbdw_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<Index> dn(30, 200);
  std::uniform_int_distribution<Index> dm(2, 20);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const Index n_dim = dn(rng);
    const Index m = dm(rng);
    const Index n = std::uniform_int_distribution<Index>(1, std::min<Index>(10, m))(rng);
    const Vector w = inst % 2 == 0 ? Vector(Vector::Ones(n_dim)) : oracle::random_weights(n_dim, rng);
    const auto space = make_space(w);
    const Matrix reps = oracle::orthonormal_span(w, oracle::random_matrix(n_dim, m, rng));
    const auto meas = oracle::generic_measurement(space, reps);
    ReducedBasis b{Basis(space, oracle::orthonormal_span(w, oracle::random_matrix(n_dim, n, rng)), true)};
    b.nominal = oracle::random_vector(n_dim, rng);
    const PbdwOperator op = PbdwOperator::fit(b, meas);

    const Vector u = oracle::random_vector(n_dim, rng);
    const Observation obs = observe(meas, u);
    Vector data(m);
    Vector shift(m);
    for (Index i = 0; i < m; ++i) {
      data[i] = static_cast<double>(oracle::inner(w, reps.col(i), u));
      shift[i] = static_cast<double>(oracle::inner(w, reps.col(i), *b.nominal));
    }
    const auto lin_ref = oracle::kkt(w, b.modes.vectors(), reps, data).first;
    const auto aff_ref = Vector(*b.nominal + oracle::kkt(w, b.modes.vectors(), reps, data - shift).first);
    worst = std::max(worst, rel(pbdw_apply(op, obs).u_star, lin_ref));
    worst = std::max(worst, rel(affine_apply(op, obs).u_star, aff_ref));
  }
  return {worst <= 1e-8, "50 instances, worst relative gap to the saddle-point solution " + sci(worst)};
}

// Reconstructions through the public API for one method, in test order.
std::vector<std::pair<Reconstruction, const ReducedBasis*>> reconstruct_all(Method method, Index n,
                                                                           std::vector<ReducedBasis>& keep) {
  Setup& s = setup();
  std::vector<std::pair<Reconstruction, const ReducedBasis*>> out;
  keep.clear();
  keep.reserve(s.test.size() + 1);
  if (method == Method::pod_lin) {
    // Same rule as the sweep: step down in n while beta is below the floor.
    const ReducedBasis global = pod(s.train.matrix(), s.train.space, 32, false);
    std::optional<PbdwOperator> fitted;
    for (Index k = n; k >= 1 && !fitted; --k) {
      try {
        fitted = PbdwOperator::fit(global.prefix(k), s.cfi);
      } catch (const IllPosedError&) {
      }
    }
    if (!fitted) {
      throw std::runtime_error("POD-lin: no stable dimension");
    }
    keep.push_back(fitted->basis());
    const PbdwOperator& op = *fitted;
    for (const auto& u : s.test.snapshots) {
      out.emplace_back(pbdw_apply(op, observe(s.cfi, u)), &keep.back());
    }
    return out;
  }
  const Partition part = partition_database(s.train, 0.05, 36.0);
  if (method == Method::pdb_aff) {
    for (const auto& u : s.test.snapshots) {
      const Dispatch d = dispatch_point(part, u.params.time, u.params.heart_rate, true);
      const Matrix cols = s.train.matrix(part.cells.at(d.cell));
      const OmpDictionary dict = build_omp_dictionary(cols, nominal_state(cols), s.cfi);
      const Observation obs = observe(s.cfi, u);
      const OmpSelection sel = omp_select(dict, obs, std::min<Index>(n, dict.elements.cols()));
      keep.push_back(sel.basis);
      out.emplace_back(data_driven_apply(sel, obs, n), &keep.back());
    }
    return out;
  }
  const auto bases = build_cell_bases(s.train, part, n, method, 0);
  const CellFit fit = fit_cells(part, bases, s.cfi, n);
  for (const auto& u : s.test.snapshots) {
    const Dispatch d = dispatch_point(part, u.params.time, u.params.heart_rate, true);
    const PbdwOperator& op = fit.model.operators.at(d.cell);
    keep.push_back(op.basis());
    out.emplace_back(affine_apply(op, observe(s.cfi, u)), &keep.back());
  }
  return out;
}

Outcome consistency() {
  Setup& s = setup();
  double sweep_worst = 0.0;
  for (const auto& r : default_sweep()) {
    sweep_worst = std::max(sweep_worst, r.max_consistency);
  }
  // Independent re-check with the voxel quadrature observation.
  const auto vox = build_voxels(s.grid, Region::common, 2, 2);
  double direct_worst = 0.0;
  std::vector<ReducedBasis> keep;
  for (Method m : all_methods()) {
    for (Index n : {4, 10, 32}) {
      const auto recs = reconstruct_all(m, n, keep);
      for (std::size_t j = 0; j < recs.size(); ++j) {
        const Vector& u = s.test.snapshots[j].coeffs;
        const Vector w = oracle::voxel_observation(s.grid, vox.voxels, s.grid.beam_angle, u, s.train.space->weights());
        const Vector ws = oracle::voxel_observation(s.grid, vox.voxels, s.grid.beam_angle, recs[j].first.u_star,
                                                    s.train.space->weights());
        direct_worst = std::max(direct_worst, (ws - w).norm() / w.norm());
      }
    }
  }
  const double worst = std::max(sweep_worst, direct_worst);
  return {worst <= 1e-10, "max ||observe(u*) - w|| / ||w||: sweep " + sci(sweep_worst) + ", direct quadrature re-check " +
                              sci(direct_worst)};
}

Outcome exact_recovery() {
  Setup& s = setup();
  std::mt19937_64 rng(103);
  const Partition part = partition_database(s.train, 0.05, 36.0);
  const auto bases = build_cell_bases(s.train, part, 32, Method::ppod_aff, 0);
  double worst = 0.0;
  int cases = 0;
  int skipped = 0;
  for (const auto& [key, basis] : bases) {
    for (Index n : {1, 3, 6, 10, 16, 24, 32}) {
      if (n > basis.size()) {
        continue;
      }
      const ReducedBasis b = basis.prefix(n);
      const double beta = inf_sup(b.modes, s.cfi->representers());
      if (beta <= 1e-6) {
        ++skipped;
        continue;
      }
      const PbdwOperator op = PbdwOperator::fit(b, s.cfi);
      for (int trial = 0; trial < 3; ++trial) {
        Vector c = oracle::random_vector(n, rng);
        if (b.singular_values) {
          c = c.cwiseProduct(*b.singular_values) / std::sqrt(static_cast<double>(part.cells.at(key).size()));
        }
        const Vector u = *b.nominal + b.modes.vectors() * c;
        const Reconstruction rec = affine_apply(op, observe(s.cfi, u));
        worst = std::max(worst, rel_error(*s.train.space, u, rec.u_star));
        ++cases;
      }
    }
  }
  return {cases > 0 && worst <= 1e-8, std::to_string(cases) + " targets in ubar + V_n with beta > 1e-6 (" +
                                           std::to_string(skipped) + " (cell, n) pairs below), worst rel_error " +
                                           sci(worst)};
}

Outcome bound_realization() {
  Setup& s = setup();
  const Partition part = partition_database(s.train, 0.05, 36.0);
  const auto bases = build_cell_bases(s.train, part, 20, Method::ppod_aff, 0);
  const Vector& w = s.train.space->weights();
  int pairs = 0;
  int violations = 0;
  double worst_ratio = 0.0;
  for (Index n : {2, 5, 10, 15, 20}) {
    const CellFit fit = fit_cells(part, bases, s.cfi, n);
    for (std::size_t j = 0; j < 100; ++j) {
      const auto& snap = s.test.snapshots[j * 2];
      const Dispatch d = dispatch_point(part, snap.params.time, snap.params.heart_rate, true);
      const PbdwOperator& op = fit.model.operators.at(d.cell);
      const Reconstruction rec = affine_apply(op, observe(s.cfi, snap));
      const Vector centered = snap.coeffs - *op.basis().nominal;
      const Matrix q = oracle::orthonormal_span(w, op.basis().modes.vectors());
      const Vector proj = q * (q.transpose() * w.asDiagonal() * centered);
      const double dist = oracle::norm(w, centered - proj);
      const double unorm = oracle::norm(w, snap.coeffs);
      const double beta = oracle::inf_sup(w, op.basis().modes.vectors(), s.cfi->representers().vectors());
      const double err = oracle::norm(w, snap.coeffs - rec.u_star) / unorm;
      const double bound = dist / (beta * unorm);
      const double excess = err - (bound + 1e-8);
      worst_ratio = std::max(worst_ratio, err / std::max(bound, 1e-300));
      violations += excess > 0.0 ? 1 : 0;
      ++pairs;
    }
  }
  return {pairs == 500 && violations == 0,
          std::to_string(pairs) + " (snapshot, n) pairs, " + std::to_string(violations) +
              " above beta^-1 dist / ||u|| + 1e-8 (largest error / bound " + sci(worst_ratio) + ")"};
}

Outcome beta_properties() {
  Setup& s = setup();
  double max_rise = 0.0;
  bool in_range = true;
  int curves = 0;
  std::vector<Index> grid_n;
  for (Index n = 1; n <= 32; ++n) {
    grid_n.push_back(n);
  }
  const ReducedBasis global = pod(s.train.matrix(), s.train.space, 32, false);
  std::vector<ReducedBasis> bases{global, pod(s.train.matrix(), s.train.space, 32, true)};
  const Partition part = partition_database(s.train, 0.05, 36.0);
  for (auto& [key, b] : build_cell_bases(s.train, part, 32, Method::ppod_aff, 0)) {
    bases.push_back(b);
  }
  for (const auto& b : bases) {
    std::vector<Index> ns;
    for (Index n : grid_n) {
      if (n <= b.size()) {
        ns.push_back(n);
      }
    }
    for (const MeasurementPtr& meas : {s.cfi, s.vfi}) {
      const auto curve = beta_curve(b, *meas, ns);
      for (std::size_t i = 0; i < curve.size(); ++i) {
        in_range = in_range && curve[i] >= 0.0 && curve[i] <= 1.0;
        if (i > 0) {
          max_rise = std::max(max_rise, curve[i] - curve[i - 1]);
        }
      }
      ++curves;
    }
  }
  const auto plane = make_space(Vector::Ones(2));
  double planar = 0.0;
  for (int k = 0; k <= 36; ++k) {
    const double theta = k * std::numbers::pi / 36.0;
    Matrix v(2, 1);
    v << std::cos(theta), std::sin(theta);
    Matrix e(2, 1);
    e << 1.0, 0.0;
    planar = std::max(planar, std::abs(inf_sup(Basis(plane, v, true), Basis(plane, e, true)) - std::abs(std::cos(theta))));
  }
  return {in_range && max_rise <= 1e-12 && planar <= 1e-12,
          std::to_string(curves) + " nested POD curves in [0,1]: " + (in_range ? "yes" : "no") + ", largest rise " +
              sci(max_rise) + ", planar |cos theta| gap " + sci(planar)};
}

Outcome pod_and_omp() {
  std::mt19937_64 rng(106);
  const Vector w = oracle::random_weights(30, rng);
  const auto space = make_space(w);
  const Matrix cols = oracle::random_matrix(30, 10, rng);
  auto ms_error = [&](const Matrix& q) {
    const Matrix p = oracle::projector(w, q);
    double sum = 0.0;
    for (Index k = 0; k < cols.cols(); ++k) {
      const double e = oracle::norm(w, cols.col(k) - p * cols.col(k));
      sum += e * e;
    }
    return sum / static_cast<double>(cols.cols());
  };
  int pod_losses = 0;
  for (Index n : {1, 2, 4, 6}) {
    const double best = ms_error(pod(cols, space, n, false).modes.vectors());
    for (int k = 0; k < 200; ++k) {
      pod_losses += best <= ms_error(oracle::random_matrix(30, n, rng)) ? 0 : 1;
    }
  }

  int omp_mismatch = 0;
  for (int d = 0; d < 20; ++d) {
    const Vector wd = d % 2 ? oracle::random_weights(60, rng) : Vector(Vector::Ones(60));
    const auto sp = make_space(wd);
    const Matrix reps = oracle::orthonormal_span(wd, oracle::random_matrix(60, 16, rng));
    const auto meas = oracle::generic_measurement(sp, reps);
    const Matrix dict = oracle::random_matrix(60, 30, rng);
    const Vector ubar = dict.rowwise().mean();
    Matrix shifted(60, 30);
    for (Index k = 0; k < 30; ++k) {
      const Vector e = dict.col(k) - ubar;
      shifted.col(k) = e / oracle::norm(wd, e);
    }
    const Vector u = oracle::random_vector(60, rng);
    Vector r0(16);
    for (Index i = 0; i < 16; ++i) {
      r0[i] = static_cast<double>(oracle::inner(wd, reps.col(i), u - ubar));
    }
    const OmpSelection sel = omp_select(build_omp_dictionary(dict, ubar, meas), observe(meas, u), 8);
    omp_mismatch += sel.picks == oracle::brute_force_omp(wd, shifted, reps, r0, 8) ? 0 : 1;
  }
  return {pod_losses == 0 && omp_mismatch == 0,
          "POD lost to " + std::to_string(pod_losses) + " of 800 random subspaces; OMP sequence differed on " +
              std::to_string(omp_mismatch) + " of 20 dictionaries"};
}

std::string n_text(const std::optional<Index>& n) { return n ? std::to_string(*n) : std::string("none"); }

Outcome direction_of_effect() {
  default_sweep();
  const auto pp = report_for(Method::ppod_aff).first_n_below(1e-2);
  const auto pd = report_for(Method::pdb_aff).first_n_below(1e-2);
  const auto pl = report_for(Method::pod_lin).first_n_below(1e-2);
  const auto pg = report_for(Method::pgreedy_aff).first_n_below(1e-2);
  const double e_pp = report_for(Method::ppod_aff).e_av_at(10);
  const double e_pl = report_for(Method::pod_lin).e_av_at(10);
  const bool ordered = pp && pd && pl && *pp <= *pd && *pd <= *pl;
  Outcome out{ordered && e_pp < e_pl,
              "n for e_av <= 1e-2: P-POD-aff " + n_text(pp) + ", P-Greedy-aff " + n_text(pg) + ", P-DB-aff " +
                  n_text(pd) + ", POD-lin " + n_text(pl) + "; e_av at n = 10: P-POD-aff " + sci(e_pp) + " vs POD-lin " +
                  sci(e_pl) + "; sweep " + sci(setup().sweep_seconds) + " s"};
  if (setup().sweep_seconds > 300.0) {
    out.pass = false;
  }
  return out;
}

Outcome vfi_refinement() {
  Setup& s = setup();
  int violations = 0;
  double tightest = 1e300;
  for (const auto& u : s.test.snapshots) {
    const double ec = norm(*s.train.space, u.coeffs - project(s.cfi->representers(), u.coeffs).projection);
    const double ev = norm(*s.train.space, u.coeffs - project(s.vfi->representers(), u.coeffs).projection);
    violations += ev <= ec ? 0 : 1;
    tightest = std::min(tightest, ec - ev);
  }
  return {violations == 0, std::to_string(s.test.size()) + " test snapshots, " + std::to_string(violations) +
                               " with VFI error above CFI (smallest gap " + sci(tightest) + ")"};
}

Outcome qoi() {
  Setup& s = setup();
  ParameterRanges high;
  high.resistance_ratio = {{5.0, 20.0}};
  const auto healthy = peak_systole_snapshots(ParameterRanges{}, HealthFilter::healthy, 10, 3, s.grid);
  const auto sick = peak_systole_snapshots(high, HealthFilter::sick, 10, 4, s.grid);
  double identity = 0.0;
  for (const auto* group : {&healthy, &sick}) {
    for (const auto& p : *group) {
      const double eta = p.params.resistance_ratio;
      identity = std::max(identity, std::abs(flow_ratio(p.coeffs, s.grid) - eta) / eta);
    }
  }
  const QoiReport rep = qoi_run(s.train, s.cfi, healthy, sick, 30, 0.05, 36.0, 0);
  return {identity <= 1e-10 && rep.false_negatives == 0 && rep.n == 30,
          "20 patients at n = 30, truth |r - eta| / eta " + sci(identity) + ", r* = " + sci(rep.r_star) +
              ", false negatives " + std::to_string(rep.false_negatives) + ", false positives " +
              std::to_string(rep.false_positives)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return rc;
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "pbdwkit_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = std::string("\"") + PBDWKIT_CLI + "\" ";
  const std::string wd = " --workdir \"" + dir.string() + "\"";
  if (run(cli + "generate --patients 20 --samples 20 --seed 11 --out train" + wd) != 0 ||
      run(cli + "generate --patients 6 --samples 8 --seed 12 --out test" + wd) != 0) {
    return {false, "generate failed"};
  }
  for (int threads : {1, 4}) {
    const std::string cmd = cli + "bench --train train --test test --qoi-patients 4 --out bench" +
                            std::to_string(threads) + " --threads " + std::to_string(threads) + wd;
    if (run(cmd) != 0) {
      return {false, "bench with --threads " + std::to_string(threads) + " failed"};
    }
  }
  std::string detail;
  bool same = true;
  for (const char* f : {"sweep.csv", "per_snapshot.csv", "qoi.csv", "bench_manifest.json"}) {
    const std::string a = slurp(dir / "bench1" / f);
    const std::string b = slurp(dir / "bench4" / f);
    const bool eq = !a.empty() && a == b;
    same = same && eq;
    detail += std::string(detail.empty() ? "" : ", ") + f + (eq ? " identical" : " DIFFERS");
  }
  fs::remove_all(dir);
  return {same, detail};
}

}  // namespace

int main() {
  std::cout << "default setup: 2000 train / 200 test snapshots, N = " << setup().grid.dofs()
            << ", CFI m = " << setup().cfi->m() << std::endl;
  report(1, "PBDW oracle equivalence", pbdw_oracle, 10.0);
  report(2, "measurement consistency", consistency);
  report(3, "exact recovery", exact_recovery);
  report(4, "a-priori bound", bound_realization);
  report(5, "inf-sup properties", beta_properties);
  report(6, "POD optimality and OMP selection", pod_and_omp, 30.0);
  report(7, "method ordering", direction_of_effect);
  report(8, "VFI refinement", vfi_refinement);
  report(9, "flow-ratio classification", qoi, 120.0);
  report(10, "thread-count determinism", determinism);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
