#include "pbdw/window_tuning.hpp"

#include <cmath>
#include <limits>

#include "pbdw/bench.hpp"
#include "pbdw/errors.hpp"
#include "pbdw/parallel.hpp"

namespace pbdw {

namespace {

double score_candidate(const SnapshotDatabase& train, const SnapshotDatabase& test,
                       const WindowCandidate& cand, Index n_fixed, const MeasurementPtr& meas,
                       int threads) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::optional<Partition> part;
  try {
    part = partition_database(train, cand.tau, cand.delta_hr);
  } catch (const CoverageError&) {
    return inf;
  }
  std::vector<CellKey> cells(test.size());
  for (std::size_t j = 0; j < test.size(); ++j) {
    try {
      const auto& y = test.snapshots[j].params;
      cells[j] = dispatch_point(*part, y.time, y.heart_rate, false).cell;
    } catch (const CoverageError&) {
      return inf;
    }
  }
  const auto bases = build_cell_bases(train, *part, n_fixed, Method::ppod_aff, threads);
  const CellFit fit = fit_cells(*part, bases, meas, n_fixed);
  std::vector<double> errors(test.size());
  parallel_for(test.size(), threads, [&](std::size_t j) {
    const auto& u = test.snapshots[j];
    const Reconstruction rec = affine_apply(fit.model.operators.at(cells[j]), observe(meas, u));
    errors[j] = rel_error(*meas->space(), u.coeffs, rec.u_star);
  });
  double sum = 0.0;
  for (double e : errors) {
    sum += e;
  }
  return sum / static_cast<double>(errors.size());
}

}  // namespace

TuneResult tune_windows(const SnapshotDatabase& train, const SnapshotDatabase& test,
                        const std::vector<WindowCandidate>& candidates, Index n_fixed,
                        const MeasurementPtr& meas, int threads) {
  if (candidates.empty()) {
    throw ValidationError("tune_windows: no candidates");
  }
  if (n_fixed < 1 || n_fixed > meas->m()) {
    throw ValidationError("tune_windows: n_fixed must lie in [1, m]");
  }
  if (test.snapshots.empty()) {
    throw ValidationError("tune_windows: empty test set");
  }
  const int workers = resolve_threads(threads);
  TuneResult out;
  std::size_t best = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    out.scores.push_back(score_candidate(train, test, candidates[c], n_fixed, meas, workers));
    const auto& a = candidates[c];
    const auto& b = candidates[best];
    const double sa = out.scores[c];
    const double sb = out.scores[best];
    const bool better = sa < sb || (sa == sb && (a.tau < b.tau || (a.tau == b.tau && a.delta_hr < b.delta_hr)));
    if (c > 0 && better) {
      best = c;
    }
  }
  out.best = candidates[best];
  return out;
}

}  // namespace pbdw
