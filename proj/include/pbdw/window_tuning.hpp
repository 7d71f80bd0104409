#pragma once

#include <vector>

#include "pbdw/manifold.hpp"
#include "pbdw/measurement.hpp"

namespace pbdw {

struct WindowCandidate {
  double delta_hr = 0.0;
  double tau = 0.0;
};

struct TuneResult {
  WindowCandidate best;
  std::vector<double> scores;  // mean relative test error per candidate, +inf if unusable
};

/// Partitioned affine POD at dimension min(n_fixed, cell size) for every
/// candidate, scored by mean relative error over the test set. A candidate that
/// leaves a test point (or a training snapshot) outside every populated window
/// scores +inf. Ties go to the smaller tau, then the smaller delta_HR.
TuneResult tune_windows(const SnapshotDatabase& train, const SnapshotDatabase& test,
                        const std::vector<WindowCandidate>& candidates, Index n_fixed,
                        const MeasurementPtr& meas, int threads = 0);

}  // namespace pbdw
