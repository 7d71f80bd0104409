#include "pbdw/estimator.hpp"

#include <cmath>
#include <limits>

#include "io_util.hpp"
#include "pbdw/errors.hpp"

namespace pbdw {

namespace {

constexpr double kInvisibleTol = 1e-12;
constexpr double kShiftTol = 1e-12;
constexpr double kResidualStopTol = 1e-12;

std::string fmt(double v) { return detail::format_double(v); }

}  // namespace

PbdwOperator::PbdwOperator(ReducedBasis vn, MeasurementPtr wm, Matrix cross, double beta)
    : vn_(std::move(vn)), wm_(std::move(wm)), cross_(std::move(cross)), qr_(cross_), beta_(beta) {
  if (vn_.nominal) {
    nominal_obs_ = observe(*wm_, *vn_.nominal);
  }
}

PbdwOperator PbdwOperator::fit(ReducedBasis vn, MeasurementPtr wm) {
  if (!wm) {
    throw ValidationError("pbdw_fit: null measurement space");
  }
  if (!vn.modes.orthonormal()) {
    throw ContractError("pbdw_fit: reduced basis must be orthonormal");
  }
  if (!compatible(*vn.modes.space(), *wm->space())) {
    throw IncompatibleSpaceError("pbdw_fit: reduced basis and measurements live on different spaces");
  }
  const Index n = vn.size();
  const Index m = wm->m();
  if (n < 1 || n > m) {
    throw ValidationError("pbdw_fit: need 1 <= n <= m (n = " + std::to_string(n) +
                          ", m = " + std::to_string(m) + ")");
  }
  if (vn.nominal && vn.nominal->size() != wm->space()->dim()) {
    throw DimensionError("pbdw_fit: nominal state length differs from N");
  }
  const double beta = inf_sup(vn.modes, wm->representers());
  if (beta <= kBetaFloor) {
    throw IllPosedError(static_cast<std::size_t>(n), beta,
                        "pbdw_fit: beta(V_n, W_m) = " + fmt(beta) + " at n = " + std::to_string(n) +
                            " is below the stability floor; reduce n or enrich the measurements");
  }
  Matrix cross = gram(wm->representers(), vn.modes);
  return PbdwOperator(std::move(vn), std::move(wm), std::move(cross), beta);
}

const Vector& PbdwOperator::nominal_observation() const {
  if (!nominal_obs_) {
    throw ContractError("affine reconstruction requires a nominal state");
  }
  return *nominal_obs_;
}

Reconstruction pbdw_apply_values(const PbdwOperator& op, const Vector& w) {
  if (w.size() != op.wm_->m()) {
    throw DimensionError("pbdw_apply: observation length " + std::to_string(w.size()) +
                         " != m = " + std::to_string(op.wm_->m()));
  }
  Reconstruction rec;
  rec.v_star_coeffs = op.qr_.solve(w);
  const Vector eta = w - op.cross_ * rec.v_star_coeffs;
  rec.u_star = op.vn_.modes.combine(rec.v_star_coeffs) + op.wm_->representers().combine(eta);
  rec.correction_norm = eta.norm();
  rec.beta_used = op.beta_;
  rec.method = "pbdw";
  rec.n = op.n();
  return rec;
}

Reconstruction pbdw_apply(const PbdwOperator& op, const Observation& obs) {
  check_observation(obs, *op.wm_);
  return pbdw_apply_values(op, obs.values);
}

Reconstruction affine_apply(const PbdwOperator& op, const Observation& obs) {
  check_observation(obs, *op.measurement());
  const Vector& wbar = op.nominal_observation();
  Reconstruction rec = pbdw_apply_values(op, obs.values - wbar);
  rec.u_star += *op.basis().nominal;
  rec.method = "affine";
  return rec;
}

CellKey dispatch_cell(const PartitionedModel& model, double t, double heart_rate) {
  if (!std::isfinite(t) || !std::isfinite(heart_rate) || heart_rate <= 0.0) {
    throw ValidationError("dispatch: invalid (t, HR) = (" + fmt(t) + ", " + fmt(heart_rate) + ")");
  }
  const double cycle = 60.0 / heart_rate;
  double phase = std::fmod(t, cycle);
  if (phase < 0.0) {
    phase += cycle;
  }
  const Partition& part = model.partition;
  std::optional<CellKey> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& key : part.windows_containing(phase, heart_rate)) {
    if (!model.operators.contains(key)) {
      continue;
    }
    const double d = part.scaled_distance(key, phase, heart_rate);
    if (d < best_dist) {
      best = key;
      best_dist = d;
    }
  }
  if (best) {
    return *best;
  }
  std::optional<CellKey> nearest;
  double nearest_dist = std::numeric_limits<double>::infinity();
  for (const auto& [key, op] : model.operators) {
    const double d = part.scaled_distance(key, phase, heart_rate);
    if (d < nearest_dist) {
      nearest = key;
      nearest_dist = d;
    }
  }
  throw CoverageError("no populated cell contains (phase " + fmt(phase) + " s, HR " +
                      fmt(heart_rate) + "); nearest cell is " +
                      (nearest ? to_string(*nearest) : std::string("none")));
}

Reconstruction partitioned_apply(const PartitionedModel& model, double t, double heart_rate,
                                 const Observation& obs) {
  const CellKey key = dispatch_cell(model, t, heart_rate);
  Reconstruction rec = affine_apply(model.operators.at(key), obs);
  rec.method = "partitioned" + to_string(key);
  return rec;
}

OmpDictionary build_omp_dictionary(const Matrix& dict, const Vector& nominal, const MeasurementPtr& meas) {
  if (!meas) {
    throw ValidationError("omp: null measurement space");
  }
  const SpacePtr& space = meas->space();
  if (dict.rows() != space->dim() || nominal.size() != space->dim()) {
    throw DimensionError("omp: dictionary or nominal length differs from N");
  }
  OmpDictionary out;
  out.space = space;
  out.meas = meas;
  out.nominal = nominal;
  out.nominal_obs = observe(*meas, nominal);
  out.elements.resize(dict.rows(), dict.cols());
  Index count = 0;
  for (Index k = 0; k < dict.cols(); ++k) {
    const Vector d = dict.col(k) - nominal;
    const double nrm = norm(*space, d);
    if (nrm <= kShiftTol) {
      continue;
    }
    out.elements.col(count++) = d / nrm;
    out.source.push_back(static_cast<std::size_t>(k));
  }
  out.elements.conservativeResize(Eigen::NoChange, count);
  if (count == 0) {
    throw RankZeroError("omp: every dictionary element coincides with the nominal state");
  }
  out.projected = observe_columns(*meas, out.elements);
  out.projected_norms = out.projected.colwise().norm().transpose();
  out.mean_element = out.elements.rowwise().mean();
  out.mean_projected = out.projected.rowwise().mean();
  return out;
}

OmpSelection omp_select(const OmpDictionary& dict, const Observation& obs, Index n) {
  check_observation(obs, *dict.meas);
  const Index k_count = dict.elements.cols();
  const Index m = dict.meas->m();
  if (n < 1 || n > std::min(m, k_count)) {
    throw ValidationError("omp_select: n = " + std::to_string(n) + " must lie in [1, min(m, K)] = [1, " +
                          std::to_string(std::min(m, k_count)) + "]");
  }
  const Vector r0 = obs.values - dict.nominal_obs;
  const double r0_norm = r0.norm();

  Matrix z(m, n);
  Matrix full(dict.space->dim(), n);
  std::vector<long> picks;
  std::vector<bool> taken(static_cast<std::size_t>(k_count), false);
  Index count = 0;

  if (norm(*dict.space, dict.mean_element) > kShiftTol) {
    z.col(0) = dict.mean_projected;
    full.col(0) = dict.mean_element;
    picks.push_back(-1);
    count = 1;
  }

  while (count < n) {
    Vector res = r0;
    if (count > 0) {
      const auto zs = z.leftCols(count);
      const Matrix a = zs.transpose() * zs;
      const Vector g = zs.transpose() * r0;
      const Vector c = a.colPivHouseholderQr().solve(g);
      res -= zs * c;
    }
    if (res.norm() <= kResidualStopTol * r0_norm) {
      break;
    }
    Vector scores = Vector::Constant(k_count, -1.0);
    double best = -1.0;
    for (Index k = 0; k < k_count; ++k) {
      if (taken[static_cast<std::size_t>(k)] || dict.projected_norms[k] <= kInvisibleTol) {
        continue;
      }
      scores[k] = std::abs(res.dot(dict.projected.col(k))) / dict.projected_norms[k];
      best = std::max(best, scores[k]);
    }
    if (best < 0.0) {
      throw SelectionExhaustedError("omp_select: no admissible candidate left after " +
                                    std::to_string(count) + " selections");
    }
    Index pick = 0;
    while (scores[pick] < 0.0 || scores[pick] < best * (1.0 - kTieTolerance)) {
      ++pick;
    }
    taken[static_cast<std::size_t>(pick)] = true;
    z.col(count) = dict.projected.col(pick);
    full.col(count) = dict.elements.col(pick);
    picks.push_back(static_cast<long>(dict.source[static_cast<std::size_t>(pick)]));
    ++count;
  }
  if (count == 0) {
    throw RankZeroError("omp_select: nothing selected (observation equals the nominal one and the shifted mean vanishes)");
  }

  Basis modes = orthonormalize(full.leftCols(count), dict.space);
  ReducedBasis basis{std::move(modes), std::nullopt, dict.nominal, Provenance::omp, "omp", picks, count < n};
  return OmpSelection{std::move(basis), std::move(picks)};
}

Reconstruction data_driven_apply(const OmpSelection& selection, const Observation& obs, Index n) {
  const Index available = std::min(n, selection.basis.size());
  double last_beta = 0.0;
  for (Index k = available; k >= 1; --k) {
    try {
      const PbdwOperator op = PbdwOperator::fit(selection.basis.prefix(k), obs.space);
      Reconstruction rec = affine_apply(op, obs);
      rec.method = k < available ? "data-driven[fallback n=" + std::to_string(k) + "]" : "data-driven";
      return rec;
    } catch (const IllPosedError& e) {
      last_beta = e.beta();
    }
  }
  throw IllPosedError(static_cast<std::size_t>(n), last_beta,
                      "data_driven_apply: no dimension in [1, " + std::to_string(available) +
                          "] clears the stability floor");
}

Reconstruction data_driven_apply(const OmpDictionary& dict, const Observation& obs, Index n) {
  return data_driven_apply(omp_select(dict, obs, n), obs, n);
}

void save_reconstruction(const Reconstruction& rec, const std::filesystem::path& stem,
                         std::optional<double> apply_us) {
  if (stem.empty()) {
    throw IoError("save_reconstruction: empty path");
  }
  if (stem.has_parent_path()) {
    detail::ensure_directory(stem.parent_path());
  }
  detail::write_f64(stem.string() + ".f64",
                    std::vector<double>(rec.u_star.data(), rec.u_star.data() + rec.u_star.size()));
  nlohmann::json side;
  side["method"] = rec.method;
  side["n"] = rec.n;
  side["N"] = rec.u_star.size();
  side["beta_used"] = rec.beta_used;
  side["correction_norm"] = rec.correction_norm;
  side["apply_us"] = apply_us ? nlohmann::json(*apply_us) : nlohmann::json(nullptr);
  detail::write_json(stem.string() + ".json", side);
}

}  // namespace pbdw
