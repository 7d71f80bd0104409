#pragma once

// Reconstruction algorithms: linear PBDW, affine PBDW, dispatch over a
// parameter-window partition, and the online data-driven (OMP) variant.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "pbdw/hilbert.hpp"
#include "pbdw/manifold.hpp"
#include "pbdw/measurement.hpp"
#include "pbdw/reduced.hpp"

namespace pbdw {

/// Fits below this inf-sup value are rejected as ill-posed.
inline constexpr double kBetaFloor = 1e-12;

struct Reconstruction {
  Vector u_star;
  Vector v_star_coeffs;
  double correction_norm = 0.0;  // ||w - P_W v*||
  double beta_used = 0.0;
  std::string method;
  Index n = 0;
};

/// One (V_n, W_m) pair with the cross-Gram G = gram(W_m, V_n) factored by
/// Householder QR, so v* = argmin_c ||G c - w|| costs O(mn) per apply.
class PbdwOperator {
 public:
  /// Throws IllPosedError when beta(V_n, W_m) <= kBetaFloor, ValidationError
  /// when n > m.
  static PbdwOperator fit(ReducedBasis vn, MeasurementPtr wm);

  const ReducedBasis& basis() const noexcept { return vn_; }
  const MeasurementPtr& measurement() const noexcept { return wm_; }
  const Matrix& cross_gram() const noexcept { return cross_; }
  double beta() const noexcept { return beta_; }
  Index n() const noexcept { return vn_.size(); }
  bool has_nominal() const noexcept { return nominal_obs_.has_value(); }
  /// observe(nominal); throws ContractError when the basis has no nominal.
  const Vector& nominal_observation() const;

 private:
  PbdwOperator(ReducedBasis vn, MeasurementPtr wm, Matrix cross, double beta);

  ReducedBasis vn_;
  MeasurementPtr wm_;
  Matrix cross_;
  Eigen::HouseholderQR<Matrix> qr_;
  double beta_;
  std::optional<Vector> nominal_obs_;

  friend Reconstruction pbdw_apply(const PbdwOperator& op, const Observation& obs);
  friend Reconstruction pbdw_apply_values(const PbdwOperator& op, const Vector& w);
};

/// u* = v* + lift(w - P_W v*), so P_W u* = w.
Reconstruction pbdw_apply(const PbdwOperator& op, const Observation& obs);
/// Same on raw observation coordinates (no space check).
Reconstruction pbdw_apply_values(const PbdwOperator& op, const Vector& w);

/// u* = ubar + pbdw_apply(w - wbar).
Reconstruction affine_apply(const PbdwOperator& op, const Observation& obs);

struct PartitionedModel {
  Partition partition;
  std::map<CellKey, PbdwOperator> operators;
};

/// Cell used for (t, HR): among windows containing (t mod T_c, HR) that carry an
/// operator, the nearest center in scaled distance, ties to the lowest key.
/// CoverageError (naming the nearest cell) when no window matches.
CellKey dispatch_cell(const PartitionedModel& model, double t, double heart_rate);

Reconstruction partitioned_apply(const PartitionedModel& model, double t, double heart_rate,
                                 const Observation& obs);

/// Shifted, normalized dictionary (u - ubar)/||u - ubar|| together with its
/// observation coordinates z_k = P_W of each element, so selection runs in R^m.
struct OmpDictionary {
  SpacePtr space;
  MeasurementPtr meas;
  Vector nominal;
  Vector nominal_obs;
  Matrix elements;                 // N x K shifted, normalized
  Matrix projected;                // m x K
  Vector projected_norms;          // ||z_k||
  std::vector<std::size_t> source; // element k -> dictionary index
  Vector mean_element;             // mean of the shifted set, N
  Vector mean_projected;           // its observation coordinates
};

/// Elements with ||u - ubar|| <= 1e-12 are excluded.
OmpDictionary build_omp_dictionary(const Matrix& dict, const Vector& nominal, const MeasurementPtr& meas);

struct OmpSelection {
  ReducedBasis basis;     // orthonormalized selections, nominal = ubar, provenance omp
  std::vector<long> picks;  // dictionary indices, -1 for the mean element
};

/// Greedy selection of up to n elements driven by the observation residual.
/// Step 1 takes the mean of the shifted set; later steps solve A c = g with
/// A = Z^T Z, g = Z^T (w - wbar) over the selected projections Z and pick
/// argmax_k |<res, z_k>| / ||z_k||, skipping ||z_k|| <= 1e-12 and breaking ties
/// toward the lowest index. Stops early once ||res|| <= 1e-12 ||w - wbar||.
/// SelectionExhaustedError when no admissible candidate remains.
OmpSelection omp_select(const OmpDictionary& dict, const Observation& obs, Index n);

/// omp_select, fit and affine_apply; falls back to shorter prefixes when the
/// fitted beta is below the floor (recorded in the method tag).
Reconstruction data_driven_apply(const OmpDictionary& dict, const Observation& obs, Index n);
/// Same, reusing a selection computed for at least n elements.
Reconstruction data_driven_apply(const OmpSelection& selection, const Observation& obs, Index n);

/// Field as <stem>.f64 plus a <stem>.json sidecar. Timing is written only when
/// apply_us is given, keeping default outputs byte-reproducible.
void save_reconstruction(const Reconstruction& rec, const std::filesystem::path& stem,
                         std::optional<double> apply_us = std::nullopt);

}  // namespace pbdw
