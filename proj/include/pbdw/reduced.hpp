#pragma once

// Reduced bases from snapshot sets: POD (method of snapshots), strong greedy,
// and the nominal (mean) state used by the affine estimators.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pbdw/hilbert.hpp"
#include "pbdw/manifold.hpp"

namespace pbdw {

enum class Provenance { pod, greedy, omp };

std::string to_string(Provenance p);
Provenance parse_provenance(const std::string& s);

struct ReducedBasis {
  Basis modes;
  std::optional<Vector> singular_values;  // POD only
  std::optional<Vector> nominal;
  Provenance provenance = Provenance::pod;
  std::string source = "global";
  /// Selected snapshot indices for greedy/OMP bases (-1 marks a mean element).
  std::vector<long> picks;
  /// Set when a greedy run stopped before n_max because every residual vanished.
  bool truncated = false;

  Index size() const { return modes.size(); }
  /// First n modes with matching singular values and picks; nominal kept.
  ReducedBasis prefix(Index n) const;
};

/// Arithmetic mean of the columns.
Vector nominal_state(const Matrix& columns);
Vector nominal_state(std::span<const Snapshot> snaps);

/// Snapshot columns of a list of snapshots.
Matrix snapshot_matrix(std::span<const Snapshot> snaps);

/// POD through the metric correlation matrix C = S^T M S (or the N x N
/// covariance when there are more snapshots than dofs). With center = true the
/// mean is subtracted first and stored as the nominal state. Eigenvalues below
/// 1e-24 times the largest are dropped, so fewer than n_max modes may return.
ReducedBasis pod(const Matrix& columns, const SpacePtr& space, Index n_max, bool center);
ReducedBasis pod(std::span<const Snapshot> snaps, const SpacePtr& space, Index n_max, bool center);

/// Strong greedy: V_1 spans the mean; each later step adds the snapshot with the
/// largest projection residual (ties to the lowest index). Stops early, setting
/// `truncated`, once every residual is below 1e-12 times the largest snapshot norm.
ReducedBasis strong_greedy(const Matrix& columns, const SpacePtr& space, Index n_max);
ReducedBasis strong_greedy(std::span<const Snapshot> snaps, const SpacePtr& space, Index n_max);

/// Relative tolerance under which two greedy scores count as tied.
inline constexpr double kTieTolerance = 1e-12;

inline constexpr int kBasisFormatVersion = 1;

/// basis_manifest.json, modes.f64 (mode-major) and, when present, nominal.f64.
void save_basis(const ReducedBasis& basis, const std::filesystem::path& dir);
ReducedBasis load_basis(const std::filesystem::path& dir, const SpacePtr& space);

}  // namespace pbdw
