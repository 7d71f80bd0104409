#pragma once

// Voxel-averaged beam-projection measurements (color flow imaging, CFI) and
// their two-direction variant (vector flow imaging, VFI). Representers are the
// normalized fields chi_i * b, so observing u means knowing its projection on
// their span.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "pbdw/hilbert.hpp"
#include "pbdw/manifold.hpp"

namespace pbdw {

enum class Region { common, full };
enum class ImagingMode { cfi, vfi };

std::string to_string(Region r);
std::string to_string(ImagingMode m);
Region parse_region(const std::string& s);
ImagingMode parse_mode(const std::string& s);

struct VoxelPartition {
  GridConfig grid;
  Region region = Region::common;
  int block_axial = 2;
  int block_cross = 2;
  std::vector<std::vector<Index>> voxels;  // grid point indices, axial-major

  std::size_t size() const { return voxels.size(); }
  bool operator==(const VoxelPartition&) const = default;
};

/// Tiles the region (common segment, or all three segments in order) into
/// block_axial x block_cross rectangles of grid points.
VoxelPartition build_voxels(const GridConfig& grid, Region region, int block_axial,
                            int block_cross);

class MeasurementSpace {
 public:
  MeasurementSpace(ImagingMode mode, double beam_angle, VoxelPartition voxels, Basis representers,
                   Vector raw_norms);

  ImagingMode mode() const noexcept { return mode_; }
  Index m() const noexcept { return representers_.size(); }
  const Basis& representers() const noexcept { return representers_; }
  const SpacePtr& space() const noexcept { return representers_.space(); }
  double beam_angle() const noexcept { return beam_angle_; }
  Eigen::Vector2d beam() const;
  Eigen::Vector2d beam_perp() const;
  const VoxelPartition& voxels() const noexcept { return voxels_; }
  /// Norms of the unnormalized representers chi_i b; a raw voxel measurement
  /// equals values[i] * raw_norms[i].
  const Vector& raw_norms() const noexcept { return raw_norms_; }

  /// Voxel index and direction label ("beam" or "perp") of representer i.
  std::pair<std::size_t, std::string> label(Index i) const;

  nlohmann::json describe() const;
  bool same_as(const MeasurementSpace& other) const;

 private:
  ImagingMode mode_;
  double beam_angle_;
  VoxelPartition voxels_;
  Basis representers_;
  Vector raw_norms_;
};

using MeasurementPtr = std::shared_ptr<const MeasurementSpace>;

/// beam b = (cos angle, sin angle) in (axial, transverse) components.
MeasurementPtr cfi_space(const VoxelPartition& voxels, double beam_angle, const SpacePtr& space);
/// CFI family first, then chi_i b_perp with b_perp = (-sin angle, cos angle).
MeasurementPtr vfi_space(const VoxelPartition& voxels, double beam_angle, const SpacePtr& space);

struct Observation {
  Vector values;
  MeasurementPtr space;
};

/// values[i] = inner(representer i, u).
Vector observe(const MeasurementSpace& meas, const Vector& u);
Observation observe(const MeasurementPtr& meas, const Vector& u);
Observation observe(const MeasurementPtr& meas, const Snapshot& u);
/// Observations of every column, as columns of an m x K matrix.
Matrix observe_columns(const MeasurementSpace& meas, const Matrix& columns);

/// The field sum_i values[i] * representer_i, i.e. P_W u.
Vector lift(const Observation& obs);

/// Throws unless obs belongs to meas (same object or same descriptor) and has length m.
void check_observation(const Observation& obs, const MeasurementSpace& meas);

/// CSV with header voxel_index,component,value.
void save_observation(const Observation& obs, const std::filesystem::path& file);
Observation load_observation(const std::filesystem::path& file, const MeasurementPtr& meas);

}  // namespace pbdw
