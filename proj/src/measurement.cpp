#include "pbdw/measurement.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "io_util.hpp"
#include "pbdw/errors.hpp"

namespace pbdw {

std::string to_string(Region r) { return r == Region::full ? "full" : "common"; }
std::string to_string(ImagingMode m) { return m == ImagingMode::vfi ? "vfi" : "cfi"; }

Region parse_region(const std::string& s) {
  if (s == "common") return Region::common;
  if (s == "full") return Region::full;
  throw ValidationError("unknown footprint '" + s + "' (expected common|full)");
}

ImagingMode parse_mode(const std::string& s) {
  if (s == "cfi") return ImagingMode::cfi;
  if (s == "vfi") return ImagingMode::vfi;
  throw ValidationError("unknown imaging mode '" + s + "' (expected cfi|vfi)");
}

VoxelPartition build_voxels(const GridConfig& grid, Region region, int block_axial,
                            int block_cross) {
  grid.validate();
  if (block_axial < 1 || block_cross < 1 || grid.axial_stations % block_axial != 0 ||
      grid.cross_points % block_cross != 0) {
    throw ValidationError("voxel block (" + std::to_string(block_axial) + ", " +
                          std::to_string(block_cross) + ") must divide (L, C) = (" +
                          std::to_string(grid.axial_stations) + ", " +
                          std::to_string(grid.cross_points) + ")");
  }
  VoxelPartition out;
  out.grid = grid;
  out.region = region;
  out.block_axial = block_axial;
  out.block_cross = block_cross;
  const int segments = region == Region::full ? kSegments : 1;
  for (int seg = 0; seg < segments; ++seg) {
    for (int k0 = 0; k0 < grid.axial_stations; k0 += block_axial) {
      for (int j0 = 0; j0 < grid.cross_points; j0 += block_cross) {
        std::vector<Index> voxel;
        for (int k = k0; k < k0 + block_axial; ++k) {
          for (int j = j0; j < j0 + block_cross; ++j) {
            voxel.push_back(grid.point(static_cast<Segment>(seg), k, j));
          }
        }
        out.voxels.push_back(std::move(voxel));
      }
    }
  }
  return out;
}

MeasurementSpace::MeasurementSpace(ImagingMode mode, double beam_angle, VoxelPartition voxels,
                                   Basis representers, Vector raw_norms)
    : mode_(mode),
      beam_angle_(beam_angle),
      voxels_(std::move(voxels)),
      representers_(std::move(representers)),
      raw_norms_(std::move(raw_norms)) {
  if (!representers_.orthonormal()) {
    throw ContractError("measurement representers must be orthonormal");
  }
  if (raw_norms_.size() != representers_.size()) {
    throw DimensionError("one raw norm per representer required");
  }
}

Eigen::Vector2d MeasurementSpace::beam() const {
  return {std::cos(beam_angle_), std::sin(beam_angle_)};
}

Eigen::Vector2d MeasurementSpace::beam_perp() const {
  return {-std::sin(beam_angle_), std::cos(beam_angle_)};
}

std::pair<std::size_t, std::string> MeasurementSpace::label(Index i) const {
  const auto nv = static_cast<Index>(voxels_.size());
  if (i < 0 || i >= m()) {
    throw DimensionError("representer index out of range");
  }
  return i < nv ? std::pair{static_cast<std::size_t>(i), std::string("beam")}
                : std::pair{static_cast<std::size_t>(i - nv), std::string("perp")};
}

nlohmann::json MeasurementSpace::describe() const {
  return {{"mode", to_string(mode_)},
          {"m", m()},
          {"beam_angle", beam_angle_},
          {"footprint", to_string(voxels_.region)},
          {"block", {voxels_.block_axial, voxels_.block_cross}},
          {"voxels", voxels_.size()},
          {"N", space()->dim()}};
}

bool MeasurementSpace::same_as(const MeasurementSpace& other) const {
  return this == &other ||
         (mode_ == other.mode_ && beam_angle_ == other.beam_angle_ && voxels_ == other.voxels_ &&
          compatible(*space(), *other.space()));
}

namespace {

MeasurementPtr build_space(const VoxelPartition& voxels, double beam_angle, const SpacePtr& space,
                           ImagingMode mode) {
  if (!space) {
    throw ValidationError("measurement: null space");
  }
  if (space->dim() != voxels.grid.dofs()) {
    throw DimensionError("measurement: space dimension " + std::to_string(space->dim()) +
                         " does not match the grid (" + std::to_string(voxels.grid.dofs()) + ")");
  }
  if (voxels.voxels.empty()) {
    throw ValidationError("measurement: empty voxel partition");
  }
  if (!std::isfinite(beam_angle)) {
    throw ValidationError("measurement: beam angle must be finite");
  }
  const Eigen::Vector2d b(std::cos(beam_angle), std::sin(beam_angle));
  const Eigen::Vector2d bp(-std::sin(beam_angle), std::cos(beam_angle));
  std::vector<Eigen::Vector2d> dirs{b};
  if (mode == ImagingMode::vfi) {
    dirs.push_back(bp);
  }

  const auto nv = static_cast<Index>(voxels.voxels.size());
  const auto m = nv * static_cast<Index>(dirs.size());
  Matrix psi = Matrix::Zero(space->dim(), m);
  Vector raw(m);
  const Vector& w = space->weights();
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    for (Index i = 0; i < nv; ++i) {
      const Index col = static_cast<Index>(d) * nv + i;
      double sq = 0.0;
      for (Index p : voxels.voxels[static_cast<std::size_t>(i)]) {
        psi(2 * p, col) = dirs[d][0];
        psi(2 * p + 1, col) = dirs[d][1];
        sq += w[2 * p] * dirs[d][0] * dirs[d][0] + w[2 * p + 1] * dirs[d][1] * dirs[d][1];
      }
      if (!(sq > 0.0)) {
        throw ValidationError("measurement: voxel " + std::to_string(i) + " is empty");
      }
      raw[col] = std::sqrt(sq);
      psi.col(col) /= raw[col];
    }
  }
  return std::make_shared<const MeasurementSpace>(mode, beam_angle, voxels,
                                                  Basis(space, std::move(psi), true), std::move(raw));
}

}  // namespace

MeasurementPtr cfi_space(const VoxelPartition& voxels, double beam_angle, const SpacePtr& space) {
  return build_space(voxels, beam_angle, space, ImagingMode::cfi);
}

MeasurementPtr vfi_space(const VoxelPartition& voxels, double beam_angle, const SpacePtr& space) {
  return build_space(voxels, beam_angle, space, ImagingMode::vfi);
}

Vector observe(const MeasurementSpace& meas, const Vector& u) {
  if (u.size() != meas.space()->dim()) {
    throw DimensionError("observe: field length " + std::to_string(u.size()) + " != N = " +
                         std::to_string(meas.space()->dim()));
  }
  return meas.representers().vectors().transpose() * meas.space()->weights().cwiseProduct(u);
}

Observation observe(const MeasurementPtr& meas, const Vector& u) {
  return {observe(*meas, u), meas};
}

Observation observe(const MeasurementPtr& meas, const Snapshot& u) {
  return observe(meas, u.coeffs);
}

Matrix observe_columns(const MeasurementSpace& meas, const Matrix& columns) {
  if (columns.rows() != meas.space()->dim()) {
    throw DimensionError("observe_columns: row count differs from N");
  }
  return meas.representers().vectors().transpose() *
         (meas.space()->weights().asDiagonal() * columns);
}

Vector lift(const Observation& obs) {
  if (!obs.space) {
    throw ContractError("observation without a measurement space");
  }
  check_observation(obs, *obs.space);
  return obs.space->representers().combine(obs.values);
}

void check_observation(const Observation& obs, const MeasurementSpace& meas) {
  if (!obs.space || !obs.space->same_as(meas)) {
    throw IncompatibleSpaceError("observation was taken on a different measurement space");
  }
  if (obs.values.size() != meas.m()) {
    throw DimensionError("observation length " + std::to_string(obs.values.size()) +
                         " != m = " + std::to_string(meas.m()));
  }
  if (!obs.values.allFinite()) {
    throw ValidationError("observation has non-finite values");
  }
}

void save_observation(const Observation& obs, const std::filesystem::path& file) {
  if (file.empty()) {
    throw IoError("save_observation: empty path");
  }
  check_observation(obs, *obs.space);
  std::string csv = "voxel_index,component,value\n";
  for (Index i = 0; i < obs.values.size(); ++i) {
    const auto [voxel, comp] = obs.space->label(i);
    csv += std::to_string(voxel) + "," + comp + "," + detail::format_double(obs.values[i]) + "\n";
  }
  detail::write_text(file, csv);
}

Observation load_observation(const std::filesystem::path& file, const MeasurementPtr& meas) {
  if (file.empty()) {
    throw IoError("load_observation: empty path");
  }
  std::istringstream in(detail::read_text(file));
  std::string line;
  if (!std::getline(in, line) || line != "voxel_index,component,value") {
    throw IntegrityError(file.string() + ": header must be voxel_index,component,value");
  }
  Observation obs{Vector::Constant(meas->m(), std::numeric_limits<double>::quiet_NaN()), meas};
  const auto nv = static_cast<Index>(meas->voxels().size());
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const auto f = detail::split_csv_line(line);
    if (f.size() != 3) {
      throw IntegrityError(file.string() + ": malformed row '" + line + "'");
    }
    const auto voxel = static_cast<Index>(detail::parse_double(f[0], file.string()));
    Index row = -1;
    if (f[1] == "beam") {
      row = voxel;
    } else if (f[1] == "perp" && meas->mode() == ImagingMode::vfi) {
      row = nv + voxel;
    }
    if (voxel < 0 || voxel >= nv || row < 0) {
      throw IntegrityError(file.string() + ": row '" + line + "' does not match the measurement space");
    }
    obs.values[row] = detail::parse_double(f[2], file.string());
  }
  if (!obs.values.allFinite()) {
    throw IntegrityError(file.string() + ": missing or non-finite observation entries");
  }
  return obs;
}

}  // namespace pbdw
