#pragma once

// Synthetic parametric manifold: a closed-form pulsatile flow through a
// bifurcating channel (common segment feeding two branches), standing in for a
// Navier-Stokes snapshot database. Also holds database sampling, health
// labels, (phase, heart-rate) partitioning and on-disk persistence.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pbdw/hilbert.hpp"

namespace pbdw {

struct ParameterPoint {
  double time = 0.0;               // s
  double heart_rate = 72.0;        // beats per minute
  double skew = 0.0;               // inlet asymmetry, dimensionless
  double systole = 0.3;            // systole duration, s
  double inlet_speed = 18.0;       // cm/s
  double resistance_ratio = 1.0;   // distal resistance ratio between branches

  double cycle_length() const { return 60.0 / heart_rate; }
  /// Time folded into one cardiac cycle.
  double phase() const;
};

/// Throws ValidationError when any parameter leaves its admissible range.
void validate(const ParameterPoint& y);

enum class Segment : int { common = 0, branch1 = 1, branch2 = 2 };
enum class Component : int { axial = 0, transverse = 1 };

inline constexpr int kSegments = 3;
inline constexpr int kComponents = 2;

struct GridConfig {
  int axial_stations = 8;
  int cross_points = 16;
  double beam_angle = 1.0471975511965976;  // 60 degrees from the axial direction

  Index points_per_segment() const { return Index{axial_stations} * cross_points; }
  Index points() const { return kSegments * points_per_segment(); }
  Index dofs() const { return kComponents * points(); }

  /// Grid point index of (segment, axial station k, cross point j).
  Index point(Segment seg, int k, int j) const {
    return (static_cast<Index>(seg) * axial_stations + k) * cross_points + j;
  }
  Index dof(Segment seg, int k, int j, Component c) const {
    return kComponents * point(seg, k, j) + static_cast<Index>(c);
  }

  void validate() const;
  bool operator==(const GridConfig&) const = default;
};

/// Uniform lumped-quadrature space for a grid: weight 1/(L*C) per dof.
SpacePtr grid_space(const GridConfig& grid);

struct Snapshot {
  Vector coeffs;
  ParameterPoint params;
};

struct SnapshotDatabase {
  SpacePtr space;
  GridConfig grid;
  std::vector<Snapshot> snapshots;
  std::uint64_t seed = 0;

  std::size_t size() const { return snapshots.size(); }
  /// Coefficient vectors as matrix columns, optionally restricted to indices.
  Matrix matrix() const;
  Matrix matrix(const std::vector<std::size_t>& indices) const;
};

// --- generator -------------------------------------------------------------

/// Inlet waveform: sin^2 systolic bump over a 0.1 diastolic plateau; peaks at 1
/// when phase = systole / 2.
double waveform(double phase, double systole, double cycle);

/// One-dimensional logit-normal inlet profile on (0, 1).
double inlet_profile(double x, double skew);

/// Deterministic flow field for one parameter point.
///
/// With g the waveform value, a_k = k/(L-1), x_j = (j+0.5)/C and the
/// cross-section profile P(x) = f(x; s) + J(x, phase), the common-segment axial
/// velocity is u0 g P(x_j) (1 + 0.05 a_k). Each branch carries the same shape
/// scaled by 1/(1+eta) and eta/(1+eta), so branch fluxes split in the ratio
/// eta. J is a narrow systolic jet crossing the lumen (zero in diastole).
/// The common-segment transverse velocity is
/// 0.1 u0 g s sin(2 pi x_j) a_k + 0.2 u0 g d P(x_j) a_k with d = (eta-1)/(eta+1),
/// the upstream signature of the downstream split. Branch transverse velocity
/// is zero.
Snapshot synthesize_snapshot(const ParameterPoint& y, const GridConfig& grid);

// --- sampling ----------------------------------------------------------------

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
  double length() const { return hi - lo; }
};

struct ParameterRanges {
  Interval heart_rate{48.0, 120.0};
  Interval skew{0.0, 0.2};
  Interval systole{0.2863, 0.3182};
  Interval inlet_speed{17.0, 20.0};
  std::vector<Interval> resistance_ratio{{0.05, 0.2}, {0.5, 1.5}, {5.0, 20.0}};

  void validate() const;
};

enum class HealthFilter { all, healthy, sick };
enum class Health { healthy, sick };

std::string to_string(Health h);
std::string to_string(HealthFilter f);
HealthFilter parse_health_filter(const std::string& s);

inline constexpr Interval kHealthyRatio{0.5, 1.5};
const std::vector<Interval>& sick_ratio_intervals();

/// Healthy iff the resistance ratio lies in [0.5, 1.5]; sick on the outer
/// admissible intervals. Throws ValidationError outside the admissible union.
Health label_health(const ParameterPoint& y);

/// Resistance-ratio intervals left after applying a health filter.
std::vector<Interval> filtered_ratio_intervals(const ParameterRanges& ranges,
                                               HealthFilter filter);

/// Per-patient parameters drawn from a stream keyed by (seed, patient).
/// Draw order: heart rate, skew, systole, inlet speed, interval pick, ratio.
/// The ratio interval is picked with equal probability, then sampled uniformly.
ParameterPoint draw_patient(const ParameterRanges& ranges, HealthFilter filter,
                            std::uint64_t seed, std::uint64_t patient);

SnapshotDatabase sample_database(const ParameterRanges& ranges, int n_patients,
                                 int samples_per_cycle, const GridConfig& grid,
                                 std::uint64_t seed, HealthFilter filter,
                                 int threads = 0);

// --- partitioning ------------------------------------------------------------

struct CellKey {
  int time = 0;  // phase-window index i
  int hr = 0;    // heart-rate window index j
  auto operator<=>(const CellKey&) const = default;
};

std::string to_string(const CellKey& key);

/// Overlapping closed windows [t_i - tau, t_i + tau] x [HR_j - dHR, HR_j + dHR]
/// tiling one (longest) cardiac cycle and the admissible heart-rate range.
class Partition {
 public:
  Partition(double tau, double delta_hr);

  double tau() const noexcept { return tau_; }
  double delta_hr() const noexcept { return delta_hr_; }
  const std::vector<double>& time_centers() const noexcept { return time_centers_; }
  const std::vector<double>& hr_centers() const noexcept { return hr_centers_; }

  bool window_contains(const CellKey& key, double phase, double heart_rate) const;
  /// Squared distance to the cell center in (phase/tau, HR/dHR) units.
  double scaled_distance(const CellKey& key, double phase, double heart_rate) const;

  /// Every window (populated or not) containing the point, in key order.
  std::vector<CellKey> windows_containing(double phase, double heart_rate) const;

  /// Among populated cells containing the point: nearest center, then lowest key.
  std::optional<CellKey> locate(double phase, double heart_rate) const;
  /// Populated cell with the nearest center regardless of coverage.
  std::optional<CellKey> nearest(double phase, double heart_rate) const;

  std::map<CellKey, std::vector<std::size_t>> cells;

 private:
  double tau_;
  double delta_hr_;
  std::vector<double> time_centers_;
  std::vector<double> hr_centers_;
};

Partition partition_database(const SnapshotDatabase& db, double tau, double delta_hr);

// --- persistence ---------------------------------------------------------------

inline constexpr int kDatabaseFormatVersion = 1;

void save_database(const SnapshotDatabase& db, const std::filesystem::path& dir);
SnapshotDatabase load_database(const std::filesystem::path& dir);

}  // namespace pbdw
