#pragma once

// Error metrics, method sweeps over the reduced dimension, inf-sup curves, and
// the flow-ratio blockage index with its threshold classifier.

#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pbdw/estimator.hpp"
#include "pbdw/manifold.hpp"
#include "pbdw/measurement.hpp"
#include "pbdw/reduced.hpp"

namespace pbdw {

/// ||u - u*|| / ||u|| in the metric norm; ValidationError for a zero truth.
double rel_error(const DiscreteSpace& space, const Vector& u, const Vector& u_star);

/// e(t_k) = ||u(t_k) - u*(t_k)|| / sqrt(sum_k ||u(t_k)||^2 dt), dt = cycle / K, for
/// K columns sampled uniformly over one cycle.
Vector time_error(const DiscreteSpace& space, const Matrix& truth, const Matrix& recon, double cycle);

enum class Method { pod_lin, ppod_aff, pgreedy_aff, pdb_aff };

std::string to_string(Method m);
Method parse_method(const std::string& s);
const std::vector<Method>& all_methods();

// --- per-cell models -----------------------------------------------------------

/// One basis per populated cell, built from the cell's snapshots with up to
/// n_max modes: centered POD (ppod) or strong greedy (pgreedy). A cell whose
/// snapshots all coincide gets the span of their mean.
std::map<CellKey, ReducedBasis> build_cell_bases(const SnapshotDatabase& train, const Partition& part,
                                                 Index n_max, Method method, int threads);

struct CellFit {
  PartitionedModel model;
  int capped_cells = 0;     // cells whose basis is shorter than n
  int beta_fallbacks = 0;   // cells fitted below n because beta hit the floor
  double beta_min = 1.0;
};

/// Fits every cell at min(n, basis size), stepping down when beta hits the floor.
CellFit fit_cells(const Partition& part, const std::map<CellKey, ReducedBasis>& bases,
                  const MeasurementPtr& meas, Index n);

/// Cell for (t, HR) among populated cells: nearest containing window center,
/// ties to the lowest key. Points outside every populated window go to the
/// nearest cell when allow_nearest is set (covered = false), otherwise
/// CoverageError.
struct Dispatch {
  CellKey cell;
  bool covered = true;
};
Dispatch dispatch_point(const Partition& part, double t, double heart_rate, bool allow_nearest);

// --- sweeps ----------------------------------------------------------------------

struct SweepConfig {
  std::vector<Method> methods = all_methods();
  std::vector<Index> n_grid;
  double tau = 0.05;
  double delta_hr = 36.0;
  int threads = 0;
  bool timing = false;
  /// Route test points outside every populated window to the nearest cell
  /// instead of failing; such points are counted in the report.
  bool nearest_fallback = true;
};

struct SweepReport {
  Method method = Method::pod_lin;
  std::vector<Index> n_values;
  std::vector<double> e_av;
  std::vector<double> e_wc;
  std::vector<double> beta_min;
  std::vector<double> apply_us_p50;           // NaN unless timing is on
  std::vector<std::vector<double>> errors;    // [n index][test snapshot]
  std::vector<int> capped;                    // reconstructions run below the requested n
  std::vector<int> beta_fallbacks;            // of which because beta hit the floor
  int coverage_fallbacks = 0;
  double max_consistency = 0.0;               // max ||observe(u*) - w|| / ||w||
  long bound_checks = 0;
  long bound_violations = 0;
  double max_bound_excess = -std::numeric_limits<double>::infinity();
  Index best_n_av = 0;
  Index best_n_wc = 0;

  /// Smallest n in the grid with e_av <= tol.
  std::optional<Index> first_n_below(double tol) const;
  double e_av_at(Index n) const;
};

/// Reconstructs every test snapshot for each method and n. Aggregates are
/// reduced in index order so results do not depend on the thread count.
std::vector<SweepReport> sweep(const SnapshotDatabase& train, const SnapshotDatabase& test,
                               const MeasurementPtr& meas, const SweepConfig& config);

/// beta(V_n, W_m) along nested prefixes of one basis.
std::vector<double> beta_curve(const ReducedBasis& basis, const MeasurementSpace& meas,
                               const std::vector<Index>& n_grid);

// --- blockage index ----------------------------------------------------------------

/// r = Q2 / Q1 with Q_i the quadrature sum of the axial velocity over branch
/// i's outlet station. ValidationError when Q1 <= 1e-14.
double flow_ratio(const Vector& u, const GridConfig& grid);

/// r* = (min sick r + max healthy r) / 2.
double threshold(const std::vector<double>& healthy, const std::vector<double>& sick);

struct QoiPatient {
  std::size_t patient = 0;
  double eta = 0.0;
  double r_true = 0.0;
  double r_rec = 0.0;
  Health label_true = Health::healthy;
  Health label_pred = Health::healthy;
};

struct QoiReport {
  std::vector<QoiPatient> patients;
  double r_star = 0.0;
  int true_positives = 0;
  int false_positives = 0;
  int true_negatives = 0;
  int false_negatives = 0;
  Index n = 0;
  double max_flux_identity_error = 0.0;  // max |r_true - eta| / eta
};

/// One snapshot per patient at peak systole (t = T_sys / 2).
std::vector<Snapshot> peak_systole_snapshots(const ParameterRanges& ranges, HealthFilter filter,
                                             int patients, std::uint64_t seed, const GridConfig& grid);

/// Partitioned affine POD reconstruction of each patient at dimension n, flow
/// ratios, threshold on reconstructed ratios, and the confusion counts
/// (positive = sick, predicted when r_rec > r*).
QoiReport qoi_run(const SnapshotDatabase& train, const MeasurementPtr& meas,
                  const std::vector<Snapshot>& healthy, const std::vector<Snapshot>& sick, Index n,
                  double tau, double delta_hr, int threads);

// --- reports ----------------------------------------------------------------------

void write_sweep_csv(const std::vector<SweepReport>& reports, const std::filesystem::path& file);
void write_per_snapshot_csv(const std::vector<SweepReport>& reports, const std::filesystem::path& file);
void write_qoi_csv(const QoiReport& report, const std::filesystem::path& file);

struct SweepRow {
  std::string method;
  Index n = 0;
  double e_av = 0.0;
  double e_wc = 0.0;
  double beta_min = 0.0;
  double apply_us_p50 = 0.0;
};
/// Parses a sweep.csv; IntegrityError on a header or field mismatch.
std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& file);

}  // namespace pbdw
