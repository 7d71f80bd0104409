#include "pbdw/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "pbdw/errors.hpp"
#include "pbdw/parallel.hpp"

namespace pbdw {

namespace {

constexpr double kDiastolicLevel = 0.1;
constexpr double kAxialTaper = 0.05;
constexpr double kSkewSwirl = 0.1;
constexpr double kSplitCoupling = 0.2;
// Systolic jet: amplitude relative to the inlet profile, Gaussian half-width in
// cross-section units, and the lumen crossing path (start, travel).
constexpr double kJetAmplitude = 0.3;
constexpr double kJetWidth = 0.08;
constexpr double kJetStart = 0.15;
constexpr double kJetTravel = 0.7;

const ParameterRanges kAdmissible{};

bool in_any(const std::vector<Interval>& intervals, double v) {
  return std::any_of(intervals.begin(), intervals.end(),
                     [v](const Interval& iv) { return iv.contains(v); });
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void require_in(const Interval& iv, double v, const char* name) {
  if (!std::isfinite(v) || !iv.contains(v)) {
    throw ValidationError(std::string(name) + " = " + fmt_double(v) + " outside [" +
                          fmt_double(iv.lo) + ", " + fmt_double(iv.hi) + "]");
  }
}

// Uniform double in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
double unit_draw(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

double uniform_in(std::mt19937_64& gen, const Interval& iv) {
  return iv.lo + (iv.hi - iv.lo) * unit_draw(gen);
}

}  // namespace

double ParameterPoint::phase() const {
  const double tc = cycle_length();
  double ph = std::fmod(time, tc);
  if (ph < 0.0) {
    ph += tc;
  }
  return ph;
}

void validate(const ParameterPoint& y) {
  if (!std::isfinite(y.time) || y.time < 0.0) {
    throw ValidationError("time must be finite and nonnegative");
  }
  require_in(kAdmissible.heart_rate, y.heart_rate, "heart_rate");
  require_in(kAdmissible.skew, y.skew, "skew");
  require_in(kAdmissible.systole, y.systole, "systole");
  require_in(kAdmissible.inlet_speed, y.inlet_speed, "inlet_speed");
  if (!std::isfinite(y.resistance_ratio) ||
      !in_any(kAdmissible.resistance_ratio, y.resistance_ratio)) {
    throw ValidationError("resistance_ratio = " + fmt_double(y.resistance_ratio) +
                          " outside the admissible union");
  }
}

void GridConfig::validate() const {
  if (axial_stations < 2) {
    throw ValidationError("grid: need at least 2 axial stations");
  }
  if (cross_points < 4) {
    throw ValidationError("grid: need at least 4 cross-section points");
  }
  if (!std::isfinite(beam_angle)) {
    throw ValidationError("grid: beam angle must be finite");
  }
}

SpacePtr grid_space(const GridConfig& grid) {
  grid.validate();
  return make_space(Vector::Constant(grid.dofs(), 1.0 / static_cast<double>(grid.points_per_segment())));
}

Matrix SnapshotDatabase::matrix() const {
  Matrix out(grid.dofs(), static_cast<Index>(snapshots.size()));
  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    out.col(static_cast<Index>(k)) = snapshots[k].coeffs;
  }
  return out;
}

Matrix SnapshotDatabase::matrix(const std::vector<std::size_t>& indices) const {
  Matrix out(grid.dofs(), static_cast<Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out.col(static_cast<Index>(k)) = snapshots.at(indices[k]).coeffs;
  }
  return out;
}

double waveform(double phase, double systole, double cycle) {
  if (!(systole > 0.0 && systole < cycle)) {
    throw ValidationError("waveform: need 0 < systole < cycle");
  }
  if (!(phase >= 0.0 && phase < cycle)) {
    throw ValidationError("waveform: phase " + fmt_double(phase) + " outside [0, cycle)");
  }
  if (phase >= systole) {
    return kDiastolicLevel;
  }
  const double s = std::sin(std::numbers::pi * phase / systole);
  return kDiastolicLevel + (1.0 - kDiastolicLevel) * s * s;
}

double inlet_profile(double x, double skew) {
  if (!(x > 0.0 && x < 1.0)) {
    throw ValidationError("inlet_profile: x must lie in (0, 1)");
  }
  const double logit = std::log(x / (1.0 - x)) - skew;
  return std::exp(-0.5 * logit * logit) / (x * (1.0 - x));
}

Snapshot synthesize_snapshot(const ParameterPoint& y, const GridConfig& grid) {
  grid.validate();
  validate(y);

  const double cycle = y.cycle_length();
  const double phase = y.phase();
  const double g = waveform(phase, y.systole, cycle);
  const double amp = y.inlet_speed * g;
  const double split = (y.resistance_ratio - 1.0) / (y.resistance_ratio + 1.0);
  const double frac1 = 1.0 / (1.0 + y.resistance_ratio);
  const double frac2 = y.resistance_ratio / (1.0 + y.resistance_ratio);

  const int L = grid.axial_stations;
  const int C = grid.cross_points;

  std::vector<double> profile(static_cast<std::size_t>(C));
  std::vector<double> swirl(static_cast<std::size_t>(C));
  const bool in_systole = phase < y.systole;
  const double progress = in_systole ? phase / y.systole : 1.0;
  const double jet_strength = (g - kDiastolicLevel) / (1.0 - kDiastolicLevel);
  for (int j = 0; j < C; ++j) {
    const double x = (j + 0.5) / C;
    double p = inlet_profile(x, y.skew);
    if (in_systole) {
      const double dx = (x - (kJetStart + kJetTravel * progress)) / kJetWidth;
      p += kJetAmplitude * jet_strength * std::exp(-dx * dx);
    }
    profile[static_cast<std::size_t>(j)] = p;
    swirl[static_cast<std::size_t>(j)] = std::sin(2.0 * std::numbers::pi * x);
  }

  Snapshot out;
  out.params = y;
  out.coeffs = Vector::Zero(grid.dofs());
  for (int k = 0; k < L; ++k) {
    const double a = static_cast<double>(k) / (L - 1);
    const double taper = 1.0 + kAxialTaper * a;
    for (int j = 0; j < C; ++j) {
      const double p = profile[static_cast<std::size_t>(j)];
      const double axial = amp * p * taper;
      out.coeffs[grid.dof(Segment::common, k, j, Component::axial)] = axial;
      out.coeffs[grid.dof(Segment::common, k, j, Component::transverse)] =
          kSkewSwirl * amp * y.skew * swirl[static_cast<std::size_t>(j)] * a +
          kSplitCoupling * amp * split * p * a;
      out.coeffs[grid.dof(Segment::branch1, k, j, Component::axial)] = frac1 * axial;
      out.coeffs[grid.dof(Segment::branch2, k, j, Component::axial)] = frac2 * axial;
    }
  }
  return out;
}

void ParameterRanges::validate() const {
  auto check = [](const Interval& iv, const Interval& adm, const char* name) {
    if (!(iv.lo <= iv.hi) || iv.lo < adm.lo || iv.hi > adm.hi) {
      throw ValidationError(std::string("ranges: ") + name + " must be a sub-interval of [" +
                            fmt_double(adm.lo) + ", " + fmt_double(adm.hi) + "]");
    }
  };
  check(heart_rate, kAdmissible.heart_rate, "heart_rate");
  check(skew, kAdmissible.skew, "skew");
  check(systole, kAdmissible.systole, "systole");
  check(inlet_speed, kAdmissible.inlet_speed, "inlet_speed");
  if (resistance_ratio.empty()) {
    throw ValidationError("ranges: resistance_ratio needs at least one interval");
  }
  for (const auto& iv : resistance_ratio) {
    const bool inside = std::any_of(
        kAdmissible.resistance_ratio.begin(), kAdmissible.resistance_ratio.end(),
        [&](const Interval& adm) { return iv.lo >= adm.lo && iv.hi <= adm.hi && iv.lo <= iv.hi; });
    if (!inside) {
      throw ValidationError("ranges: resistance_ratio interval [" + fmt_double(iv.lo) + ", " +
                            fmt_double(iv.hi) + "] is not inside one admissible interval");
    }
  }
}

std::string to_string(Health h) { return h == Health::healthy ? "healthy" : "sick"; }

std::string to_string(HealthFilter f) {
  switch (f) {
    case HealthFilter::healthy:
      return "healthy";
    case HealthFilter::sick:
      return "sick";
    default:
      return "all";
  }
}

HealthFilter parse_health_filter(const std::string& s) {
  if (s == "all") return HealthFilter::all;
  if (s == "healthy") return HealthFilter::healthy;
  if (s == "sick") return HealthFilter::sick;
  throw ValidationError("unknown health filter '" + s + "' (expected all|healthy|sick)");
}

const std::vector<Interval>& sick_ratio_intervals() {
  static const std::vector<Interval> sick{{0.05, 0.2}, {5.0, 20.0}};
  return sick;
}

Health label_health(const ParameterPoint& y) {
  const double eta = y.resistance_ratio;
  if (kHealthyRatio.contains(eta)) {
    return Health::healthy;
  }
  if (in_any(sick_ratio_intervals(), eta)) {
    return Health::sick;
  }
  throw ValidationError("label_health: resistance ratio " + fmt_double(eta) +
                        " outside the admissible union");
}

std::vector<Interval> filtered_ratio_intervals(const ParameterRanges& ranges,
                                               HealthFilter filter) {
  std::vector<Interval> out;
  for (const auto& iv : ranges.resistance_ratio) {
    if (filter == HealthFilter::all) {
      out.push_back(iv);
      continue;
    }
    const std::vector<Interval> target =
        filter == HealthFilter::healthy ? std::vector<Interval>{kHealthyRatio} : sick_ratio_intervals();
    for (const auto& t : target) {
      const double lo = std::max(iv.lo, t.lo);
      const double hi = std::min(iv.hi, t.hi);
      if (lo <= hi) {
        out.push_back({lo, hi});
      }
    }
  }
  return out;
}

ParameterPoint draw_patient(const ParameterRanges& ranges, HealthFilter filter,
                            std::uint64_t seed, std::uint64_t patient) {
  const auto ratio = filtered_ratio_intervals(ranges, filter);
  if (ratio.empty()) {
    throw ValidationError("sample_database: health filter '" + to_string(filter) +
                          "' leaves no admissible resistance ratio");
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(patient), static_cast<std::uint32_t>(patient >> 32)};
  std::mt19937_64 gen(seq);

  ParameterPoint y;
  y.heart_rate = uniform_in(gen, ranges.heart_rate);
  y.skew = uniform_in(gen, ranges.skew);
  y.systole = uniform_in(gen, ranges.systole);
  y.inlet_speed = uniform_in(gen, ranges.inlet_speed);
  const auto pick = std::min<std::size_t>(
      static_cast<std::size_t>(unit_draw(gen) * static_cast<double>(ratio.size())), ratio.size() - 1);
  y.resistance_ratio = uniform_in(gen, ratio[pick]);
  return y;
}

SnapshotDatabase sample_database(const ParameterRanges& ranges, int n_patients,
                                 int samples_per_cycle, const GridConfig& grid,
                                 std::uint64_t seed, HealthFilter filter, int threads) {
  if (n_patients < 1) {
    throw ValidationError("sample_database: need at least one patient");
  }
  if (samples_per_cycle < 1) {
    throw ValidationError("sample_database: need at least one sample per cycle");
  }
  ranges.validate();
  grid.validate();
  if (filtered_ratio_intervals(ranges, filter).empty()) {
    throw ValidationError("sample_database: health filter '" + to_string(filter) +
                          "' leaves no admissible resistance ratio");
  }

  SnapshotDatabase db;
  db.space = grid_space(grid);
  db.grid = grid;
  db.seed = seed;
  const auto per = static_cast<std::size_t>(samples_per_cycle);
  db.snapshots.resize(static_cast<std::size_t>(n_patients) * per);

  parallel_for(static_cast<std::size_t>(n_patients), resolve_threads(threads), [&](std::size_t p) {
    ParameterPoint y = draw_patient(ranges, filter, seed, p);
    const double cycle = y.cycle_length();
    for (std::size_t k = 0; k < per; ++k) {
      y.time = static_cast<double>(k) * cycle / static_cast<double>(samples_per_cycle);
      db.snapshots[p * per + k] = synthesize_snapshot(y, grid);
    }
  });
  return db;
}

std::string to_string(const CellKey& key) {
  return "(" + std::to_string(key.time) + "," + std::to_string(key.hr) + ")";
}

Partition::Partition(double tau, double delta_hr) : tau_(tau), delta_hr_(delta_hr) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ValidationError("partition: tau must be positive");
  }
  if (!(delta_hr > 0.0) || !std::isfinite(delta_hr)) {
    throw ValidationError("partition: delta_HR must be positive");
  }
  const double longest_cycle = 60.0 / kAdmissible.heart_rate.lo;
  for (int i = 0; 2.0 * i * tau < longest_cycle; ++i) {
    time_centers_.push_back((2.0 * i + 1.0) * tau);
  }
  for (int j = 0; kAdmissible.heart_rate.lo + 2.0 * j * delta_hr < kAdmissible.heart_rate.hi; ++j) {
    hr_centers_.push_back(kAdmissible.heart_rate.lo + (2.0 * j + 1.0) * delta_hr);
  }
}

bool Partition::window_contains(const CellKey& key, double phase, double heart_rate) const {
  const double tc = time_centers_.at(static_cast<std::size_t>(key.time));
  const double hc = hr_centers_.at(static_cast<std::size_t>(key.hr));
  return phase >= tc - tau_ && phase <= tc + tau_ && heart_rate >= hc - delta_hr_ &&
         heart_rate <= hc + delta_hr_;
}

double Partition::scaled_distance(const CellKey& key, double phase, double heart_rate) const {
  const double dt = (phase - time_centers_.at(static_cast<std::size_t>(key.time))) / tau_;
  const double dh = (heart_rate - hr_centers_.at(static_cast<std::size_t>(key.hr))) / delta_hr_;
  return dt * dt + dh * dh;
}

std::vector<CellKey> Partition::windows_containing(double phase, double heart_rate) const {
  std::vector<CellKey> out;
  for (int i = 0; i < static_cast<int>(time_centers_.size()); ++i) {
    for (int j = 0; j < static_cast<int>(hr_centers_.size()); ++j) {
      if (window_contains({i, j}, phase, heart_rate)) {
        out.push_back({i, j});
      }
    }
  }
  return out;
}

std::optional<CellKey> Partition::locate(double phase, double heart_rate) const {
  std::optional<CellKey> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& key : windows_containing(phase, heart_rate)) {
    if (!cells.contains(key)) {
      continue;
    }
    const double d = scaled_distance(key, phase, heart_rate);
    if (d < best_dist) {
      best = key;
      best_dist = d;
    }
  }
  return best;
}

std::optional<CellKey> Partition::nearest(double phase, double heart_rate) const {
  std::optional<CellKey> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& [key, members] : cells) {
    const double d = scaled_distance(key, phase, heart_rate);
    if (d < best_dist) {
      best = key;
      best_dist = d;
    }
  }
  return best;
}

Partition partition_database(const SnapshotDatabase& db, double tau, double delta_hr) {
  Partition part(tau, delta_hr);
  for (std::size_t k = 0; k < db.snapshots.size(); ++k) {
    const auto& y = db.snapshots[k].params;
    const auto windows = part.windows_containing(y.phase(), y.heart_rate);
    if (windows.empty()) {
      throw CoverageError("partition: snapshot " + std::to_string(k) + " (phase " +
                          fmt_double(y.phase()) + " s, HR " + fmt_double(y.heart_rate) +
                          ") matches no window");
    }
    for (const auto& key : windows) {
      part.cells[key].push_back(k);
    }
  }
  return part;
}

}  // namespace pbdw
