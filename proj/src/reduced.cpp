#include "pbdw/reduced.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "io_util.hpp"
#include "pbdw/errors.hpp"

namespace pbdw {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kEigenDropTol = 1e-24;
constexpr double kGreedyStopTol = 1e-12;

void require_columns(const Matrix& columns, const SpacePtr& space, const char* what) {
  if (!space) {
    throw ValidationError(std::string(what) + ": null space");
  }
  if (columns.cols() == 0) {
    throw ValidationError(std::string(what) + ": no snapshots");
  }
  if (columns.rows() != space->dim()) {
    throw DimensionError(std::string(what) + ": snapshot length differs from the space");
  }
}

void require_n_max(Index n_max, Index count, const char* what) {
  if (n_max < 1 || n_max > count) {
    throw ValidationError(std::string(what) + ": n_max = " + std::to_string(n_max) +
                          " must lie in [1, " + std::to_string(count) + "]");
  }
}

}  // namespace

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::greedy:
      return "greedy";
    case Provenance::omp:
      return "omp";
    default:
      return "pod";
  }
}

Provenance parse_provenance(const std::string& s) {
  if (s == "pod") return Provenance::pod;
  if (s == "greedy") return Provenance::greedy;
  if (s == "omp") return Provenance::omp;
  throw ValidationError("unknown basis provenance '" + s + "'");
}

ReducedBasis ReducedBasis::prefix(Index n) const {
  ReducedBasis out{modes.prefix(n), std::nullopt, nominal, provenance, source, {}, truncated};
  if (singular_values) {
    out.singular_values = singular_values->head(std::min(n, singular_values->size()));
  }
  out.picks.assign(picks.begin(), picks.begin() + std::min<std::size_t>(static_cast<std::size_t>(n), picks.size()));
  return out;
}

Vector nominal_state(const Matrix& columns) {
  if (columns.cols() == 0) {
    throw ValidationError("nominal_state: no snapshots");
  }
  Vector sum = Vector::Zero(columns.rows());
  for (Index k = 0; k < columns.cols(); ++k) {
    sum += columns.col(k);
  }
  return sum / static_cast<double>(columns.cols());
}

Matrix snapshot_matrix(std::span<const Snapshot> snaps) {
  if (snaps.empty()) {
    return Matrix();
  }
  Matrix out(snaps.front().coeffs.size(), static_cast<Index>(snaps.size()));
  for (std::size_t k = 0; k < snaps.size(); ++k) {
    if (snaps[k].coeffs.size() != out.rows()) {
      throw DimensionError("snapshot lengths differ");
    }
    out.col(static_cast<Index>(k)) = snaps[k].coeffs;
  }
  return out;
}

Vector nominal_state(std::span<const Snapshot> snaps) { return nominal_state(snapshot_matrix(snaps)); }

ReducedBasis pod(const Matrix& columns, const SpacePtr& space, Index n_max, bool center) {
  require_columns(columns, space, "pod");
  require_n_max(n_max, columns.cols(), "pod");

  std::optional<Vector> mean;
  Matrix s = columns;
  if (center) {
    mean = nominal_state(columns);
    s.colwise() -= *mean;
  }

  // Eigenpairs of the smaller of the two Gram matrices: the K x K snapshot
  // correlation S^T M S, or the N x N covariance M^1/2 S S^T M^1/2 when K > N.
  // Both carry the same nonzero spectrum.
  const bool by_covariance = s.cols() > s.rows();
  const Vector sqrt_w = space->weights().cwiseSqrt();
  Matrix corr;
  if (by_covariance) {
    const Matrix b = sqrt_w.asDiagonal() * s;
    corr = b * b.transpose();
  } else {
    corr = weighted_cross(*space, s, s);
  }
  corr = 0.5 * (corr + corr.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(corr);
  if (eig.info() != Eigen::Success) {
    throw InvariantError("pod: eigendecomposition failed");
  }
  const Vector& vals = eig.eigenvalues();  // ascending
  const Index k = vals.size();
  const double top = vals[k - 1];
  if (!(top > 0.0)) {
    throw RankZeroError("pod: snapshot set has zero energy");
  }

  Index keep = 0;
  while (keep < std::min(n_max, k) && vals[k - 1 - keep] > kEigenDropTol * top) {
    ++keep;
  }
  Matrix raw(s.rows(), keep);
  Vector sigma(keep);
  for (Index i = 0; i < keep; ++i) {
    sigma[i] = std::sqrt(vals[k - 1 - i]);
    if (by_covariance) {
      raw.col(i) = sqrt_w.cwiseInverse().asDiagonal() * eig.eigenvectors().col(k - 1 - i);
    } else {
      raw.col(i) = s * eig.eigenvectors().col(k - 1 - i) / sigma[i];
    }
  }
  Basis modes = orthonormalize(raw, space);
  const Index kept = modes.size();
  return ReducedBasis{std::move(modes), Vector(sigma.head(kept)), mean, Provenance::pod,
                      "global", {}, false};
}

ReducedBasis pod(std::span<const Snapshot> snaps, const SpacePtr& space, Index n_max, bool center) {
  return pod(snapshot_matrix(snaps), space, n_max, center);
}

ReducedBasis strong_greedy(const Matrix& columns, const SpacePtr& space, Index n_max) {
  require_columns(columns, space, "strong_greedy");
  require_n_max(n_max, columns.cols(), "strong_greedy");
  const Vector& w = space->weights();
  const auto metric_norm = [&w](const auto& v) { return std::sqrt((w.array() * v.array().square()).sum()); };

  const Vector mean = nominal_state(columns);
  double largest = 0.0;
  for (Index c = 0; c < columns.cols(); ++c) {
    largest = std::max(largest, metric_norm(columns.col(c)));
  }
  if (!(largest > 0.0)) {
    throw RankZeroError("strong_greedy: snapshot set has zero energy");
  }
  const double stop = kGreedyStopTol * largest;

  Matrix q(columns.rows(), n_max);
  Index count = 0;
  Matrix residual = columns;
  std::vector<long> picks;

  const auto append = [&](Vector v) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Index e = 0; e < count; ++e) {
        v -= (w.array() * q.col(e).array() * v.array()).sum() * q.col(e);
      }
    }
    v /= metric_norm(v);
    apply_sign_convention(v);
    q.col(count++) = v;
    const Eigen::RowVectorXd coef = v.transpose() * (residual.array().colwise() * w.array()).matrix();
    residual -= v * coef;
  };

  // A zero mean cannot span V_1; the argmax rule then starts from step 1.
  if (metric_norm(mean) > stop) {
    append(mean);
    picks.push_back(-1);
  }
  bool truncated = false;
  while (count < n_max) {
    Vector scores(residual.cols());
    for (Index c = 0; c < residual.cols(); ++c) {
      scores[c] = metric_norm(residual.col(c));
    }
    const double best = scores.maxCoeff();
    if (best <= stop) {
      truncated = true;
      break;
    }
    Index pick = 0;
    while (scores[pick] < best * (1.0 - kTieTolerance)) {
      ++pick;
    }
    picks.push_back(static_cast<long>(pick));
    append(residual.col(pick));
  }
  return ReducedBasis{Basis(space, q.leftCols(count), true), std::nullopt, mean,
                      Provenance::greedy, "global", std::move(picks), truncated};
}

ReducedBasis strong_greedy(std::span<const Snapshot> snaps, const SpacePtr& space, Index n_max) {
  return strong_greedy(snapshot_matrix(snaps), space, n_max);
}

void save_basis(const ReducedBasis& basis, const fs::path& dir) {
  if (dir.empty()) {
    throw IoError("save_basis: empty path");
  }
  detail::ensure_directory(dir);
  json manifest;
  manifest["version"] = kBasisFormatVersion;
  manifest["provenance"] = to_string(basis.provenance);
  manifest["source"] = basis.source;
  manifest["n"] = basis.size();
  manifest["N"] = basis.modes.space()->dim();
  manifest["nominal"] = basis.nominal.has_value();
  manifest["truncated"] = basis.truncated;
  manifest["picks"] = basis.picks;
  if (basis.singular_values) {
    manifest["singular_values"] =
        std::vector<double>(basis.singular_values->data(),
                            basis.singular_values->data() + basis.singular_values->size());
  } else {
    manifest["singular_values"] = nullptr;
  }
  detail::write_json(dir / "basis_manifest.json", manifest);

  const Matrix& v = basis.modes.vectors();
  detail::write_f64(dir / "modes.f64", std::vector<double>(v.data(), v.data() + v.size()));
  std::error_code ec;
  fs::remove(dir / "nominal.f64", ec);
  if (basis.nominal) {
    detail::write_f64(dir / "nominal.f64",
                      std::vector<double>(basis.nominal->data(),
                                          basis.nominal->data() + basis.nominal->size()));
  }
}

ReducedBasis load_basis(const fs::path& dir, const SpacePtr& space) {
  if (dir.empty()) {
    throw IoError("load_basis: empty path");
  }
  if (!space) {
    throw ValidationError("load_basis: null space");
  }
  const json manifest = detail::read_json(dir / "basis_manifest.json");
  try {
    if (manifest.at("version").get<int>() != kBasisFormatVersion) {
      throw IntegrityError("load_basis: unsupported format version");
    }
    const Index n = manifest.at("n").get<Index>();
    const Index dim = manifest.at("N").get<Index>();
    if (dim != space->dim()) {
      throw IncompatibleSpaceError("load_basis: basis has N = " + std::to_string(dim) +
                                   ", space has " + std::to_string(space->dim()));
    }
    if (n < 1) {
      throw IntegrityError("load_basis: empty basis");
    }
    const auto modes = detail::read_f64(dir / "modes.f64", static_cast<long long>(n * dim));
    ReducedBasis out{Basis(space, Eigen::Map<const Matrix>(modes.data(), dim, n), true),
                     std::nullopt,
                     std::nullopt,
                     parse_provenance(manifest.at("provenance").get<std::string>()),
                     manifest.at("source").get<std::string>(),
                     manifest.at("picks").get<std::vector<long>>(),
                     manifest.at("truncated").get<bool>()};
    if (!manifest.at("singular_values").is_null()) {
      const auto sv = manifest.at("singular_values").get<std::vector<double>>();
      out.singular_values = Eigen::Map<const Vector>(sv.data(), static_cast<Index>(sv.size()));
    }
    if (manifest.at("nominal").get<bool>()) {
      const auto nom = detail::read_f64(dir / "nominal.f64", static_cast<long long>(dim));
      out.nominal = Eigen::Map<const Vector>(nom.data(), dim);
    }
    return out;
  } catch (const json::exception& e) {
    throw IntegrityError("load_basis: corrupt manifest (" + std::string(e.what()) + ")");
  }
}

}  // namespace pbdw
