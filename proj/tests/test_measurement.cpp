#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "pbdw/errors.hpp"
#include "pbdw/measurement.hpp"

using namespace pbdw;
namespace fs = std::filesystem;

namespace {

std::set<Index> region_points(const GridConfig& grid, Region region) {
  std::set<Index> out;
  const int segments = region == Region::common ? 1 : kSegments;
  for (int s = 0; s < segments; ++s) {
    for (int k = 0; k < grid.axial_stations; ++k) {
      for (int j = 0; j < grid.cross_points; ++j) {
        out.insert(grid.point(static_cast<Segment>(s), k, j));
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("voxel partition") {
  const GridConfig grid;
  CHECK(build_voxels(grid, Region::common, 2, 2).size() == 32);
  CHECK(build_voxels(grid, Region::common, grid.axial_stations, grid.cross_points).size() == 1);
  CHECK(build_voxels(grid, Region::full, 2, 2).size() == 96);
  CHECK_THROWS_AS(build_voxels(grid, Region::common, 3, 2), ValidationError);

  for (Region region : {Region::common, Region::full}) {
    for (auto [ba, bc] : {std::pair{1, 1}, std::pair{2, 4}, std::pair{4, 8}}) {
      const auto vox = build_voxels(grid, region, ba, bc);
      std::set<Index> covered;
      std::size_t total = 0;
      for (const auto& v : vox.voxels) {
        CHECK(v.size() == static_cast<std::size_t>(ba * bc));
        total += v.size();
        covered.insert(v.begin(), v.end());
      }
      CHECK(total == covered.size());
      CHECK(covered == region_points(grid, region));
    }
  }
}

TEST_CASE("CFI representers") {
  const GridConfig grid;
  const auto space = grid_space(grid);
  const auto vox = build_voxels(grid, Region::common, 2, 2);

  SUBCASE("zero beam angle only touches axial components") {
    const auto meas = cfi_space(vox, 0.0, space);
    const Matrix& r = meas->representers().vectors();
    for (Index p = 0; p < grid.points(); ++p) {
      CHECK(r.row(2 * p + 1).isZero(0.0));
    }
  }
  SUBCASE("orthonormal family") {
    const auto meas = cfi_space(vox, grid.beam_angle, space);
    CHECK(meas->m() == 32);
    const Matrix g = gram(meas->representers(), meas->representers());
    CHECK((g - Matrix::Identity(32, 32)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("raw measurement of the beam field is the voxel volume") {
    const double angle = grid.beam_angle;
    const auto meas = cfi_space(vox, angle, space);
    Vector u = Vector::Zero(grid.dofs());
    for (Index p : region_points(grid, Region::common)) {
      u[2 * p] = std::cos(angle);
      u[2 * p + 1] = std::sin(angle);
    }
    const Vector values = observe(*meas, u);
    const double w = space->weights()[0];
    for (Index i = 0; i < meas->m(); ++i) {
      const double volume = w * static_cast<double>(vox.voxels[static_cast<std::size_t>(i)].size());
      CHECK(values[i] * meas->raw_norms()[i] == doctest::Approx(volume).epsilon(1e-13));
    }
  }
}

TEST_CASE("VFI space") {
  const GridConfig grid;
  const auto space = grid_space(grid);
  const auto vox = build_voxels(grid, Region::common, 2, 2);
  const auto cfi = cfi_space(vox, grid.beam_angle, space);
  const auto vfi = vfi_space(vox, grid.beam_angle, space);
  CHECK(vfi->m() == 2 * cfi->m());
  for (Index i = 0; i < cfi->m(); ++i) {
    const Vector r = cfi->representers().vector(i);
    CHECK(norm(*space, r - project(vfi->representers(), r).projection) <= 1e-12);
  }
  CHECK(vfi->label(0).second == "beam");
  CHECK(vfi->label(cfi->m()).second == "perp");

  const auto db = sample_database(ParameterRanges{}, 20, 1, grid, 41, HealthFilter::all, 1);
  for (const auto& s : db.snapshots) {
    const double ec = norm(*space, s.coeffs - project(cfi->representers(), s.coeffs).projection);
    const double ev = norm(*space, s.coeffs - project(vfi->representers(), s.coeffs).projection);
    CHECK(ev <= ec + 1e-12);
  }
}

TEST_CASE("observe") {
  const GridConfig grid;
  const auto space = grid_space(grid);
  const auto vox = build_voxels(grid, Region::common, 2, 2);
  const double angle = grid.beam_angle;
  const auto meas = cfi_space(vox, angle, space);

  CHECK(observe(*meas, Vector::Zero(grid.dofs())).isZero(0.0));

  Vector perp = Vector::Zero(grid.dofs());
  for (Index p = 0; p < grid.points(); ++p) {
    perp[2 * p] = -std::sin(angle);
    perp[2 * p + 1] = std::cos(angle);
  }
  CHECK(observe(*meas, perp).cwiseAbs().maxCoeff() <= 1e-15);

  const auto db = sample_database(ParameterRanges{}, 5, 2, grid, 42, HealthFilter::all, 1);
  for (const auto& s : db.snapshots) {
    const Vector got = observe(*meas, s.coeffs);
    const Vector ref = oracle::voxel_observation(grid, vox.voxels, angle, s.coeffs, space->weights());
    CHECK((got - ref).cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
  }

  const Observation obs = observe(meas, db.snapshots[0]);
  CHECK(observe(*meas, lift(obs)).isApprox(obs.values, 1e-12));
  CHECK_THROWS_AS(observe(*meas, Vector::Zero(5)), DimensionError);

  const auto other = cfi_space(build_voxels(grid, Region::full, 2, 2), angle, space);
  CHECK_THROWS_AS(check_observation(obs, *other), IncompatibleSpaceError);
}

TEST_CASE("observation files") {
  const GridConfig grid;
  const auto space = grid_space(grid);
  const auto meas = vfi_space(build_voxels(grid, Region::common, 2, 2), grid.beam_angle, space);
  const auto db = sample_database(ParameterRanges{}, 1, 1, grid, 43, HealthFilter::all, 1);
  const Observation obs = observe(meas, db.snapshots[0]);
  const fs::path file = fs::temp_directory_path() / "pbdwkit_test_obs.csv";
  save_observation(obs, file);
  {
    std::ifstream in(file);
    std::string header;
    std::getline(in, header);
    CHECK(header == "voxel_index,component,value");
  }
  const Observation back = load_observation(file, meas);
  CHECK(back.values == obs.values);

  const auto cfi = cfi_space(build_voxels(grid, Region::common, 2, 2), grid.beam_angle, space);
  CHECK_THROWS(load_observation(file, cfi));
  fs::remove(file);
}
