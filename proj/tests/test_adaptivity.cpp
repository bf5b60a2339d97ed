#include <catch2/catch_amalgamated.hpp>

#include <conjac/adaptivity.hpp>

#include "test_support.hpp"

using namespace conjac;
using conjac::testing::jittered_box_mesh;
using conjac::testing::uniform_materials;

namespace {

struct Rig {
  TetMesh mesh;
  std::unique_ptr<Assembler> assembler;
  VecX x;

  explicit Rig(unsigned seed) {
    mesh = jittered_box_mesh(1, 1, 1, Vec3(0.1, 0.1, 0.1), seed);
    assembler = std::make_unique<Assembler>(
        mesh, uniform_materials(mesh, make_material("snh", MaterialParams{})));
    x = Eigen::Map<const VecX>(mesh.rest_positions.data(), mesh.rest_positions.size());
  }

  RegionMap one_region() const {
    RegionMap rm;
    rm.element_region.assign(mesh.num_elements(), 0);
    rm.representative = {0};
    rm.num_regions = 1;
    return rm;
  }
};

}  // namespace

TEST_CASE("uniform stretching rates the known value") {
  // v(X) = s X gives Fdot = s I at rest, so Sdot = s I and the mean absolute
  // entry is s / 3.
  Rig rig(601);
  const double s = 0.3;
  VecX v(rig.x.size());
  for (int i = 0; i < rig.mesh.num_nodes(); ++i)
    v.segment<3>(3 * i) = s * rig.x.segment<3>(3 * i);

  const RegionMap rm = rig.one_region();
  const VecX metric = liveliness_metric(*rig.assembler, rig.x, v, rm);
  REQUIRE(metric.size() == 1);
  REQUIRE_THAT(metric(0), Catch::Matchers::WithinAbs(0.1, 1e-12));

  // Compression rates the same magnitude.
  const VecX metric_c = liveliness_metric(*rig.assembler, rig.x, -v, rm);
  REQUIRE_THAT(metric_c(0), Catch::Matchers::WithinAbs(0.1, 1e-12));
}

TEST_CASE("rigid velocity fields rate as quiet") {
  Rig rig(602);
  const Vec3 omega(1.3, -0.7, 2.1), trans(0.4, 0.2, -0.1);
  VecX v(rig.x.size());
  for (int i = 0; i < rig.mesh.num_nodes(); ++i)
    v.segment<3>(3 * i) = omega.cross(Vec3(rig.x.segment<3>(3 * i))) + trans;

  const VecX metric = liveliness_metric(*rig.assembler, rig.x, v, rig.one_region());
  REQUIRE(metric(0) < 1e-10);
}

TEST_CASE("region metric is the weighted mean of element rates") {
  Rig rig(603);
  std::mt19937 rng(604);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  VecX v(rig.x.size());
  for (int d = 0; d < v.size(); ++d) v(d) = u(rng);

  // One region per element exposes the raw element rates.
  RegionMap per_element;
  per_element.num_regions = rig.mesh.num_elements();
  per_element.representative.assign(per_element.num_regions, 0);
  for (int e = 0; e < per_element.num_regions; ++e) per_element.element_region.push_back(e);
  const VecX rates = liveliness_metric(*rig.assembler, rig.x, v, per_element);
  REQUIRE(rates.minCoeff() > 0.0);

  const RegionMap rm = rig.one_region();
  const VecX weighted = liveliness_metric(*rig.assembler, rig.x, v, rm, true);
  const VecX plain = liveliness_metric(*rig.assembler, rig.x, v, rm, false);

  double wsum = 0.0, vol = 0.0;
  for (int e = 0; e < rig.mesh.num_elements(); ++e) {
    wsum += rig.mesh.rest_volume[e] * rates(e);
    vol += rig.mesh.rest_volume[e];
  }
  REQUIRE_THAT(weighted(0), Catch::Matchers::WithinRel(wsum / vol, 1e-12));
  REQUIRE_THAT(plain(0), Catch::Matchers::WithinRel(rates.mean(), 1e-12));
}

TEST_CASE("windowed average tracks the most recent entries") {
  AdaptivityConfig cfg;
  cfg.window = 2;
  AdaptivityState state(cfg, 1);
  REQUIRE(state.windowed_average()(0) == 0.0);

  VecX m(1);
  m << 1.0;
  state.push(m);
  REQUIRE_THAT(state.windowed_average()(0), Catch::Matchers::WithinAbs(1.0, 1e-15));
  m << 2.0;
  state.push(m);
  REQUIRE_THAT(state.windowed_average()(0), Catch::Matchers::WithinAbs(1.5, 1e-15));
  m << 3.0;
  state.push(m);  // the first entry falls out of the window
  REQUIRE_THAT(state.windowed_average()(0), Catch::Matchers::WithinAbs(2.5, 1e-15));

  VecX wrong(2);
  REQUIRE_THROWS_AS(state.push(wrong), ConfigError);
}

TEST_CASE("liveliness needs the average to exceed the threshold") {
  Rig rig(605);
  const RegionMap rm = rig.one_region();
  AdaptivityConfig cfg;
  cfg.threshold = 1.0;
  cfg.window = 4;
  AdaptivityState state(cfg, 1);

  VecX m(1);
  m << 1.0;  // exactly at threshold: stays quiet
  for (int i = 0; i < 4; ++i) state.push(m);
  REQUIRE(state.lively_regions(*rig.assembler, rm)[0] == 0);

  m << 1.2;
  for (int i = 0; i < 4; ++i) state.push(m);
  REQUIRE(state.lively_regions(*rig.assembler, rm)[0] == 1);

  m << 0.0;  // decays back under the threshold after enough quiet steps
  state.push(m);
  REQUIRE(state.lively_regions(*rig.assembler, rm)[0] == 0);
}

TEST_CASE("emptied regions and orphaned representatives are forced quiet") {
  Rig rig(606);
  const RegionMap rm = rig.one_region();
  AdaptivityConfig cfg;
  cfg.threshold = 0.5;
  AdaptivityState state(cfg, 1);
  VecX m(1);
  m << 10.0;
  state.push(m);
  REQUIRE(state.lively_regions(*rig.assembler, rm)[0] == 1);

  // Remove every element: the region empties and its representative orphans.
  std::vector<int> all(rig.mesh.num_elements());
  for (int e = 0; e < rig.mesh.num_elements(); ++e) all[e] = e;
  rig.assembler->remove_elements(all);
  REQUIRE(state.lively_regions(*rig.assembler, rm)[0] == 0);

  // The metric of an empty region is zero, not NaN.
  const VecX metric = liveliness_metric(*rig.assembler, rig.x, VecX::Ones(rig.x.size()), rm);
  REQUIRE(metric(0) == 0.0);
}

TEST_CASE("dynamic node selection merges pins and lively reps without repeats") {
  RegionMap rm;
  rm.num_regions = 3;
  rm.element_region = {0, 1, 2};
  rm.representative = {5, 7, 5};  // regions 0 and 2 share a representative

  const std::vector<char> lively = {1, 1, 1};
  const std::vector<int> out = select_dynamic_nodes({5, 9}, rm, lively);
  REQUIRE(out == std::vector<int>{5, 9, 7});

  const std::vector<char> none = {0, 0, 0};
  REQUIRE(select_dynamic_nodes({3}, rm, none) == std::vector<int>{3});
}

TEST_CASE("region map and config validation") {
  RegionMap rm;
  rm.num_regions = 2;
  rm.element_region = {0, 1, 0};
  rm.representative = {0, 4};
  REQUIRE_NOTHROW(rm.validate(3, 8));
  REQUIRE_THROWS_AS(rm.validate(4, 8), ConfigError);  // uncovered element
  rm.element_region = {0, 2, 0};
  REQUIRE_THROWS_AS(rm.validate(3, 8), ConfigError);  // unknown region id
  rm.element_region = {0, 1, 0};
  rm.representative = {0, 9};
  REQUIRE_THROWS_AS(rm.validate(3, 8), ConfigError);  // representative out of range
  rm.representative = {0};
  REQUIRE_THROWS_AS(rm.validate(3, 8), ConfigError);  // wrong representative count

  AdaptivityConfig cfg;
  cfg.window = 0;
  REQUIRE_THROWS_AS(AdaptivityState(cfg, 1), ConfigError);
  cfg.window = 5;
  cfg.threshold = -1.0;
  REQUIRE_THROWS_AS(AdaptivityState(cfg, 1), ConfigError);
}
