#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "drtsar/error.hpp"
#include "drtsar/scene.hpp"
#include "oracles.hpp"

using namespace drtsar;

TEST_CASE("single triangle parses with +z normal") {
  const Mesh m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  CHECK(m.num_vertices() == 3);
  REQUIRE(m.num_facets() == 1);
  CHECK(m.facet_normals[0] == Vec3{0, 0, 1});
}

TEST_CASE("unit cube: 8 vertices, 12 facets, 6 distinct normals") {
  const Mesh m = parse_obj(oracle::kUnitCubeObj);
  CHECK(m.num_vertices() == 8);
  CHECK(m.num_facets() == 12);
  std::set<std::tuple<double, double, double>> normals;
  for (const auto& n : m.facet_normals) normals.insert({n.x, n.y, n.z});
  CHECK(normals.size() == 6);
}

TEST_CASE("out-of-range facet index is rejected") {
  CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 99\n"), FormatError);
}

TEST_CASE("degenerate facet is rejected") {
  CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n"), FormatError);
}

TEST_CASE("polygons are fan triangulated, negative indices and slashes accepted") {
  const Mesh m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2//2 3 -1\n");
  CHECK(m.num_facets() == 2);
  CHECK(m.facets[1] == Facet{0, 2, 3});
}

TEST_CASE("groups are recorded per vertex") {
  const Mesh m = parse_obj("v 0 0 0\ng a\nv 1 0 0\no b\nv 0 1 0\nf 1 2 3\n");
  CHECK(m.vertex_group == std::vector<std::uint32_t>{0, 1, 2});
  CHECK(m.find_group("b") == 2);
  CHECK(m.find_group("missing") == -1);
}

namespace {
Mesh tri() { return parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"); }
}  // namespace

TEST_CASE("interpolation examples") {
  const Mesh m = tri();
  ParamMap p(3, {});
  p[0] = {0.001, 0.1, 2.0, 0.1};
  p[1] = {0.002, 0.2, 4.0, 0.2};
  p[2] = {0.003, 0.3, 8.0, 0.3};
  CHECK(interpolate_params(m, p, 0, 1.0, 0.0) == p[0]);
  CHECK(interpolate_params(m, p, 0, 1.0 / 3, 1.0 / 3).h == doctest::Approx(0.002).epsilon(1e-15));
  CHECK(interpolate_params(m, p, 0, 0.5, 0.25).eps_r == doctest::Approx(4.0).epsilon(1e-15));
  CHECK_THROWS_AS(interpolate_params(m, p, 0, 0.8, 0.5), ContractViolation);
  CHECK_THROWS_AS(interpolate_params(m, p, 0, -0.1, 0.5), ContractViolation);
}

TEST_CASE("interpolation adjoint examples") {
  const Mesh m = tri();
  auto c = interpolation_adjoint(m, 0, 1.0, 0.0, {1, 1, 1, 1});
  CHECK(c[0].grad == BsdfParams{1, 1, 1, 1});
  CHECK(c[1].grad == BsdfParams{0, 0, 0, 0});
  c = interpolation_adjoint(m, 0, 1.0 / 3, 1.0 / 3, {3, 3, 3, 3});
  for (const auto& v : c) CHECK(v.grad.eps_r == doctest::Approx(1.0).epsilon(1e-15));
  c = interpolation_adjoint(m, 0, 0.5, 0.25, {1, 1, 1, 1});
  CHECK(c[0].grad.h == 0.5);
  CHECK(c[1].grad.h == 0.25);
  CHECK(c[2].grad.h == 0.25);
}

TEST_CASE("adjoint is the transpose of interpolation") {
  const Mesh m = tri();
  std::mt19937_64 g(5);
  for (int trial = 0; trial < 200; ++trial) {
    ParamMap p(3, {});
    for (std::size_t v = 0; v < 3; ++v) {
      p[v] = {oracle::uniform(g, -1, 1), oracle::uniform(g, -1, 1), oracle::uniform(g, -1, 1),
              oracle::uniform(g, -1, 1)};
    }
    const double m1 = oracle::uniform(g, 0, 1), m2 = oracle::uniform(g, 0, 1 - m1);
    const BsdfParams d{oracle::uniform(g, -1, 1), oracle::uniform(g, -1, 1), oracle::uniform(g, -1, 1),
                       oracle::uniform(g, -1, 1)};
    const BsdfParams z = interpolate_params(m, p, 0, m1, m2);
    double lhs = 0, rhs = 0;
    for (const Channel c : kAllChannels) lhs += get(z, c) * get(d, c);
    for (const auto& vc : interpolation_adjoint(m, 0, m1, m2, d)) {
      for (const Channel c : kAllChannels) rhs += get(p[vc.vertex], c) * get(vc.grad, c);
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("param bounds and validation") {
  CHECK(in_bounds({0.01, 0.01, 1.0, 0.0}));
  CHECK_FALSE(in_bounds({0.0, 0.01, 2.0, 0.0}));
  CHECK_FALSE(in_bounds({0.01, 0.01, 0.9, 0.0}));
  CHECK_FALSE(in_bounds({0.01, 0.01, 2.0, 1.5}));
  ParamMap p(2, {0.01, 0.01, 2.0, 0.5});
  CHECK_NOTHROW(p.validate());
  p[1].tau = -0.1;
  CHECK_THROWS_AS(p.validate(), ContractViolation);
}

TEST_CASE("parameter CSV round trip is exact") {
  const auto dir = std::filesystem::temp_directory_path() / "drtsar_scene_test";
  std::filesystem::create_directories(dir);
  ParamMap p(3, {});
  p[0] = {0.1, 0.2, 3.0, 0.4};
  p[1] = {1.0 / 3, 2.0 / 7, 75.0, 1e-17};
  p[2] = {0.002, 0.001, 6.885, 1.0};
  write_param_csv(dir / "p.csv", p);
  CHECK(read_param_csv(dir / "p.csv", 3) == p);
  CHECK_THROWS_AS(read_param_csv(dir / "p.csv", 4), FormatError);
  std::ofstream(dir / "bad.csv") << "id,h\n0,1\n";
  CHECK_THROWS_AS(read_param_csv(dir / "bad.csv", 1), FormatError);
}

TEST_CASE("group assignment") {
  const Mesh m = parse_obj("v 0 0 0\nv 1 0 0\ng roof\nv 0 1 0\nf 1 2 3\n");
  ParamMap p(3, {0.01, 0.01, 2, 0});
  p.assign_group(m, static_cast<std::uint32_t>(m.find_group("roof")), {0.02, 0.03, 4, 1});
  CHECK(p[1].h == 0.01);
  CHECK(p[2].h == 0.02);
}
