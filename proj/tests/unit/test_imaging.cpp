#include <doctest.h>

#include <cstring>

#include "drtsar/error.hpp"
#include "drtsar/image_io.hpp"
#include "drtsar/imaging.hpp"
#include "oracles.hpp"

using namespace drtsar;

namespace {

constexpr double kDeg = kPi / 180.0;

RadarConfig fan(int bins, int spua) {
  RadarConfig r;
  r.start_pos = {-1, 12, 10};
  r.end_pos = {1, 12, 10};
  r.num_azimuth = 4;
  r.alpha0 = 30 * kDeg;
  r.alpha1 = 50 * kDeg;
  r.angle_bins = bins;
  r.spua = spua;
  r.range_res = 0.1;
  r.azimuth_res = 0.2;
  r.seed = 42;
  return r;
}

// Large triangle centred on the top ray at distance d and perpendicular to it.
Mesh facet_across_top_ray(const RadarConfig& r, double d) {
  const Vec3 axis = r.ray_direction(r.alpha1);
  const Vec3 c = r.start_pos + axis * d;
  const Vec3 u = normalized(cross(axis, Vec3{0, 0, 1}));
  const Vec3 v = cross(axis, u);
  return Mesh::from_arrays({c + u * 30.0 - v * 20.0, c - u * 30.0 - v * 20.0, c + v * 30.0}, {{0, 1, 2}});
}

// Multiplies every sigma and partial by a constant.
class Scaled final : public ScatterModel {
 public:
  Scaled(WaveConfig w, double c) : inner_(w), c_(c) {}
  SigmaGrad evaluate(double cos_theta, const BsdfParams& p) const override {
    SigmaGrad g = inner_.evaluate(cos_theta, p);
    g.sigma *= c_;
    return g;
  }

 private:
  DoubleScaleBsdf inner_;
  double c_;
};

}  // namespace

TEST_CASE("radar validation names the field") {
  RadarConfig r = fan(10, 1);
  CHECK_NOTHROW(r.validate());
  r.alpha0 = r.alpha1;
  try {
    r.validate();
    FAIL("expected a violation");
  } catch (const ContractViolation& e) {
    CHECK(std::string(e.what()).find("alpha0") != std::string::npos);
  }
  r = fan(10, 1);
  r.end_pos = r.start_pos + Vec3{0, 0, 1};
  CHECK_THROWS_AS(r.validate(), ContractViolation);
  r = fan(10, 0);
  CHECK_THROWS_AS(r.validate(), ContractViolation);
}

TEST_CASE("ray fan geometry") {
  const RadarConfig r = fan(10, 1);
  CHECK(r.look_direction() == Vec3{0, -1, 0});
  const auto rays = generate_rays(r, 0);
  REQUIRE(rays.size() == 10);
  const double w = (r.alpha1 - r.alpha0) / 10;
  for (int j = 0; j < 10; ++j) {
    CHECK(rays[j].alpha == doctest::Approx(r.alpha0 + (j + 0.5) * w).epsilon(1e-15));
    CHECK(rays[j].ray.origin == r.start_pos);
    CHECK(rays[j].weight == doctest::Approx(w).epsilon(1e-15));
    CHECK(std::acos(-rays[j].ray.direction.z) == doctest::Approx(rays[j].alpha).epsilon(1e-12));
  }
  CHECK(generate_rays(r, 3)[0].ray.origin == r.end_pos);
  CHECK_THROWS_AS(generate_rays(r, 4), ContractViolation);
}

TEST_CASE("stratified jitter stays in its bin and is reproducible") {
  const RadarConfig r = fan(10, 128);
  const auto a = generate_rays(r, 1);
  const auto b = generate_rays(r, 1);
  REQUIRE(a.size() == 1280);
  REQUIRE(b.size() == a.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(SampledRay)) == 0);
  const double w = r.angle_bin_width();
  const Vec3 base = r.platform_position(1);
  for (const auto& s : a) {
    CHECK(s.alpha >= r.alpha0 + s.angle_bin * w);
    CHECK(s.alpha <= r.alpha0 + (s.angle_bin + 1) * w);
    CHECK(std::abs((s.ray.origin - base).x) <= r.azimuth_res / 2);
  }
  RadarConfig other = r;
  other.seed = 43;
  CHECK(generate_rays(other, 1)[0].alpha != a[0].alpha);
}

TEST_CASE("mapping frame at zero angles") {
  const MapFrame f = MapFrame::from_angles(0, 0, {});
  const Vec3 p = world_to_map({1, 2, 3}, f);
  CHECK(p == Vec3{-1, -3, -2});
  CHECK(world_to_map({0, 0, 0}, f) == Vec3{0, 0, 0});
  CHECK(f.rotation.determinant() == doctest::Approx(1.0));
}

TEST_CASE("mapping frame preserves distances and puts the top ray on R") {
  std::mt19937_64 g(9);
  for (int i = 0; i < 200; ++i) {
    const MapFrame f = MapFrame::from_angles(oracle::uniform(g, -3, 3), oracle::uniform(g, -1.5, 1.5),
                                             {oracle::uniform(g, -5, 5), 0, 1});
    const Vec3 p{oracle::uniform(g, -9, 9), oracle::uniform(g, -9, 9), oracle::uniform(g, -9, 9)};
    CHECK(norm(world_to_map(p, f) - f.translation) == doctest::Approx(norm(p)).epsilon(1e-13));
  }
  const RadarConfig r = fan(4, 1);
  const MapFrame f = MapFrame::for_radar(r);
  CHECK(norm(world_to_map(r.start_pos, f)) < 1e-12);
  const Vec3 q = world_to_map(r.start_pos + r.ray_direction(r.alpha1) * 7.0, f);
  CHECK(q.x == doctest::Approx(0.0));
  CHECK(q.y == doctest::Approx(0.0));
  CHECK(q.z == doctest::Approx(7.0).epsilon(1e-13));
}

TEST_CASE("range binning examples") {
  const std::vector<double> ranges{10, 9.4, 8.2}, inten{1, 2, 3};
  const RangeBinning b = assign_range_bins(ranges, 1.0, 10.0);
  CHECK(b.bins == std::vector<std::int64_t>{0, 0, 1});
  CHECK(bin_ranges_fast(ranges, inten, 1.0, 10.0) == std::vector<double>{3, 3});
  CHECK(bin_ranges_fast(std::vector<double>{4.2}, std::vector<double>{7}, 0.5, 5.0) ==
        std::vector<double>{0, 7});
  CHECK(bin_ranges_fast(std::vector<double>{3, 3, 3}, std::vector<double>{1, 2, 4}, 0.5, 3.0) ==
        std::vector<double>{7});
  CHECK_THROWS_AS(assign_range_bins(std::vector<double>{11}, 1.0, 10.0), ContractViolation);
}

TEST_CASE("binning matches the naive oracle on random hits") {
  std::mt19937_64 g(12);
  std::vector<double> r(20000), w(20000);
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = oracle::uniform(g, 80, 120);
    w[i] = oracle::uniform(g, 0, 1);
  }
  const auto fast = bin_ranges_fast(r, w, 0.05, 120.0);
  const auto slow = oracle::naive_bin(r, w, 0.05, 120.0);
  REQUIRE(fast.size() == slow.profile.size());
  for (std::size_t b = 0; b < fast.size(); ++b) CHECK(oracle::rel_diff(fast[b], slow.profile[b]) < 1e-12);
}

TEST_CASE("radar pointed away gives an all-zero image") {
  RadarConfig r = fan(8, 2);
  r.start_pos.z = -10;
  r.end_pos.z = -10;
  const Scene scene(parse_obj("v -9 -4 0\nv 9 -4 0\nv 0 12 0\nf 1 2 3\n"));
  const auto out = render(scene, ParamMap(3, {0.01, 0.05, 4, 0.5}), r);
  CHECK(out.image.rows == 4);
  CHECK(out.image.sum() == 0.0);
  CHECK(out.ledger.entries.empty());
}

TEST_CASE("facet across the top ray lands in one bin that tracks its range") {
  RadarConfig r = fan(8, 1);
  r.alpha0 = 44 * kDeg;
  r.alpha1 = 45 * kDeg;
  r.range_origin = 20.0;
  r.num_range_bins = 120;
  std::int64_t prev = -1;
  for (int k = 0; k < 5; ++k) {
    const double d = 8.05 + 0.1 * k;
    const Scene scene(facet_across_top_ray(r, d));
    const auto out = render(scene, ParamMap(3, {0.01, 0.05, 4, 0.0}), r, RenderOptions{1});
    const std::int64_t expected = static_cast<std::int64_t>(std::floor((20.0 - d) / 0.1));
    for (int row = 0; row < out.image.rows; ++row) {
      int nonzero = 0;
      for (int c = 0; c < out.image.cols; ++c) {
        if (out.image.at(row, c) != 0.0) {
          ++nonzero;
          CHECK(c == expected);
        }
      }
      CHECK(nonzero == 1);
    }
    if (k > 0) CHECK(expected == prev - 1);
    prev = expected;
  }
}

TEST_CASE("image is linear in sigma and conserves energy") {
  const RadarConfig r = fan(16, 4);
  const Scene scene(parse_obj(oracle::kUnitCubeObj +
                              "v -9 -4 -0.1\nv 9 -4 -0.1\nv 9 8 -0.1\nv -9 8 -0.1\nf 9 10 11\nf 9 11 12\n"));
  ParamMap p(scene.mesh.num_vertices(), {0.004, 0.02, 6, 0.4});
  const auto a = render(scene, p, r, Scaled(r.wave, 1.0), {1});
  const auto b = render(scene, p, r, Scaled(r.wave, 3.0), {1});
  REQUIRE(a.image.sum() > 0.0);
  for (std::size_t i = 0; i < a.image.data.size(); ++i) {
    CHECK(b.image.data[i] == doctest::Approx(3.0 * a.image.data[i]).epsilon(1e-14));
  }
  double ledger_sum = 0.0;
  for (const auto& e : a.ledger.entries) ledger_sum += e.weight * e.sigma.sigma;
  CHECK(a.image.sum() == doctest::Approx(ledger_sum).epsilon(1e-12));
}

TEST_CASE("trace once, shade many") {
  const RadarConfig r = fan(8, 2);
  const Scene scene(parse_obj(oracle::kUnitCubeObj + "v -9 -4 -0.1\nv 9 -4 -0.1\nv 0 12 -0.1\nf 9 10 11\n"));
  const ParamMap p(scene.mesh.num_vertices(), {0.003, 0.02, 9, 0.2});
  const TraceResult t = trace_view(scene, r, {1});
  const auto shaded = shade_view(scene, p, t, DoubleScaleBsdf(r.wave), {1});
  const auto direct = render(scene, p, r, {1});
  CHECK(shaded.image.data == direct.image.data);
  CHECK_THROWS_AS(shade_view(scene, ParamMap(3, {}), t, DoubleScaleBsdf(r.wave)), ContractViolation);
}

TEST_CASE("raster round trip and format errors") {
  SarImage img(2, 3);
  for (int i = 0; i < 6; ++i) img.data[i] = 0.25 * i;
  img.azimuth_res = 0.05;
  img.range_res = 0.1;
  img.range_origin = 101.5;
  const SarImage back = parse_raster(raster_bytes(img));
  CHECK(back.rows == 2);
  CHECK(back.cols == 3);
  CHECK(back.data == img.data);
  CHECK(back.range_origin == img.range_origin);
  std::string bad = raster_bytes(img);
  bad[0] = 'X';
  CHECK_THROWS_AS(parse_raster(bad), FormatError);
  CHECK_THROWS_AS(parse_raster(raster_bytes(img).substr(0, 30)), FormatError);
  CHECK_THROWS_AS(read_raster("/nonexistent/file.sarf"), FormatError);
}
