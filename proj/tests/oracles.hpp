#pragma once

// Slow, independent reference implementations used to check the fast paths.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "drtsar/accel.hpp"
#include "drtsar/scatter.hpp"
#include "drtsar/scene.hpp"

namespace oracle {

using drtsar::Vec3;

// Nearest hit over every facet, ties to the lower facet id.
inline std::optional<drtsar::HitRecord> linear_scan(const drtsar::Mesh& mesh, const drtsar::Ray& ray) {
  std::optional<drtsar::HitRecord> best;
  for (std::uint32_t f = 0; f < mesh.num_facets(); ++f) {
    const auto& idx = mesh.facets[f];
    const auto hit = drtsar::intersect_triangle(ray, mesh.vertices[idx[0]], mesh.vertices[idx[1]],
                                                mesh.vertices[idx[2]]);
    if (hit && (!best || hit->t < best->t)) best = drtsar::make_hit_record(mesh, ray, f, *hit);
  }
  return best;
}

struct MtHit {
  double t, u, v;  // point = (1-u-v) a + u b + v c
};

// Moller-Trumbore, written from scratch.
inline std::optional<MtHit> moller_trumbore(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                                            const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 p = drtsar::cross(d, e2);
  const double det = drtsar::dot(e1, p);
  if (std::abs(det) < 1e-15) return std::nullopt;
  const Vec3 s = o - a;
  const double u = drtsar::dot(s, p) / det;
  if (u < 0 || u > 1) return std::nullopt;
  const Vec3 q = drtsar::cross(s, e1);
  const double v = drtsar::dot(d, q) / det;
  if (v < 0 || u + v > 1) return std::nullopt;
  const double t = drtsar::dot(e2, q) / det;
  if (t <= 0) return std::nullopt;
  return MtHit{t, u, v};
}

// Per-hit scatter-add into floor((origin - r) / res).
struct NaiveProfile {
  std::vector<std::int64_t> bin_of_hit;
  std::vector<double> profile;
};

inline NaiveProfile naive_bin(std::span<const double> ranges, std::span<const double> intensities,
                              double res, double origin) {
  NaiveProfile out;
  std::int64_t max_bin = -1;
  for (const double r : ranges) {
    const auto b = static_cast<std::int64_t>(std::floor((origin - r) / res));
    out.bin_of_hit.push_back(b);
    max_bin = std::max(max_bin, b);
  }
  out.profile.assign(static_cast<std::size_t>(max_bin + 1), 0.0);
  for (std::size_t i = 0; i < ranges.size(); ++i) out.profile[out.bin_of_hit[i]] += intensities[i];
  return out;
}

// Straight transcriptions of the scattering formulas.
inline double wavenumber(double f) { return 2.0 * M_PI * f / 299792458.0; }

inline double spm(double theta, double h, double l, double eps, double f, bool gaussian, bool hh) {
  const double k = wavenumber(f), c = std::cos(theta), s = std::sin(theta);
  const double root = std::sqrt(eps - s * s);
  double fpq;
  if (hh) {
    fpq = std::pow((c - root) / (c + root), 2);
  } else {
    fpq = std::pow((eps - 1) * (s * s - eps * c * c) / std::pow(eps * c + root, 2), 2);
  }
  const double kd = 2 * k * s;
  const double w = gaussian ? h * h * l * l / (4 * M_PI) * std::exp(-kd * kd * l * l / 4)
                            : h * h * l * l / (M_PI * M_PI * (1 + kd * kd * l * l));
  return 8 * std::pow(k, 4) * std::pow(c, 4) * w * fpq;
}

inline double ka(double theta, double h, double l, double eps) {
  const double r0 = (1 - std::sqrt(eps)) / (1 + std::sqrt(eps));
  const double m2 = 2 * h * h / (l * l);
  return r0 * r0 / (std::pow(std::cos(theta), 4) * 2 * m2) * std::exp(-std::pow(std::tan(theta), 2) / (2 * m2));
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(g);
}

inline double log_uniform(std::mt19937_64& g, double lo, double hi) {
  return std::exp(uniform(g, std::log(lo), std::log(hi)));
}

inline double rel_diff(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

inline const std::string kUnitCubeObj = R"(v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
)";

}  // namespace oracle
