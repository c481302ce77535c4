#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "drtsar/scene.hpp"
#include "drtsar/vec.hpp"

namespace drtsar {

/// Self-intersection guard on the hit distance, m.
inline constexpr double kMinHitDistance = 1e-6;

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
  double t_max = std::numeric_limits<double>::infinity();
};

struct TriangleHit {
  double t;
  double m1;
  double m2;
};

/// Solves o + t d = (1 - m1 - m2) p3 + m1 p1 + m2 p2 by Cramer's rule.
/// Empty on miss, on a ray parallel to the plane, or when t is outside (kMinHitDistance, t_max].
std::optional<TriangleHit> intersect_triangle(const Ray& ray, const Vec3& p1, const Vec3& p2,
                                              const Vec3& p3);

struct HitRecord {
  std::uint32_t facet_id = 0;
  double t = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  Vec3 point;
  double cos_theta = 0.0;  // |n . d|, normal flipped to face the ray
};

struct Aabb {
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};

  void expand(const Vec3& p);
  void expand(const Aabb& b);
  bool contains(const Vec3& p) const;
  int longest_axis() const;
};

/// Binary BVH with median splits on the longest centroid axis and leaves of at most
/// kMaxLeafSize facets. Immutable after build.
class Bvh {
 public:
  static constexpr std::uint32_t kMaxLeafSize = 4;

  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // leaf: offset into facet order; inner: index of left child
    std::uint32_t count = 0;  // leaf: facet count; inner: 0 (right child = left + 1)
    bool is_leaf() const { return count > 0; }
  };

  static Bvh build(const Mesh& mesh);

  const std::vector<Node>& nodes() const { return nodes_; }
  /// Facet ids in leaf order; every facet appears exactly once.
  const std::vector<std::uint32_t>& facet_order() const { return order_; }

  /// Nearest hit among all facets; ties in t resolve to the lower facet id.
  std::optional<HitRecord> intersect(const Mesh& mesh, const Ray& ray) const;

 private:
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
};

inline Bvh build_bvh(const Mesh& mesh) { return Bvh::build(mesh); }

inline std::optional<HitRecord> intersect_scene(const Bvh& bvh, const Mesh& mesh, const Ray& ray) {
  return bvh.intersect(mesh, ray);
}

/// Fills the HitRecord fields derived from a triangle hit.
HitRecord make_hit_record(const Mesh& mesh, const Ray& ray, std::uint32_t facet_id,
                          const TriangleHit& hit);

}  // namespace drtsar
