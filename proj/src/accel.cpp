#include "drtsar/accel.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "drtsar/error.hpp"

namespace drtsar {

std::optional<TriangleHit> intersect_triangle(const Ray& ray, const Vec3& p1, const Vec3& p2,
                                              const Vec3& p3) {
  const Vec3 h = ray.origin - p3;
  const Vec3 h1 = p1 - p3;
  const Vec3 h2 = p2 - p3;
  const Vec3 f1 = cross(ray.direction, h2);
  const double det = dot(f1, h1);
  if (std::abs(det) <= 1e-14 * (dot(h1, h1) + dot(h2, h2))) return std::nullopt;

  const double inv = 1.0 / det;
  const double m1 = dot(f1, h) * inv;
  if (m1 < 0.0 || m1 > 1.0) return std::nullopt;
  const Vec3 f2 = cross(h, h1);
  const double m2 = dot(f2, ray.direction) * inv;
  if (m2 < 0.0 || m1 + m2 > 1.0) return std::nullopt;
  const double t = dot(f2, h2) * inv;
  if (!(t > kMinHitDistance) || t > ray.t_max) return std::nullopt;
  return TriangleHit{t, m1, m2};
}

HitRecord make_hit_record(const Mesh& mesh, const Ray& ray, std::uint32_t facet_id,
                          const TriangleHit& hit) {
  HitRecord rec;
  rec.facet_id = facet_id;
  rec.t = hit.t;
  rec.m1 = hit.m1;
  rec.m2 = hit.m2;
  rec.point = ray.origin + ray.direction * hit.t;
  rec.cos_theta = std::min(1.0, std::abs(dot(mesh.facet_normals[facet_id], ray.direction)));
  return rec;
}

void Aabb::expand(const Vec3& p) {
  lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
  hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
}

void Aabb::expand(const Aabb& b) {
  expand(b.lo);
  expand(b.hi);
}

bool Aabb::contains(const Vec3& p) const {
  return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
}

int Aabb::longest_axis() const {
  const Vec3 e = hi - lo;
  if (e.x >= e.y && e.x >= e.z) return 0;
  return e.y >= e.z ? 1 : 2;
}

namespace {

struct BuildItem {
  std::uint32_t node;
  std::uint32_t begin;
  std::uint32_t end;
};

// Slab test against [0, t_far]; boxes are padded at build time so rays lying on a
// face plane are not culled.
bool hits_box(const Aabb& b, const Vec3& origin, const Vec3& inv_dir, double t_far) {
  double t0 = 0.0;
  double t1 = t_far;
  for (int a = 0; a < 3; ++a) {
    double lo = (b.lo[a] - origin[a]) * inv_dir[a];
    double hi = (b.hi[a] - origin[a]) * inv_dir[a];
    if (lo > hi) std::swap(lo, hi);
    // NaN (0 * inf) leaves the interval untouched.
    if (lo > t0) t0 = lo;
    if (hi < t1) t1 = hi;
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

Bvh Bvh::build(const Mesh& mesh) {
  if (mesh.num_facets() == 0) throw ContractViolation("cannot build a BVH over an empty mesh");

  const std::size_t n = mesh.num_facets();
  std::vector<Aabb> boxes(n);
  std::vector<Vec3> centroids(n);
  for (std::size_t f = 0; f < n; ++f) {
    for (const auto v : mesh.facets[f]) boxes[f].expand(mesh.vertices[v]);
    const Vec3 pad = (boxes[f].hi - boxes[f].lo) * 1e-9 + Vec3{1e-12, 1e-12, 1e-12};
    boxes[f].lo -= pad;
    boxes[f].hi += pad;
    centroids[f] = (boxes[f].lo + boxes[f].hi) * 0.5;
  }

  Bvh bvh;
  bvh.order_.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) bvh.order_[i] = i;
  bvh.nodes_.reserve(2 * n);
  bvh.nodes_.push_back({});

  std::vector<BuildItem> stack{{0, 0, static_cast<std::uint32_t>(n)}};
  while (!stack.empty()) {
    const BuildItem item = stack.back();
    stack.pop_back();

    Aabb box;
    Aabb centroid_box;
    for (std::uint32_t i = item.begin; i < item.end; ++i) {
      box.expand(boxes[bvh.order_[i]]);
      centroid_box.expand(centroids[bvh.order_[i]]);
    }
    bvh.nodes_[item.node].box = box;

    const std::uint32_t count = item.end - item.begin;
    if (count <= kMaxLeafSize) {
      bvh.nodes_[item.node].first = item.begin;
      bvh.nodes_[item.node].count = count;
      continue;
    }

    const int axis = centroid_box.longest_axis();
    const std::uint32_t mid = item.begin + count / 2;
    std::nth_element(bvh.order_.begin() + item.begin, bvh.order_.begin() + mid,
                     bvh.order_.begin() + item.end, [&](std::uint32_t a, std::uint32_t b) {
                       const double ca = centroids[a][axis];
                       const double cb = centroids[b][axis];
                       return ca < cb || (ca == cb && a < b);
                     });

    const auto left = static_cast<std::uint32_t>(bvh.nodes_.size());
    bvh.nodes_.push_back({});
    bvh.nodes_.push_back({});
    bvh.nodes_[item.node].first = left;
    bvh.nodes_[item.node].count = 0;
    stack.push_back({left + 1, mid, item.end});
    stack.push_back({left, item.begin, mid});
  }
  return bvh;
}

std::optional<HitRecord> Bvh::intersect(const Mesh& mesh, const Ray& ray) const {
  const Vec3 inv{1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z};

  std::optional<TriangleHit> best;
  std::uint32_t best_facet = 0;
  Ray probe = ray;

  std::array<std::uint32_t, 128> stack;
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    const double t_far = best ? best->t : ray.t_max;
    if (!hits_box(node.box, ray.origin, inv, t_far)) continue;

    if (node.is_leaf()) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t f = order_[i];
        const Facet& tri = mesh.facets[f];
        probe.t_max = best ? best->t : ray.t_max;
        const auto hit = intersect_triangle(probe, mesh.vertices[tri[0]], mesh.vertices[tri[1]],
                                            mesh.vertices[tri[2]]);
        if (hit && (!best || hit->t < best->t || (hit->t == best->t && f < best_facet))) {
          best = hit;
          best_facet = f;
        }
      }
      continue;
    }
    // Visit the nearer child first.
    const std::uint32_t left = node.first;
    const std::uint32_t right = node.first + 1;
    const int axis = node.box.longest_axis();
    if (ray.direction[axis] >= 0.0) {
      stack[top++] = right;
      stack[top++] = left;
    } else {
      stack[top++] = left;
      stack[top++] = right;
    }
  }

  if (!best) return std::nullopt;
  return make_hit_record(mesh, ray, best_facet, *best);
}

}  // namespace drtsar
