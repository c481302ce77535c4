#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "drtsar/accel.hpp"
#include "drtsar/scatter.hpp"
#include "drtsar/scene.hpp"

namespace drtsar {

/// Observation geometry and sampling for one SAR view.
///
/// The platform moves linearly from `start_pos` to `end_pos`, stopping at
/// `num_azimuth` equally spaced positions. At each position it emits a
/// right-looking fan of rays in the plane spanned by nadir and the horizontal
/// look direction (track x up). Incidence angles are measured from nadir and
/// the fan is cut into `angle_bins` equal bins, each sampled by `spua`
/// stratified rays jittered in angle and across the azimuth cell.
struct RadarConfig {
  WaveConfig wave = WaveConfig::make(9.6e9);
  Vec3 start_pos;
  Vec3 end_pos;
  int num_azimuth = 1;
  double alpha0 = 0.0;  // rad
  double alpha1 = 0.0;  // rad
  int angle_bins = 1;
  double range_res = 0.0;    // R_r, m
  double azimuth_res = 0.0;  // R_u, m
  int spua = 1;
  std::uint64_t seed = 0;

  // Range window. When unset, the far edge is the largest hit range over all rows
  // and the bin count covers the nearest hit.
  std::optional<double> range_origin;
  std::optional<int> num_range_bins;

  /// Throws ContractViolation naming the offending field.
  void validate() const;

  Vec3 track_direction() const;  // unit, horizontal
  Vec3 look_direction() const;   // unit, horizontal, track x up
  Vec3 platform_position(int azimuth_index) const;
  Vec3 ray_direction(double alpha) const;
  double angle_bin_width() const { return (alpha1 - alpha0) / angle_bins; }

  friend bool operator==(const RadarConfig&, const RadarConfig&) = default;
};

struct SampledRay {
  Ray ray;
  double alpha = 0.0;   // incidence angle of the sample
  int angle_bin = 0;
  double weight = 0.0;  // angular quadrature weight: bin width / spua
};

/// Ray batch for one azimuth position. Reproducible for a given seed.
std::vector<SampledRay> generate_rays(const RadarConfig& radar, int azimuth_index);

/// Rigid map from world coordinates to the mapping frame O0-UVR.
struct MapFrame {
  Mat3 rotation;
  Vec3 translation;
  double gamma = 0.0;  // relative pitch
  double beta = 0.0;   // azimuth

  static MapFrame from_angles(double gamma, double beta, const Vec3& translation);
  /// Frame whose R axis is `top_ray` and whose origin is `origin` (a point on that ray).
  static MapFrame from_top_ray(const Vec3& top_ray, const Vec3& origin);
  /// Frame for a radar: origin at the start position, R along the fan's top (alpha1) ray.
  static MapFrame for_radar(const RadarConfig& radar);
};

Vec3 world_to_map(const Vec3& p_world, const MapFrame& frame);

/// Sort permutation and range bins shared by the fast binning and the renderer.
struct RangeBinning {
  std::vector<std::uint32_t> order;  // indices sorted by range, descending (stable)
  std::vector<std::int64_t> bins;    // bins[i] belongs to order[i]
};

/// Sorts `ranges` descending and assigns bin floor((range_origin - r) / R_r).
/// Throws ContractViolation if any range exceeds the origin.
RangeBinning assign_range_bins(std::span<const double> ranges, double range_res,
                               double range_origin);

/// Sorted segment-sum range profile; entry b sums the intensities that fall in bin b.
std::vector<double> bin_ranges_fast(std::span<const double> ranges,
                                    std::span<const double> intensities, double range_res,
                                    double range_origin);

/// Azimuth x range intensity raster.
struct SarImage {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major
  double azimuth_res = 0.0;
  double range_res = 0.0;
  double range_origin = 0.0;
  std::optional<RadarConfig> radar;

  SarImage() = default;
  SarImage(int rows, int cols) : rows(rows), cols(cols), data(static_cast<std::size_t>(rows) * cols) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double max_value() const;
  double sum() const;
  bool same_shape(const SarImage& o) const { return rows == o.rows && cols == o.cols; }
};

/// Geometry-only record of one ray that hit the scene.
struct TracedHit {
  HitRecord hit;
  std::int32_t range_bin = 0;
  double weight = 0.0;
};

/// All hits of one view, per azimuth row in sorted-range order. Depends only on
/// geometry and sampling, so it can be reused while parameters change.
struct TraceResult {
  int rows = 0;
  int cols = 0;
  double range_origin = 0.0;
  MapFrame frame;
  RadarConfig radar;
  std::vector<std::size_t> row_offsets;  // size rows + 1
  std::vector<TracedHit> hits;
};

struct LedgerEntry {
  HitRecord hit;
  BsdfParams params;
  SigmaGrad sigma;
  std::int32_t range_bin = 0;
  double weight = 0.0;
};

/// Every contribution to an image, kept for the backward pass.
struct HitLedger {
  std::vector<std::size_t> row_offsets;
  std::vector<LedgerEntry> entries;

  int rows() const { return row_offsets.empty() ? 0 : static_cast<int>(row_offsets.size()) - 1; }
  std::span<const LedgerEntry> row(int r) const {
    return {entries.data() + row_offsets[r], row_offsets[r + 1] - row_offsets[r]};
  }
};

struct Scene {
  Mesh mesh;
  Bvh bvh;

  explicit Scene(Mesh m) : mesh(std::move(m)), bvh(Bvh::build(mesh)) {}
};

struct RenderOptions {
  int threads = 0;  // 0: hardware concurrency; 1: strict single-worker mode
};

struct RenderResult {
  SarImage image;
  HitLedger ledger;
};

TraceResult trace_view(const Scene& scene, const RadarConfig& radar,
                       const RenderOptions& options = {});

RenderResult shade_view(const Scene& scene, const ParamMap& params, const TraceResult& trace,
                        const ScatterModel& model, const RenderOptions& options = {});

/// Forward SAR rendering: trace, evaluate the BSDF per hit, bin by range.
RenderResult render(const Scene& scene, const ParamMap& params, const RadarConfig& radar,
                    const ScatterModel& model, const RenderOptions& options = {});

inline RenderResult render(const Scene& scene, const ParamMap& params, const RadarConfig& radar,
                           const RenderOptions& options = {}) {
  return render(scene, params, radar, DoubleScaleBsdf(radar.wave), options);
}

}  // namespace drtsar
