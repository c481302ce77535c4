#include "drtsar/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "drtsar/error.hpp"
#include "drtsar/parallel.hpp"

namespace drtsar {

namespace {

constexpr Vec3 kUp{0.0, 0.0, 1.0};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Uniform in [0, 1) with 53 random bits; independent of the standard library's
// distribution implementation.
double unit_uniform(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw ContractViolation(std::string("radar.") + field + ": " + what);
}

}  // namespace

void RadarConfig::validate() const {
  require(num_azimuth >= 1, "num_azimuth", "must be >= 1");
  require(alpha0 >= 0.0, "alpha0", "must be >= 0");
  require(alpha0 < alpha1, "alpha0", "must be < alpha1");
  require(alpha1 < kPi / 2, "alpha1", "must be < 90 degrees");
  require(angle_bins >= 1, "angle_bins", "must be >= 1");
  require(range_res > 0.0, "range_res", "must be > 0");
  require(azimuth_res > 0.0, "azimuth_res", "must be > 0");
  require(spua >= 1, "spua", "must be >= 1");
  require(is_finite(start_pos) && is_finite(end_pos), "start_pos", "must be finite");
  const Vec3 track = end_pos - start_pos;
  const Vec3 horizontal{track.x, track.y, 0.0};
  require(norm(horizontal) > 1e-9 * std::max(1.0, norm(track)), "end_pos",
          "track must have a horizontal component (start_pos != end_pos)");
  require(!num_range_bins || *num_range_bins >= 1, "num_range_bins", "must be >= 1");
  require(wave.frequency > 0.0, "frequency", "must be > 0");
}

Vec3 RadarConfig::track_direction() const {
  const Vec3 track = end_pos - start_pos;
  return normalized(Vec3{track.x, track.y, 0.0});
}

Vec3 RadarConfig::look_direction() const { return cross(track_direction(), kUp); }

Vec3 RadarConfig::platform_position(int azimuth_index) const {
  if (num_azimuth == 1) return start_pos;
  const double s = static_cast<double>(azimuth_index) / (num_azimuth - 1);
  return start_pos + (end_pos - start_pos) * s;
}

Vec3 RadarConfig::ray_direction(double alpha) const {
  return normalized(std::cos(alpha) * -kUp + std::sin(alpha) * look_direction());
}

std::vector<SampledRay> generate_rays(const RadarConfig& radar, int azimuth_index) {
  if (azimuth_index < 0 || azimuth_index >= radar.num_azimuth) {
    throw ContractViolation("azimuth index " + std::to_string(azimuth_index) + " out of range [0, " +
                            std::to_string(radar.num_azimuth) + ")");
  }
  const Vec3 base = radar.platform_position(azimuth_index);
  const Vec3 track = radar.track_direction();
  const double bin_width = radar.angle_bin_width();
  const double weight = bin_width / radar.spua;
  const bool jitter = radar.spua > 1;

  std::mt19937_64 gen(splitmix64(radar.seed ^ splitmix64(static_cast<std::uint64_t>(azimuth_index))));

  std::vector<SampledRay> rays;
  rays.reserve(static_cast<std::size_t>(radar.angle_bins) * radar.spua);
  for (int j = 0; j < radar.angle_bins; ++j) {
    for (int s = 0; s < radar.spua; ++s) {
      double frac = 0.5;
      double offset = 0.0;
      if (jitter) {
        frac = (s + unit_uniform(gen)) / radar.spua;
        offset = (unit_uniform(gen) - 0.5) * radar.azimuth_res;
      }
      SampledRay r;
      r.alpha = radar.alpha0 + bin_width * (j + frac);
      r.angle_bin = j;
      r.weight = weight;
      r.ray.origin = base + track * offset;
      r.ray.direction = radar.ray_direction(r.alpha);
      rays.push_back(r);
    }
  }
  return rays;
}

MapFrame MapFrame::from_angles(double gamma, double beta, const Vec3& translation) {
  const double cg = std::cos(gamma), sg = std::sin(gamma);
  const double cb = std::cos(beta), sb = std::sin(beta);
  MapFrame f;
  f.gamma = gamma;
  f.beta = beta;
  f.rotation.rows = {Vec3{-cb, -cg * sb, -sg * sb}, Vec3{0.0, sg, -cg},
                     Vec3{sb, -cg * cb, -sg * cb}};
  f.translation = translation;
  return f;
}

MapFrame MapFrame::from_top_ray(const Vec3& top_ray, const Vec3& origin) {
  const Vec3 d = normalized(top_ray);
  const double sb = std::clamp(d.x, -1.0, 1.0);
  const double cb = std::sqrt(std::max(0.0, 1.0 - sb * sb));
  if (cb < 1e-12) throw ContractViolation("top ray parallel to the world x axis; frame undefined");
  const double beta = std::asin(sb);
  const double gamma = std::atan2(-d.z / cb, -d.y / cb);
  MapFrame f = from_angles(gamma, beta, {});
  f.translation = -(f.rotation * origin);
  return f;
}

MapFrame MapFrame::for_radar(const RadarConfig& radar) {
  return from_top_ray(radar.ray_direction(radar.alpha1), radar.start_pos);
}

Vec3 world_to_map(const Vec3& p_world, const MapFrame& frame) {
  return frame.rotation * p_world + frame.translation;
}

RangeBinning assign_range_bins(std::span<const double> ranges, double range_res,
                               double range_origin) {
  if (!(range_res > 0.0)) throw ContractViolation("range resolution must be > 0");
  RangeBinning out;
  out.order.resize(ranges.size());
  std::iota(out.order.begin(), out.order.end(), 0u);
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return ranges[a] > ranges[b]; });
  out.bins.resize(ranges.size());
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const double r = ranges[out.order[i]];
    const double b = std::floor((range_origin - r) / range_res);
    if (!(b >= 0.0)) {
      throw ContractViolation("range " + std::to_string(r) + " lies beyond the range origin " +
                              std::to_string(range_origin));
    }
    out.bins[i] = static_cast<std::int64_t>(b);
  }
  return out;
}

std::vector<double> bin_ranges_fast(std::span<const double> ranges,
                                    std::span<const double> intensities, double range_res,
                                    double range_origin) {
  if (ranges.size() != intensities.size()) {
    throw ContractViolation("range and intensity lists differ in length");
  }
  const RangeBinning binning = assign_range_bins(ranges, range_res, range_origin);
  if (ranges.empty()) return {};
  // Bins are non-decreasing along the sorted order, so each bin is one contiguous segment.
  std::vector<double> profile(static_cast<std::size_t>(binning.bins.back()) + 1, 0.0);
  std::size_t i = 0;
  while (i < binning.bins.size()) {
    const std::int64_t b = binning.bins[i];
    double sum = 0.0;
    for (; i < binning.bins.size() && binning.bins[i] == b; ++i) sum += intensities[binning.order[i]];
    profile[static_cast<std::size_t>(b)] = sum;
  }
  return profile;
}

double SarImage::max_value() const {
  double m = 0.0;
  for (const double v : data) m = std::max(m, v);
  return m;
}

double SarImage::sum() const { return std::accumulate(data.begin(), data.end(), 0.0); }

TraceResult trace_view(const Scene& scene, const RadarConfig& radar, const RenderOptions& options) {
  radar.validate();
  TraceResult out;
  out.radar = radar;
  out.rows = radar.num_azimuth;
  out.frame = MapFrame::for_radar(radar);

  struct RowHits {
    std::vector<TracedHit> hits;
    std::vector<double> ranges;
  };
  std::vector<RowHits> rows(radar.num_azimuth);

  parallel_for(rows.size(), options.threads, [&](std::size_t n) {
    RowHits& row = rows[n];
    for (const SampledRay& s : generate_rays(radar, static_cast<int>(n))) {
      const auto hit = intersect_scene(scene.bvh, scene.mesh, s.ray);
      if (!hit || !(hit->cos_theta > 0.0)) continue;
      row.hits.push_back({*hit, 0, s.weight});
      row.ranges.push_back(world_to_map(hit->point, out.frame).z);
    }
  });

  // Common range window for all rows.
  double max_range = -std::numeric_limits<double>::infinity();
  double min_range = std::numeric_limits<double>::infinity();
  for (const RowHits& row : rows) {
    for (const double r : row.ranges) {
      max_range = std::max(max_range, r);
      min_range = std::min(min_range, r);
    }
  }
  const bool any_hit = std::isfinite(max_range);
  out.range_origin = radar.range_origin.value_or(any_hit ? max_range : 0.0);
  if (radar.num_range_bins) {
    out.cols = *radar.num_range_bins;
  } else if (any_hit) {
    out.cols = static_cast<int>(std::floor((out.range_origin - min_range) / radar.range_res)) + 1;
    out.cols = std::max(out.cols, 1);
  } else {
    out.cols = 1;
  }

  out.row_offsets.assign(1, 0);
  for (RowHits& row : rows) {
    // Hits outside a configured window do not contribute.
    std::vector<double> ranges;
    std::vector<TracedHit> kept;
    for (std::size_t i = 0; i < row.hits.size(); ++i) {
      const double b = std::floor((out.range_origin - row.ranges[i]) / radar.range_res);
      if (b >= 0.0 && b < out.cols) {
        ranges.push_back(row.ranges[i]);
        kept.push_back(row.hits[i]);
      }
    }
    const RangeBinning binning = assign_range_bins(ranges, radar.range_res, out.range_origin);
    for (std::size_t i = 0; i < binning.order.size(); ++i) {
      TracedHit h = kept[binning.order[i]];
      h.range_bin = static_cast<std::int32_t>(binning.bins[i]);
      out.hits.push_back(h);
    }
    out.row_offsets.push_back(out.hits.size());
  }
  return out;
}

RenderResult shade_view(const Scene& scene, const ParamMap& params, const TraceResult& trace,
                        const ScatterModel& model, const RenderOptions& options) {
  if (params.size() != scene.mesh.num_vertices()) {
    throw ContractViolation("parameter map has " + std::to_string(params.size()) +
                            " records for a mesh with " +
                            std::to_string(scene.mesh.num_vertices()) + " vertices");
  }
  RenderResult out;
  out.image = SarImage(trace.rows, trace.cols);
  out.image.azimuth_res = trace.radar.azimuth_res;
  out.image.range_res = trace.radar.range_res;
  out.image.range_origin = trace.range_origin;
  out.image.radar = trace.radar;
  out.ledger.row_offsets = trace.row_offsets;
  out.ledger.entries.resize(trace.hits.size());

  parallel_for(static_cast<std::size_t>(trace.rows), options.threads, [&](std::size_t n) {
    for (std::size_t i = trace.row_offsets[n]; i < trace.row_offsets[n + 1]; ++i) {
      const TracedHit& th = trace.hits[i];
      LedgerEntry& e = out.ledger.entries[i];
      e.hit = th.hit;
      e.range_bin = th.range_bin;
      e.weight = th.weight;
      e.params = interpolate_params(scene.mesh, params, th.hit.facet_id, th.hit.m1, th.hit.m2);
      e.sigma = model.evaluate(th.hit.cos_theta, e.params);
    }
    // Entries are in descending-range order: each bin is a contiguous segment.
    const auto row = out.ledger.row(static_cast<int>(n));
    std::size_t i = 0;
    while (i < row.size()) {
      const std::int32_t b = row[i].range_bin;
      double sum = 0.0;
      for (; i < row.size() && row[i].range_bin == b; ++i) sum += row[i].weight * row[i].sigma.sigma;
      out.image.at(static_cast<int>(n), b) = sum;
    }
  });
  return out;
}

RenderResult render(const Scene& scene, const ParamMap& params, const RadarConfig& radar,
                    const ScatterModel& model, const RenderOptions& options) {
  const TraceResult trace = trace_view(scene, radar, options);
  return shade_view(scene, params, trace, model, options);
}

}  // namespace drtsar
