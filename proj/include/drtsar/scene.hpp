#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "drtsar/vec.hpp"

namespace drtsar {

using Facet = std::array<std::uint32_t, 3>;

/// Indexed triangle mesh. Vertex order follows the source file.
///
/// Every vertex also carries the index of the OBJ group (`o`/`g` record)
/// that was active when it was declared; group 0 is the implicit default
/// group. Groups let callers address "the cube" or "the ground" when
/// initializing or freezing parameters.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Facet> facets;
  std::vector<Vec3> facet_normals;  // unit, along (p2-p1)x(p3-p1)
  std::vector<std::uint32_t> vertex_group;
  std::vector<std::string> group_names{"default"};

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_facets() const { return facets.size(); }

  /// Index of the named group, or -1.
  int find_group(const std::string& name) const;

  /// Builds a mesh from raw arrays; validates indices and areas, computes normals.
  static Mesh from_arrays(std::vector<Vec3> vertices, std::vector<Facet> facets);
};

/// Loads the `v`/`f`/`o`/`g` subset of Wavefront OBJ. Polygons are fan-triangulated.
Mesh load_mesh(const std::filesystem::path& path);
Mesh parse_obj(const std::string& text, const std::string& source_name = "<memory>");

/// Scattering parameters at one point. Also used for per-vertex records.
struct BsdfParams {
  double h = 0.0;      // RMS height, m
  double l = 0.0;      // correlation length, m
  double eps_r = 1.0;  // relative permittivity
  double tau = 0.0;    // specular (KA) fraction

  friend bool operator==(const BsdfParams&, const BsdfParams&) = default;
};

enum class Channel : int { H = 0, L = 1, EpsR = 2, Tau = 3 };
inline constexpr int kNumChannels = 4;
inline constexpr std::array<Channel, 4> kAllChannels{Channel::H, Channel::L, Channel::EpsR,
                                                     Channel::Tau};

double get(const BsdfParams& p, Channel c);
double& get(BsdfParams& p, Channel c);
const char* channel_name(Channel c);

/// True when h > 0, l > 0, eps_r >= 1 and 0 <= tau <= 1.
bool in_bounds(const BsdfParams& p);

/// Per-vertex parameter table, one record per mesh vertex.
class ParamMap {
 public:
  ParamMap() = default;
  ParamMap(std::size_t num_vertices, const BsdfParams& init);

  std::size_t size() const { return records_.size(); }
  const BsdfParams& operator[](std::size_t v) const { return records_[v]; }
  BsdfParams& operator[](std::size_t v) { return records_[v]; }
  std::span<const BsdfParams> records() const { return records_; }

  /// Assigns `value` to every vertex of mesh group `group`.
  void assign_group(const Mesh& mesh, std::uint32_t group, const BsdfParams& value);

  /// Throws ContractViolation naming the first vertex outside the bounds box.
  void validate() const;

  friend bool operator==(const ParamMap&, const ParamMap&) = default;

 private:
  std::vector<BsdfParams> records_;
};

/// CSV with header `vertex_id,h,l,eps_r,tau`, values printed round-trip exact.
void write_param_csv(const std::filesystem::path& path, const ParamMap& params);
std::string param_csv_string(const ParamMap& params);
ParamMap read_param_csv(const std::filesystem::path& path, std::size_t expected_vertices);

/// Convex combination m1*z(p1) + m2*z(p2) + (1-m1-m2)*z(p3), per channel.
BsdfParams interpolate_params(const Mesh& mesh, const ParamMap& params, std::size_t facet_id,
                              double m1, double m2);

struct VertexContribution {
  std::uint32_t vertex = 0;
  BsdfParams grad;  // gradient with respect to that vertex's record
};

/// Transpose of interpolate_params: distributes a gradient on the interpolated
/// value over the facet's three vertices.
std::array<VertexContribution, 3> interpolation_adjoint(const Mesh& mesh, std::size_t facet_id,
                                                        double m1, double m2,
                                                        const BsdfParams& d_params);

/// Throws ContractViolation unless m1, m2 >= 0 and m1 + m2 <= 1 (1e-12 slack).
void check_simplex(double m1, double m2);

}  // namespace drtsar
