#include "drtsar/scene.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "drtsar/error.hpp"
#include "text_util.hpp"

namespace drtsar {

namespace {

constexpr double kSimplexSlack = 1e-12;

// Resolves an OBJ vertex reference ("7", "7/2", "7//3", "-1") to a 0-based index.
long resolve_index(std::string_view token, std::size_t num_vertices, const std::string& where) {
  const auto slash = token.find('/');
  const std::string_view head = token.substr(0, slash);
  long idx = 0;
  const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), idx);
  if (ec != std::errc{} || ptr != head.data() + head.size() || idx == 0) {
    throw FormatError(where + ": bad vertex reference '" + std::string(token) + "'");
  }
  return idx > 0 ? idx - 1 : static_cast<long>(num_vertices) + idx;
}

}  // namespace

int Mesh::find_group(const std::string& name) const {
  for (std::size_t g = 0; g < group_names.size(); ++g) {
    if (group_names[g] == name) return static_cast<int>(g);
  }
  return -1;
}

Mesh Mesh::from_arrays(std::vector<Vec3> vertices, std::vector<Facet> facets) {
  Mesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.facets = std::move(facets);
  mesh.vertex_group.assign(mesh.vertices.size(), 0);
  mesh.facet_normals.reserve(mesh.facets.size());

  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (!is_finite(mesh.vertices[v])) {
      throw FormatError("vertex " + std::to_string(v) + " has non-finite coordinates");
    }
  }
  for (std::size_t f = 0; f < mesh.facets.size(); ++f) {
    for (const auto idx : mesh.facets[f]) {
      if (idx >= mesh.vertices.size()) {
        throw FormatError("facet " + std::to_string(f) + " references vertex " +
                          std::to_string(idx + 1) + " but only " +
                          std::to_string(mesh.vertices.size()) + " vertices exist");
      }
    }
    const Vec3& p1 = mesh.vertices[mesh.facets[f][0]];
    const Vec3& p2 = mesh.vertices[mesh.facets[f][1]];
    const Vec3& p3 = mesh.vertices[mesh.facets[f][2]];
    const Vec3 e1 = p2 - p1;
    const Vec3 e2 = p3 - p1;
    const Vec3 n = cross(e1, e2);
    const double len = norm(n);
    const double scale = std::max(dot(e1, e1), dot(e2, e2));
    if (!(len > 1e-12 * scale) || scale == 0.0) {
      throw FormatError("facet " + std::to_string(f) + " has zero area");
    }
    mesh.facet_normals.push_back(n * (1.0 / len));
  }
  return mesh;
}

Mesh parse_obj(const std::string& text, const std::string& source_name) {
  std::vector<Vec3> vertices;
  std::vector<Facet> facets;
  std::vector<std::uint32_t> groups;
  std::vector<std::string> group_names{"default"};
  std::uint32_t current_group = 0;

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = detail::split_ws(line);
    if (tokens.empty() || tokens[0].starts_with('#')) continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    const auto& kind = tokens[0];

    if (kind == "v") {
      if (tokens.size() < 4) throw FormatError(where + ": vertex needs three coordinates");
      Vec3 p;
      for (int i = 0; i < 3; ++i) {
        const auto value = detail::parse_double(tokens[i + 1]);
        if (!value) throw FormatError(where + ": bad coordinate '" + tokens[i + 1] + "'");
        p[i] = *value;
      }
      if (!is_finite(p)) throw FormatError(where + ": non-finite vertex coordinate");
      vertices.push_back(p);
      groups.push_back(current_group);
    } else if (kind == "f") {
      if (tokens.size() < 4) throw FormatError(where + ": facet needs at least three vertices");
      std::vector<long> idx;
      for (std::size_t i = 1; i < tokens.size(); ++i) {
        const long k = resolve_index(tokens[i], vertices.size(), where);
        if (k < 0) {
          throw FormatError(where + ": facet " + std::to_string(facets.size()) +
                            " references vertex before the start of the file");
        }
        idx.push_back(k);
      }
      for (std::size_t i = 1; i + 1 < idx.size(); ++i) {
        facets.push_back({static_cast<std::uint32_t>(idx[0]), static_cast<std::uint32_t>(idx[i]),
                          static_cast<std::uint32_t>(idx[i + 1])});
      }
    } else if (kind == "o" || kind == "g") {
      const std::string name = tokens.size() > 1 ? tokens[1] : "default";
      auto it = std::find(group_names.begin(), group_names.end(), name);
      if (it == group_names.end()) {
        group_names.push_back(name);
        current_group = static_cast<std::uint32_t>(group_names.size() - 1);
      } else {
        current_group = static_cast<std::uint32_t>(it - group_names.begin());
      }
    }
    // vn, vt, usemtl, mtllib, s, l and anything else: ignored
  }

  try {
    Mesh mesh = Mesh::from_arrays(std::move(vertices), std::move(facets));
    mesh.vertex_group = std::move(groups);
    mesh.group_names = std::move(group_names);
    return mesh;
  } catch (const FormatError& e) {
    throw FormatError(source_name + ": " + e.what());
  }
}

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw FormatError("cannot open mesh file '" + path.string() + "'");
  std::ostringstream buf;
  buf << file.rdbuf();
  return parse_obj(buf.str(), path.string());
}

double get(const BsdfParams& p, Channel c) {
  switch (c) {
    case Channel::H: return p.h;
    case Channel::L: return p.l;
    case Channel::EpsR: return p.eps_r;
    case Channel::Tau: return p.tau;
  }
  return 0.0;
}

double& get(BsdfParams& p, Channel c) {
  switch (c) {
    case Channel::H: return p.h;
    case Channel::L: return p.l;
    case Channel::EpsR: return p.eps_r;
    case Channel::Tau: break;
  }
  return p.tau;
}

const char* channel_name(Channel c) {
  switch (c) {
    case Channel::H: return "h";
    case Channel::L: return "l";
    case Channel::EpsR: return "eps_r";
    case Channel::Tau: return "tau";
  }
  return "?";
}

bool in_bounds(const BsdfParams& p) {
  return p.h > 0.0 && p.l > 0.0 && p.eps_r >= 1.0 && p.tau >= 0.0 && p.tau <= 1.0 &&
         std::isfinite(p.h) && std::isfinite(p.l) && std::isfinite(p.eps_r);
}

ParamMap::ParamMap(std::size_t num_vertices, const BsdfParams& init)
    : records_(num_vertices, init) {}

void ParamMap::assign_group(const Mesh& mesh, std::uint32_t group, const BsdfParams& value) {
  if (mesh.num_vertices() != records_.size()) {
    throw ContractViolation("parameter map size does not match mesh vertex count");
  }
  for (std::size_t v = 0; v < records_.size(); ++v) {
    if (mesh.vertex_group[v] == group) records_[v] = value;
  }
}

void ParamMap::validate() const {
  for (std::size_t v = 0; v < records_.size(); ++v) {
    if (!in_bounds(records_[v])) {
      throw ContractViolation("vertex " + std::to_string(v) +
                              " parameters outside bounds (h>0, l>0, eps_r>=1, 0<=tau<=1)");
    }
  }
}

std::string param_csv_string(const ParamMap& params) {
  std::string out = "vertex_id,h,l,eps_r,tau\n";
  char buf[160];
  for (std::size_t v = 0; v < params.size(); ++v) {
    const auto& p = params[v];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", v, p.h, p.l, p.eps_r, p.tau);
    out += buf;
  }
  return out;
}

void write_param_csv(const std::filesystem::path& path, const ParamMap& params) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << param_csv_string(params);
}

ParamMap read_param_csv(const std::filesystem::path& path, std::size_t expected_vertices) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open parameter file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "vertex_id,h,l,eps_r,tau") {
    throw FormatError(path.string() + ": expected header 'vertex_id,h,l,eps_r,tau'");
  }
  ParamMap params(expected_vertices, BsdfParams{});
  std::vector<bool> seen(expected_vertices, false);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, ',');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 5) throw FormatError(where + ": expected 5 fields");
    const auto id = detail::parse_double(fields[0]);
    if (!id || *id < 0 || *id != std::floor(*id) || *id >= static_cast<double>(expected_vertices)) {
      throw FormatError(where + ": vertex_id out of range");
    }
    const auto v = static_cast<std::size_t>(*id);
    BsdfParams p;
    for (int c = 0; c < kNumChannels; ++c) {
      const auto value = detail::parse_double(fields[c + 1]);
      if (!value) throw FormatError(where + ": bad number '" + fields[c + 1] + "'");
      get(p, static_cast<Channel>(c)) = *value;
    }
    params[v] = p;
    seen[v] = true;
  }
  for (std::size_t v = 0; v < expected_vertices; ++v) {
    if (!seen[v]) throw FormatError(path.string() + ": missing row for vertex " + std::to_string(v));
  }
  return params;
}

void check_simplex(double m1, double m2) {
  if (!(m1 >= -kSimplexSlack && m2 >= -kSimplexSlack && m1 + m2 <= 1.0 + kSimplexSlack)) {
    throw ContractViolation("barycentric weights (" + std::to_string(m1) + ", " +
                            std::to_string(m2) + ") outside the simplex");
  }
}

BsdfParams interpolate_params(const Mesh& mesh, const ParamMap& params, std::size_t facet_id,
                              double m1, double m2) {
  check_simplex(m1, m2);
  const Facet& f = mesh.facets.at(facet_id);
  const double m3 = 1.0 - m1 - m2;
  const BsdfParams& a = params[f[0]];
  const BsdfParams& b = params[f[1]];
  const BsdfParams& c = params[f[2]];
  return {m1 * a.h + m2 * b.h + m3 * c.h, m1 * a.l + m2 * b.l + m3 * c.l,
          m1 * a.eps_r + m2 * b.eps_r + m3 * c.eps_r, m1 * a.tau + m2 * b.tau + m3 * c.tau};
}

std::array<VertexContribution, 3> interpolation_adjoint(const Mesh& mesh, std::size_t facet_id,
                                                        double m1, double m2,
                                                        const BsdfParams& d) {
  check_simplex(m1, m2);
  const Facet& f = mesh.facets.at(facet_id);
  const double w[3] = {m1, m2, 1.0 - m1 - m2};
  std::array<VertexContribution, 3> out;
  for (int i = 0; i < 3; ++i) {
    out[i].vertex = f[i];
    out[i].grad = {w[i] * d.h, w[i] * d.l, w[i] * d.eps_r, w[i] * d.tau};
  }
  return out;
}

}  // namespace drtsar
