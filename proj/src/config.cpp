#include "drtsar/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "drtsar/error.hpp"
#include "text_util.hpp"

namespace drtsar {

namespace {

constexpr double kDegToRad = kPi / 180.0;

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

struct Section {
  std::string name;
  int line = 0;
  std::map<std::string, Entry> entries;
};

class Reader {
 public:
  Reader(const std::string& source, Section& section) : source_(source), section_(section) {}

  std::string where(int line) const { return source_ + ":" + std::to_string(line); }
  std::string field(const std::string& key) const { return section_.name + "." + key; }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const auto it = section_.entries.find(key);
    const int line = it == section_.entries.end() ? section_.line : it->second.line;
    throw ParseError(where(line), field(key), msg);
  }

  const Entry* find(const std::string& key) {
    auto it = section_.entries.find(key);
    if (it == section_.entries.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  std::optional<std::string> str(const std::string& key) {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    return e->value;
  }

  std::optional<double> num(const std::string& key) {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    const auto v = detail::parse_double(e->value);
    if (!v || !std::isfinite(*v)) fail(key, "expected a finite number, got '" + e->value + "'");
    return v;
  }

  std::optional<long long> integer(const std::string& key) {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    long long v = 0;
    const std::string t = detail::trim(e->value);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) {
      fail(key, "expected an integer, got '" + e->value + "'");
    }
    return v;
  }

  std::optional<std::uint64_t> unsigned_int(const std::string& key) {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    std::uint64_t v = 0;
    const std::string t = detail::trim(e->value);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) {
      fail(key, "expected a non-negative integer, got '" + e->value + "'");
    }
    return v;
  }

  std::optional<bool> boolean(const std::string& key) {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    const std::string t = detail::trim(e->value);
    if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
    if (t == "false" || t == "no" || t == "0" || t == "off") return false;
    fail(key, "expected true/false, got '" + e->value + "'");
  }

  std::optional<Vec3> vec3(const std::string& key) {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    const auto parts = detail::split_ws(e->value);
    if (parts.size() != 3) fail(key, "expected three numbers");
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
      const auto x = detail::parse_double(parts[i]);
      if (!x || !std::isfinite(*x)) fail(key, "bad number '" + parts[i] + "'");
      v[i] = *x;
    }
    return v;
  }

  std::vector<std::string> list(const std::string& key) {
    const Entry* e = find(key);
    if (!e) return {};
    std::string v = e->value;
    for (char& c : v) {
      if (c == ',') c = ' ';
    }
    return detail::split_ws(v);
  }

  void reject_unused() const {
    for (const auto& [key, entry] : section_.entries) {
      if (!entry.used) throw ParseError(where(entry.line), field(key), "unknown key");
    }
  }

 private:
  std::string source_;
  Section& section_;
};

std::vector<Section> tokenize(const std::string& text, const std::string& source) {
  std::vector<Section> sections;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(where, line, "unterminated section header");
      Section s;
      s.name = detail::trim(line.substr(1, line.size() - 2));
      s.line = line_no;
      for (const auto& prev : sections) {
        if (prev.name == s.name) throw ParseError(where, s.name, "duplicate section");
      }
      sections.push_back(std::move(s));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where, line, "expected key = value");
    if (sections.empty()) throw ParseError(where, line, "key outside of any section");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    auto& entries = sections.back().entries;
    if (entries.count(key)) throw ParseError(where, sections.back().name + "." + key, "duplicate key");
    entries[key] = {value, line_no, false};
  }
  return sections;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const Vec3& v) { return fmt(v.x) + " " + fmt(v.y) + " " + fmt(v.z); }

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : " ") + s;
  return out;
}

std::string space_name(ChannelSpace s) { return s == ChannelSpace::Log ? "log" : "linear"; }

void read_params(Reader& r, BsdfParams& p) {
  if (auto v = r.num("h")) p.h = *v;
  if (auto v = r.num("l")) p.l = *v;
  if (auto v = r.num("eps_r")) p.eps_r = *v;
  if (auto v = r.num("tau")) p.tau = *v;
  if (!in_bounds(p)) r.fail("h", "parameters must satisfy h > 0, l > 0, eps_r >= 1, 0 <= tau <= 1");
}

// Expands an [orbit] section into one straight pass per azimuth angle. Each pass
// looks back at `center` from `azimuth` degrees (counter-clockwise from +x).
void expand_orbit(Reader& r, std::vector<ViewSpec>& views) {
  const Vec3 center = r.vec3("center").value_or(Vec3{});
  const double incidence = r.num("incidence").value_or(45.0);
  const double fan_width = r.num("fan_width").value_or(4.0);
  const double standoff = r.num("standoff").value_or(100.0);
  const double aperture = r.num("aperture").value_or(4.0);
  const std::string prefix = r.str("prefix").value_or("az");
  const auto azimuths = r.list("azimuths");
  if (azimuths.empty()) r.fail("azimuths", "at least one azimuth is required");
  if (!(standoff > 0.0)) r.fail("standoff", "must be > 0");
  if (!(aperture > 0.0)) r.fail("aperture", "must be > 0");
  if (!(fan_width > 0.0)) r.fail("fan_width", "must be > 0");

  for (const auto& a : azimuths) {
    const auto az = detail::parse_double(a);
    if (!az) r.fail("azimuths", "bad angle '" + a + "'");
    const double phi = *az * kDegToRad;
    const double inc = incidence * kDegToRad;
    const Vec3 look{-std::cos(phi), -std::sin(phi), 0.0};
    const Vec3 track = cross(Vec3{0.0, 0.0, 1.0}, look);
    const Vec3 beam = std::cos(inc) * Vec3{0.0, 0.0, -1.0} + std::sin(inc) * look;
    const Vec3 mid = center - beam * standoff;
    ViewSpec v;
    v.name = prefix + a;
    v.start = mid - track * (aperture / 2);
    v.end = mid + track * (aperture / 2);
    v.alpha0_deg = incidence - fan_width / 2;
    v.alpha1_deg = incidence + fan_width / 2;
    views.push_back(v);
  }
}

}  // namespace

std::filesystem::path SceneConfig::resolve(const std::string& p) const {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

SceneConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                         const std::string& source, bool check_files) {
  SceneConfig cfg;
  cfg.base_dir = base_dir;
  auto sections = tokenize(text, source);

  bool have_scene = false;
  for (auto& section : sections) {
    Reader r(source, section);
    const std::string& name = section.name;
    if (name == "scene") {
      have_scene = true;
      cfg.mesh_path = r.str("mesh").value_or("");
      if (cfg.mesh_path.empty()) r.fail("mesh", "mesh path is required");
      if (auto v = r.str("output")) cfg.output_dir = *v;
    } else if (name == "params") {
      read_params(r, cfg.param_defaults);
      if (auto v = r.str("file")) cfg.param_file = *v;
    } else if (name.starts_with("params.")) {
      ParamOverride o;
      o.group = name.substr(7);
      o.h = r.num("h");
      o.l = r.num("l");
      o.eps_r = r.num("eps_r");
      o.tau = r.num("tau");
      cfg.group_params.push_back(o);
    } else if (name == "radar") {
      auto& rs = cfg.radar;
      if (auto v = r.num("frequency")) rs.frequency = *v;
      if (auto v = r.str("polarization")) rs.polarization = *v;
      if (auto v = r.str("psd")) rs.psd = *v;
      if (auto v = r.integer("num_azimuth")) rs.num_azimuth = static_cast<int>(*v);
      if (auto v = r.integer("angle_bins")) rs.angle_bins = static_cast<int>(*v);
      if (auto v = r.integer("spua")) rs.spua = static_cast<int>(*v);
      if (auto v = r.num("range_res")) rs.range_res = *v;
      if (auto v = r.num("azimuth_res")) rs.azimuth_res = *v;
      if (auto v = r.unsigned_int("seed")) rs.seed = *v;
      rs.range_origin = r.num("range_origin");
      if (auto v = r.integer("num_range_bins")) rs.num_range_bins = static_cast<int>(*v);
      try {
        parse_polarization(rs.polarization);
      } catch (const DomainError& e) {
        r.fail("polarization", e.what());
      }
      try {
        parse_psd_kind(rs.psd);
      } catch (const DomainError& e) {
        r.fail("psd", e.what());
      }
      if (!(rs.frequency > 0.0)) r.fail("frequency", "must be > 0");
      if (rs.num_azimuth < 1) r.fail("num_azimuth", "must be >= 1");
      if (rs.angle_bins < 1) r.fail("angle_bins", "must be >= 1");
      if (rs.spua < 1) r.fail("spua", "must be >= 1");
      if (!(rs.range_res > 0.0)) r.fail("range_res", "must be > 0");
      if (!(rs.azimuth_res > 0.0)) r.fail("azimuth_res", "must be > 0");
      if (rs.num_range_bins && *rs.num_range_bins < 1) r.fail("num_range_bins", "must be >= 1");
    } else if (name.starts_with("view.")) {
      ViewSpec v;
      v.name = name.substr(5);
      const auto start = r.vec3("start");
      const auto end = r.vec3("end");
      const auto a0 = r.num("alpha0");
      const auto a1 = r.num("alpha1");
      if (!start) r.fail("start", "required");
      if (!end) r.fail("end", "required");
      if (!a0) r.fail("alpha0", "required");
      if (!a1) r.fail("alpha1", "required");
      v.start = *start;
      v.end = *end;
      v.alpha0_deg = *a0;
      v.alpha1_deg = *a1;
      if (!(v.alpha0_deg < v.alpha1_deg)) r.fail("alpha0", "must be less than alpha1");
      if (v.alpha0_deg < 0.0) r.fail("alpha0", "must be >= 0 degrees");
      if (!(v.alpha1_deg < 90.0)) r.fail("alpha1", "must be < 90 degrees");
      cfg.views.push_back(v);
    } else if (name == "orbit") {
      expand_orbit(r, cfg.views);
    } else if (name == "loss") {
      if (auto v = r.num("lambda_sim")) cfg.loss.lambda_sim = *v;
      if (auto v = r.num("lambda_mat")) cfg.loss.lambda_mat = *v;
      if (auto v = r.boolean("normalize")) cfg.loss.normalize = *v;
      if (cfg.loss.lambda_sim < 0.0) r.fail("lambda_sim", "must be >= 0");
      if (cfg.loss.lambda_mat < 0.0) r.fail("lambda_mat", "must be >= 0");
    } else if (name == "optim") {
      auto& o = cfg.optim;
      if (auto v = r.num("lr")) o.adam.lr = *v;
      if (auto v = r.num("beta1")) o.adam.beta1 = *v;
      if (auto v = r.num("beta2")) o.adam.beta2 = *v;
      if (auto v = r.num("eps_adam")) o.adam.eps = *v;
      if (auto v = r.num("lr_decay")) o.adam.lr_decay = *v;
      if (auto v = r.boolean("couple_roughness")) o.adam.couple_roughness = *v;
      for (const Channel c : kAllChannels) {
        const std::string key = std::string("space_") + channel_name(c);
        if (auto v = r.str(key)) {
          if (*v == "log") {
            o.adam.space[static_cast<int>(c)] = ChannelSpace::Log;
          } else if (*v == "linear") {
            o.adam.space[static_cast<int>(c)] = ChannelSpace::Linear;
          } else {
            r.fail(key, "expected log or linear");
          }
        }
      }
      if (o.adam.space[static_cast<int>(Channel::Tau)] == ChannelSpace::Log) {
        r.fail("space_tau", "tau may reach 0 and must stay linear");
      }
      if (auto v = r.integer("iterations")) o.iterations = static_cast<int>(*v);
      if (auto v = r.unsigned_int("seed")) o.seed = *v;
      if (auto v = r.str("validity_box")) o.validity_box = *v;
      if (auto v = r.num("eps_floor")) o.eps_floor = *v;
      o.train_groups = r.list("train_groups");
      if (auto v = r.boolean("freeze_tau")) o.freeze_tau = *v;
      if (auto v = r.boolean("tie_groups")) o.tie_groups = *v;
      if (auto v = r.num("early_stop_tol")) o.early_stop_tol = *v;
      if (auto v = r.integer("early_stop_window")) o.early_stop_window = static_cast<int>(*v);
      o.held_out = r.list("held_out");
      if (!(o.adam.lr > 0.0)) r.fail("lr", "must be > 0");
      if (!(o.adam.lr_decay > 0.0 && o.adam.lr_decay <= 1.0)) r.fail("lr_decay", "must be in (0, 1]");
      if (!(o.adam.beta1 >= 0.0 && o.adam.beta1 < 1.0)) r.fail("beta1", "must be in [0, 1)");
      if (!(o.adam.beta2 >= 0.0 && o.adam.beta2 < 1.0)) r.fail("beta2", "must be in [0, 1)");
      if (!(o.adam.eps > 0.0)) r.fail("eps_adam", "must be > 0");
      if (o.iterations < 0) r.fail("iterations", "must be >= 0");
      if (o.early_stop_window < 1) r.fail("early_stop_window", "must be >= 1");
      if (o.eps_floor < 1.0) r.fail("eps_floor", "must be >= 1");
      try {
        parse_validity_box(o.validity_box);
      } catch (const DomainError& e) {
        r.fail("validity_box", e.what());
      }
    } else {
      throw ParseError(source + ":" + std::to_string(section.line), name, "unknown section");
    }
    r.reject_unused();
  }

  const std::string where0 = source + ":1";
  if (!have_scene) throw ParseError(where0, "scene.mesh", "missing [scene] section");
  if (cfg.views.empty()) throw ParseError(where0, "view", "no views configured ([view.NAME] or [orbit])");
  for (std::size_t i = 0; i < cfg.views.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (cfg.views[i].name == cfg.views[j].name) {
        throw ParseError(where0, "view." + cfg.views[i].name, "duplicate view name");
      }
    }
    try {
      make_radar(cfg, cfg.views[i]).validate();
    } catch (const ContractViolation& e) {
      throw ParseError(where0, "view." + cfg.views[i].name, e.what());
    }
  }
  for (const auto& h : cfg.optim.held_out) {
    bool found = false;
    for (const auto& v : cfg.views) found = found || v.name == h;
    if (!found) throw ParseError(where0, "optim.held_out", "unknown view '" + h + "'");
  }
  if (cfg.optim.held_out.size() >= cfg.views.size()) {
    throw ParseError(where0, "optim.held_out", "at least one view must remain for training");
  }
  if (check_files) {
    if (!std::filesystem::exists(cfg.resolve(cfg.mesh_path))) {
      throw ParseError(where0, "scene.mesh", "file not found: " + cfg.resolve(cfg.mesh_path).string());
    }
    if (!cfg.param_file.empty() && !std::filesystem::exists(cfg.resolve(cfg.param_file))) {
      throw ParseError(where0, "params.file", "file not found: " + cfg.resolve(cfg.param_file).string());
    }
  }
  return cfg;
}

SceneConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), "config", "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return parse_config(buf.str(), base, path.string());
}

std::string serialize_config(const SceneConfig& c) {
  std::ostringstream out;
  out << "[scene]\nmesh = " << c.mesh_path << "\noutput = " << c.output_dir << "\n\n";

  out << "[params]\nh = " << fmt(c.param_defaults.h) << "\nl = " << fmt(c.param_defaults.l)
      << "\neps_r = " << fmt(c.param_defaults.eps_r) << "\ntau = " << fmt(c.param_defaults.tau) << "\n";
  if (!c.param_file.empty()) out << "file = " << c.param_file << "\n";
  out << "\n";
  for (const auto& o : c.group_params) {
    out << "[params." << o.group << "]\n";
    if (o.h) out << "h = " << fmt(*o.h) << "\n";
    if (o.l) out << "l = " << fmt(*o.l) << "\n";
    if (o.eps_r) out << "eps_r = " << fmt(*o.eps_r) << "\n";
    if (o.tau) out << "tau = " << fmt(*o.tau) << "\n";
    out << "\n";
  }

  const auto& r = c.radar;
  out << "[radar]\nfrequency = " << fmt(r.frequency) << "\npolarization = " << r.polarization
      << "\npsd = " << r.psd << "\nnum_azimuth = " << r.num_azimuth << "\nangle_bins = " << r.angle_bins
      << "\nspua = " << r.spua << "\nrange_res = " << fmt(r.range_res)
      << "\nazimuth_res = " << fmt(r.azimuth_res) << "\nseed = " << r.seed << "\n";
  if (r.range_origin) out << "range_origin = " << fmt(*r.range_origin) << "\n";
  if (r.num_range_bins) out << "num_range_bins = " << *r.num_range_bins << "\n";
  out << "\n";

  for (const auto& v : c.views) {
    out << "[view." << v.name << "]\nstart = " << fmt(v.start) << "\nend = " << fmt(v.end)
        << "\nalpha0 = " << fmt(v.alpha0_deg) << "\nalpha1 = " << fmt(v.alpha1_deg) << "\n\n";
  }

  out << "[loss]\nlambda_sim = " << fmt(c.loss.lambda_sim) << "\nlambda_mat = " << fmt(c.loss.lambda_mat)
      << "\nnormalize = " << (c.loss.normalize ? "true" : "false") << "\n\n";

  const auto& o = c.optim;
  out << "[optim]\nlr = " << fmt(o.adam.lr) << "\nbeta1 = " << fmt(o.adam.beta1)
      << "\nbeta2 = " << fmt(o.adam.beta2) << "\neps_adam = " << fmt(o.adam.eps)
      << "\nlr_decay = " << fmt(o.adam.lr_decay)
      << "\ncouple_roughness = " << (o.adam.couple_roughness ? "true" : "false");
  for (const Channel ch : kAllChannels) {
    out << "\nspace_" << channel_name(ch) << " = " << space_name(o.adam.space[static_cast<int>(ch)]);
  }
  out << "\niterations = " << o.iterations << "\nseed = " << o.seed
      << "\nvalidity_box = " << o.validity_box << "\neps_floor = " << fmt(o.eps_floor)
      << "\nfreeze_tau = " << (o.freeze_tau ? "true" : "false")
      << "\ntie_groups = " << (o.tie_groups ? "true" : "false")
      << "\nearly_stop_tol = " << fmt(o.early_stop_tol)
      << "\nearly_stop_window = " << o.early_stop_window << "\n";
  if (!o.train_groups.empty()) out << "train_groups = " << join(o.train_groups) << "\n";
  if (!o.held_out.empty()) out << "held_out = " << join(o.held_out) << "\n";
  return out.str();
}

RadarConfig make_radar(const SceneConfig& config, const ViewSpec& view) {
  const auto& rs = config.radar;
  RadarConfig radar;
  radar.wave = WaveConfig::make(rs.frequency, parse_polarization(rs.polarization), parse_psd_kind(rs.psd));
  radar.start_pos = view.start;
  radar.end_pos = view.end;
  radar.num_azimuth = rs.num_azimuth;
  radar.alpha0 = view.alpha0_deg * kDegToRad;
  radar.alpha1 = view.alpha1_deg * kDegToRad;
  radar.angle_bins = rs.angle_bins;
  radar.range_res = rs.range_res;
  radar.azimuth_res = rs.azimuth_res;
  radar.spua = rs.spua;
  radar.seed = rs.seed;
  radar.range_origin = rs.range_origin;
  radar.num_range_bins = rs.num_range_bins;
  return radar;
}

ParamMap initial_params(const SceneConfig& config, const Mesh& mesh) {
  if (!config.param_file.empty()) {
    ParamMap p = read_param_csv(config.resolve(config.param_file), mesh.num_vertices());
    p.validate();
    return p;
  }
  ParamMap params(mesh.num_vertices(), config.param_defaults);
  for (const auto& o : config.group_params) {
    const int g = mesh.find_group(o.group);
    if (g < 0) throw FormatError("[params." + o.group + "]: mesh has no group named '" + o.group + "'");
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
      if (mesh.vertex_group[v] != static_cast<std::uint32_t>(g)) continue;
      if (o.h) params[v].h = *o.h;
      if (o.l) params[v].l = *o.l;
      if (o.eps_r) params[v].eps_r = *o.eps_r;
      if (o.tau) params[v].tau = *o.tau;
    }
  }
  params.validate();
  return params;
}

TrainSpec make_train_spec(const SceneConfig& config, const Mesh& mesh) {
  TrainSpec spec;
  spec.tie_groups = config.optim.tie_groups;
  spec.channel_trainable[static_cast<int>(Channel::Tau)] = !config.optim.freeze_tau;
  if (!config.optim.train_groups.empty()) {
    spec.vertex_trainable.assign(mesh.num_vertices(), false);
    for (const auto& name : config.optim.train_groups) {
      const int g = mesh.find_group(name);
      if (g < 0) throw FormatError("optim.train_groups: mesh has no group named '" + name + "'");
      for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        if (mesh.vertex_group[v] == static_cast<std::uint32_t>(g)) spec.vertex_trainable[v] = true;
      }
    }
  }
  return spec;
}

}  // namespace drtsar
