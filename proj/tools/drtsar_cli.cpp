// drtsar: simulate SAR images of a mesh scene, learn scattering parameters from
// reference images, check gradients, and sweep the BSDF over incidence angle.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "drtsar/config.hpp"
#include "drtsar/error.hpp"
#include "drtsar/image_io.hpp"
#include "drtsar/learn.hpp"

namespace fs = std::filesystem;
using namespace drtsar;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitError = 3;

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << text;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool single_thread = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Scene/experiment config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "Output directory (default: [scene] output, relative to the config)");
  cmd->add_option("--seed", f.seed, "Override the ray-sampling seed");
  cmd->add_flag("--single-thread", f.single_thread, "Strict single-worker mode (bitwise reproducible)");
}

struct Loaded {
  SceneConfig config;
  std::unique_ptr<Scene> scene;
  fs::path out_dir;
  RenderOptions render;
};

Loaded load(const CommonFlags& f) {
  Loaded l;
  l.config = load_config(f.config);
  if (f.seed) l.config.radar.seed = *f.seed;
  l.scene = std::make_unique<Scene>(load_mesh(l.config.resolve(l.config.mesh_path)));
  l.out_dir = f.out.empty() ? l.config.resolve(l.config.output_dir) : fs::path(f.out);
  l.render.threads = f.single_thread ? 1 : 0;
  return l;
}

std::vector<RadarConfig> view_radars(const SceneConfig& config) {
  std::vector<RadarConfig> radars;
  for (const auto& v : config.views) radars.push_back(make_radar(config, v));
  return radars;
}

// Clamp the initial parameters the way the optimizer will, and say so.
ParamMap projected_init(const OptimState& opt, const ParamMap& init) {
  ParamMap p = init;
  project(opt, p);
  std::size_t changed = 0;
  for (std::size_t v = 0; v < p.size(); ++v) changed += p[v] == init[v] ? 0 : 1;
  if (changed) {
    std::cerr << "warning: " << changed << " vertex record(s) clamped into the optimizer bounds\n";
  }
  return p;
}

OptimState make_optimizer(const SceneConfig& config, const Mesh& mesh) {
  const auto wave = make_radar(config, config.views.front()).wave;
  const auto box = parse_validity_box(config.optim.validity_box);
  return OptimState(config.optim.adam, ParamBounds::make(wave, box, config.optim.eps_floor),
                    ParamLayout::build(mesh, make_train_spec(config, mesh)));
}

int cmd_simulate(const CommonFlags& f) {
  auto l = load(f);
  const ParamMap params = initial_params(l.config, l.scene->mesh);
  fs::create_directories(l.out_dir);

  nlohmann::json manifest;
  manifest["command"] = "simulate";
  manifest["config"] = serialize_config(l.config);
  manifest["inputs"]["config"] = sha256_hex(read_bytes(f.config));
  manifest["inputs"]["mesh"] = sha256_hex(read_bytes(l.config.resolve(l.config.mesh_path)));
  manifest["inputs"]["params"] = sha256_hex(param_csv_string(params));
  manifest["single_thread"] = f.single_thread;

  const auto radars = view_radars(l.config);
  for (std::size_t i = 0; i < radars.size(); ++i) {
    const auto& name = l.config.views[i].name;
    RenderResult r;
    try {
      r = render(*l.scene, params, radars[i], l.render);
    } catch (const std::exception& e) {
      throw std::runtime_error("view " + std::to_string(i) + " (" + name + "): " + e.what());
    }
    const fs::path raster = l.out_dir / (name + ".sarf");
    const fs::path pgm = l.out_dir / (name + ".pgm");
    write_raster(raster, r.image);
    write_pgm(pgm, r.image);
    nlohmann::json entry;
    entry["name"] = name;
    entry["rows"] = r.image.rows;
    entry["cols"] = r.image.cols;
    entry["hits"] = r.ledger.entries.size();
    entry["raster"] = raster.filename().string();
    entry["raster_sha256"] = sha256_hex(read_bytes(raster));
    entry["pgm"] = pgm.filename().string();
    entry["pgm_sha256"] = sha256_hex(read_bytes(pgm));
    manifest["views"].push_back(entry);
    std::cout << name << ": " << r.image.rows << "x" << r.image.cols << ", " << r.ledger.entries.size()
              << " hits -> " << raster.string() << "\n";
  }
  write_text(l.out_dir / "manifest.json", manifest.dump(2) + "\n");
  return kExitOk;
}

int cmd_learn(const CommonFlags& f, const std::vector<std::string>& refs) {
  auto l = load(f);
  const auto& cfg = l.config;
  if (refs.size() != cfg.views.size()) {
    throw ContractViolation("expected " + std::to_string(cfg.views.size()) + " reference rasters (one per view), got " +
                            std::to_string(refs.size()));
  }
  const auto radars = view_radars(cfg);
  LearnOptions opts;
  opts.iterations = cfg.optim.iterations;
  opts.loss = cfg.loss;
  opts.render = l.render;
  opts.early_stop_tol = cfg.optim.early_stop_tol;
  opts.early_stop_window = cfg.optim.early_stop_window;
  std::vector<TrainingView> train;
  std::vector<std::string> train_names;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    SarImage ref;
    try {
      ref = read_raster(refs[i]);
    } catch (const FormatError& e) {
      throw FormatError("view " + cfg.views[i].name + ": " + e.what());
    }
    const auto& name = cfg.views[i].name;
    const bool held = std::find(cfg.optim.held_out.begin(), cfg.optim.held_out.end(), name) !=
                      cfg.optim.held_out.end();
    (held ? opts.held_out : train).push_back({radars[i], std::move(ref)});
    if (!held) train_names.push_back(name);
  }

  OptimState opt = make_optimizer(cfg, l.scene->mesh);
  const ParamMap init = projected_init(opt, initial_params(cfg, l.scene->mesh));
  fs::create_directories(l.out_dir);

  const auto t0 = std::chrono::steady_clock::now();
  LearnResult result;
  try {
    result = learn(*l.scene, init, train, opt, opts);
  } catch (const ContractViolation& e) {
    // Shape errors come back as "view <i>: ..."; name the view instead.
    std::string msg = e.what();
    for (std::size_t i = 0; i < train_names.size(); ++i) {
      const std::string tag = "view " + std::to_string(i) + ":";
      if (msg.rfind(tag, 0) == 0) msg = "view " + train_names[i] + ":" + msg.substr(tag.size());
    }
    throw ContractViolation(msg);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_param_csv(l.out_dir / "params_final.csv", result.params);
  write_text(l.out_dir / "history.csv", history_csv(result.history));
  for (std::size_t i = 0; i < result.final_images.size(); ++i) {
    write_raster(l.out_dir / ("final_" + train_names[i] + ".sarf"), result.final_images[i]);
    write_pgm(l.out_dir / ("final_" + train_names[i] + ".pgm"), result.final_images[i]);
  }

  const auto& last = result.history.back();
  std::printf("iterations: %d  loss: %.6e -> %.6e  (%.1f s)\n", last.iter,
              result.history.front().total_loss, last.total_loss, secs);
  for (std::uint32_t g = 0; g < l.scene->mesh.group_names.size(); ++g) {
    for (std::size_t v = 0; v < result.params.size(); ++v) {
      if (l.scene->mesh.vertex_group[v] != g) continue;
      const auto& p = result.params[v];
      std::printf("  %-12s h=%.6g l=%.6g eps_r=%.6g tau=%.6g (vertex %zu)\n",
                  l.scene->mesh.group_names[g].c_str(), p.h, p.l, p.eps_r, p.tau, v);
      break;
    }
  }
  if (!result.message.empty()) std::cerr << result.message << "\n";
  std::cout << "wrote " << (l.out_dir / "params_final.csv").string() << "\n";
  return result.aborted ? kExitError : kExitOk;
}

// Deliberately wrong permittivity partial; lets tests confirm gradcheck fails loudly.
class CorruptedAdjoint final : public ScatterModel {
 public:
  explicit CorruptedAdjoint(WaveConfig wave) : inner_(wave) {}
  SigmaGrad evaluate(double cos_theta, const BsdfParams& params) const override {
    SigmaGrad g = inner_.evaluate(cos_theta, params);
    g.d_eps *= 1.5;
    g.d_h = -g.d_h;
    return g;
  }

 private:
  DoubleScaleBsdf inner_;
};

int cmd_gradcheck(const CommonFlags& f, int probes, bool corrupt) {
  auto l = load(f);
  const auto& cfg = l.config;
  const ParamMap truth = initial_params(cfg, l.scene->mesh);

  // References at the configured parameters, probes at a seeded perturbation of
  // them so the loss has a nonzero gradient.
  std::vector<TrainingView> views;
  for (const auto& radar : view_radars(cfg)) views.push_back({radar, render(*l.scene, truth, radar, l.render).image});
  ParamMap probe_at = truth;
  std::mt19937_64 gen(cfg.optim.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  for (std::size_t v = 0; v < probe_at.size(); ++v) {
    auto& p = probe_at[v];
    p.h *= std::exp(jitter(gen));
    p.l *= std::exp(jitter(gen));
    p.eps_r = 1.0 + (p.eps_r - 1.0) * std::exp(jitter(gen));
    p.tau = std::clamp(p.tau + 0.5 * jitter(gen), 0.0, 1.0);
  }

  GradCheckOptions opts;
  opts.num_probes = probes;
  opts.seed = cfg.optim.seed;
  opts.loss = cfg.loss;
  opts.space = cfg.optim.adam.space;
  opts.render = l.render;
  std::unique_ptr<ScatterModel> model;
  if (corrupt) model = std::make_unique<CorruptedAdjoint>(views.front().radar.wave);
  const auto report = grad_check(*l.scene, probe_at, views, opts, model.get());

  std::ostringstream csv;
  csv << "vertex,channel,analytic,numeric,rel_error\n";
  char buf[160];
  for (const auto& p : report.probes) {
    std::snprintf(buf, sizeof buf, "%u,%s,%.17g,%.17g,%.6e\n", p.vertex, channel_name(p.channel), p.analytic,
                  p.numeric, p.rel_error);
    csv << buf;
  }
  std::cout << csv.str();
  std::printf("probes: %zu  max_rel_error: %.3e  median_rel_error: %.3e\n", report.probes.size(),
              report.max_rel_error, report.median_rel_error);
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    write_text(fs::path(f.out) / "gradcheck.csv", csv.str());
  }
  return report.max_rel_error > 1e-3 ? kExitCheckFailed : kExitOk;
}

struct SweepFlags {
  double h = 0.005;
  double l = 0.01;
  double eps_r = 25.0;
  std::vector<double> tau{0.5};
  double theta_min = 0.0;
  double theta_max = 85.0;
  int steps = 86;
  double frequency = 9.6e9;
  std::string pol = "HH";
  std::string psd = "gaussian";
  std::string out;
};

// Quotes a CSV cell when it contains a separator, quote or newline.
std::string csv_cell(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (const char c : text) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

int cmd_sweep(const SweepFlags& s) {
  const WaveConfig wave = WaveConfig::make(s.frequency, parse_polarization(s.pol), parse_psd_kind(s.psd));
  std::ostringstream csv;
  csv << "theta_deg,tau,sigma_spm,sigma_ka,sigma,spm_ok,ka_ok,violated\n";
  char buf[256];
  for (const double tau : s.tau) {
    for (int i = 0; i < s.steps; ++i) {
      const double deg =
          s.steps == 1 ? s.theta_min : s.theta_min + (s.theta_max - s.theta_min) * i / (s.steps - 1);
      const double theta = deg * kPi / 180.0;
      const BsdfParams p{s.h, s.l, s.eps_r, tau};
      try {
        const double spm = sigma_spm(theta, p, wave);
        const double ka = sigma_ka(theta, p);
        const double sigma = bsdf_eval(theta, p, wave).sigma;
        const auto report = check_validity(p, theta, wave);
        std::string violated;
        for (const auto& c : report.violated) violated += (violated.empty() ? "" : ";") + c.name;
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.17g,%.17g,%.17g,%d,%d,", deg, tau, spm, ka, sigma,
                      report.spm_ok ? 1 : 0, report.ka_ok ? 1 : 0);
        csv << buf << violated << "\n";
      } catch (const DomainError& e) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,,,,,,", deg, tau);
        csv << buf << csv_cell(std::string("error: ") + e.what()) << "\n";
      }
    }
  }
  if (s.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(s.out, csv.str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable ray-traced SAR simulator"};
  app.require_subcommand(1);

  CommonFlags sim_flags;
  auto* sim = app.add_subcommand("simulate", "Render one SAR image per configured view");
  add_common(sim, sim_flags);

  CommonFlags learn_flags;
  std::vector<std::string> refs;
  auto* lrn = app.add_subcommand("learn", "Recover scattering parameters from reference rasters");
  add_common(lrn, learn_flags);
  lrn->add_option("--refs", refs, "Reference rasters, one per view in config order")->required();

  CommonFlags gc_flags;
  int probes = 20;
  bool corrupt = false;
  auto* gc = app.add_subcommand("gradcheck", "Compare backward gradients with finite differences");
  add_common(gc, gc_flags);
  gc->add_option("--probes", probes, "Number of random (vertex, channel) probes")->check(CLI::NonNegativeNumber);
  gc->add_flag("--corrupt-adjoint", corrupt)->group("");  // test hook

  SweepFlags sw_flags;
  auto* sw = app.add_subcommand("sweep", "Tabulate sigma_SPM, sigma_KA and the blend versus incidence");
  sw->add_option("--height", sw_flags.h, "RMS height h, m");
  sw->add_option("--corr-length", sw_flags.l, "Correlation length l, m");
  sw->add_option("--eps", sw_flags.eps_r, "Relative permittivity");
  sw->add_option("--tau", sw_flags.tau, "One or more blend values")->expected(1, -1);
  sw->add_option("--theta-min", sw_flags.theta_min, "First incidence angle, deg");
  sw->add_option("--theta-max", sw_flags.theta_max, "Last incidence angle, deg");
  sw->add_option("--steps", sw_flags.steps, "Number of angles")->check(CLI::PositiveNumber);
  sw->add_option("--frequency", sw_flags.frequency, "Hz");
  sw->add_option("--pol", sw_flags.pol, "HH or VV");
  sw->add_option("--psd", sw_flags.psd, "gaussian or exponential");
  sw->add_option("--out", sw_flags.out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(sim_flags);
    if (*lrn) return cmd_learn(learn_flags, refs);
    if (*gc) return cmd_gradcheck(gc_flags, probes, corrupt);
    if (*sw) return cmd_sweep(sw_flags);
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitUsage;
}
