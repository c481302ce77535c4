#include <doctest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "drtsar/config.hpp"
#include "drtsar/image_io.hpp"

using namespace drtsar;
namespace fs = std::filesystem;

namespace {

const fs::path kScenes = DRTSAR_SCENES;

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr
};

Run run(const std::string& args) {
  const std::string cmd = std::string(DRTSAR_CLI) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  Run r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "drtsar_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

// Copy of a scene config with one substring replaced and the mesh path made absolute.
fs::path edited_config(const fs::path& dir, const std::string& file, const std::string& from,
                       const std::string& to) {
  std::string text = read_text(kScenes / file);
  if (!from.empty()) {
    const auto at = text.find(from);
    REQUIRE(at != std::string::npos);
    text.replace(at, from.size(), to);
  }
  const auto m = text.find("mesh = ");
  text.insert(m + 7, (kScenes / "").string());
  const fs::path out = dir / file;
  write_text(out, text);
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted && c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        row.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = !quoted;
      } else if (c == ',' && !quoted) {
        row.emplace_back();
      } else {
        row.back() += c;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("simulate writes one raster and one PGM per view plus a manifest; reruns hash identically") {
  const fs::path a = scratch("sim_a"), b = scratch("sim_b");
  const std::string cfg = (kScenes / "cube_truth.ini").string();
  const Run ra = run("simulate --config " + cfg + " --out " + a.string() + " --single-thread");
  REQUIRE_MESSAGE(ra.code == 0, ra.output);
  int sarf = 0, pgm = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    sarf += e.path().extension() == ".sarf";
    pgm += e.path().extension() == ".pgm";
  }
  CHECK(sarf == 3);
  CHECK(pgm == 3);
  REQUIRE(fs::exists(a / "manifest.json"));
  REQUIRE(run("simulate --config " + cfg + " --out " + b.string() + " --single-thread").code == 0);
  const auto ma = nlohmann::json::parse(read_text(a / "manifest.json"));
  const auto mb = nlohmann::json::parse(read_text(b / "manifest.json"));
  REQUIRE(ma["views"].size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(ma["views"][i]["raster_sha256"] == mb["views"][i]["raster_sha256"]);
    CHECK(ma["views"][i]["name"] == mb["views"][i]["name"]);
  }
  CHECK(ma["inputs"] == mb["inputs"]);
  CHECK(parse_config(ma["config"].get<std::string>(), kScenes, "manifest", false) == load_config(cfg));

  // A different seed changes the rasters and the recorded config.
  const fs::path c = scratch("sim_c");
  REQUIRE(run("simulate --config " + cfg + " --out " + c.string() + " --single-thread --seed 99").code == 0);
  const auto mc = nlohmann::json::parse(read_text(c / "manifest.json"));
  CHECK(mc["views"][0]["raster_sha256"] != ma["views"][0]["raster_sha256"]);
  CHECK(mc["config"] != ma["config"]);
}

TEST_CASE("alpha0 > alpha1 is a config error naming the field") {
  const fs::path d = scratch("alpha");
  const fs::path cfg = edited_config(d, "two_facet.ini", "alpha0 = 25", "alpha0 = 80");
  const Run r = run("simulate --config " + cfg.string() + " --out " + d.string());
  CHECK(r.code == 2);
  CHECK(r.output.find("view.main.alpha0") != std::string::npos);
}

TEST_CASE("missing config and unknown flags are usage errors") {
  CHECK(run("simulate --config /nonexistent.ini").code == 2);
  CHECK(run("simulate").code == 2);
  CHECK(run("frobnicate").code == 2);
}

TEST_CASE("learn with zero iterations writes the projected initialization") {
  const fs::path d = scratch("learn0");
  const fs::path cfg = edited_config(d, "two_facet.ini", "[loss]", "[optim]\niterations = 0\n\n[loss]");
  REQUIRE(run("simulate --config " + cfg.string() + " --out " + (d / "refs").string()).code == 0);
  const Run r = run("learn --config " + cfg.string() + " --out " + (d / "fit").string() + " --refs " +
                    (d / "refs" / "main.sarf").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const SceneConfig c = load_config(cfg);
  const Mesh mesh = load_mesh(c.resolve(c.mesh_path));
  CHECK(read_param_csv(d / "fit" / "params_final.csv", mesh.num_vertices()) == initial_params(c, mesh));
  const auto hist = read_csv(read_text(d / "fit" / "history.csv"));
  REQUIRE(hist.size() == 2);
  CHECK(hist[0][0] == "iter");
  CHECK(fs::exists(d / "fit" / "final_main.sarf"));
}

TEST_CASE("learn rejects bad reference rasters") {
  const fs::path d = scratch("learn_bad");
  const fs::path cfg = edited_config(d, "two_facet.ini", "", "");
  REQUIRE(run("simulate --config " + cfg.string() + " --out " + (d / "refs").string()).code == 0);
  std::string bytes = read_text(d / "refs" / "main.sarf");
  bytes.replace(0, 5, "BOGUS");
  write_text(d / "bad.sarf", bytes);
  Run r = run("learn --config " + cfg.string() + " --out " + d.string() + " --refs " + (d / "bad.sarf").string());
  CHECK(r.code != 0);
  CHECK(r.output.find("magic") != std::string::npos);

  r = run("learn --config " + cfg.string() + " --out " + d.string() + " --refs " + (d / "refs" / "main.sarf").string() +
          " " + (d / "refs" / "main.sarf").string());
  CHECK(r.code != 0);
  CHECK(r.output.find("reference") != std::string::npos);

  // Right magic, wrong shape: the message names the view.
  write_raster(d / "small.sarf", SarImage(2, 2));
  r = run("learn --config " + cfg.string() + " --out " + d.string() + " --refs " + (d / "small.sarf").string());
  CHECK(r.code != 0);
  CHECK(r.output.find("view main") != std::string::npos);
}

TEST_CASE("cube recovery end to end through the CLI") {
  const fs::path d = scratch("cube");
  const Run sim = run("simulate --config " + (kScenes / "cube_truth.ini").string() + " --out " + (d / "refs").string());
  REQUIRE_MESSAGE(sim.code == 0, sim.output);
  std::string refs;
  for (const char* v : {"az0", "az120", "az240"}) refs += " " + (d / "refs" / (std::string(v) + ".sarf")).string();
  const Run r = run("learn --config " + (kScenes / "cube_learn.ini").string() + " --out " + (d / "fit").string() +
                    " --refs" + refs);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const SceneConfig c = load_config(kScenes / "cube_learn.ini");
  const Mesh mesh = load_mesh(c.resolve(c.mesh_path));
  const ParamMap p = read_param_csv(d / "fit" / "params_final.csv", mesh.num_vertices());
  const int cube = mesh.find_group("cube");
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
    if (mesh.vertex_group[v] != static_cast<std::uint32_t>(cube)) continue;
    CHECK(std::abs(p[v].eps_r / 75.0 - 1) <= 0.03);
    CHECK(std::abs(p[v].h / 0.002 - 1) <= 0.10);
    CHECK(std::abs(p[v].l / 0.001 - 1) <= 0.10);
  }
  const auto hist = read_csv(read_text(d / "fit" / "history.csv"));
  CHECK(hist[0].size() == 7);  // iter, three losses, three view RMSEs
}

TEST_CASE("gradcheck passes, catches a corrupted adjoint, and accepts zero probes") {
  const std::string cfg = (kScenes / "two_facet.ini").string();
  const fs::path d = scratch("gradcheck");
  Run r = run("gradcheck --config " + cfg + " --probes 20 --single-thread --out " + d.string());
  CHECK_MESSAGE(r.code == 0, r.output);
  CHECK(read_csv(read_text(d / "gradcheck.csv")).size() == 21);
  r = run("gradcheck --config " + cfg + " --probes 20 --corrupt-adjoint");
  CHECK(r.code == 1);
  r = run("gradcheck --config " + cfg + " --probes 0");
  CHECK(r.code == 0);
  CHECK(r.output.find("probes: 0") != std::string::npos);
}

TEST_CASE("sweep: matched medium is all zero, tau columns are convex combinations") {
  Run r = run("sweep --eps 1 --steps 30");
  REQUIRE(r.code == 0);
  auto rows = read_csv(r.output);
  REQUIRE(rows.size() == 31);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(std::stod(rows[i][2]) == 0.0);
    CHECK(std::stod(rows[i][3]) == 0.0);
    CHECK(std::stod(rows[i][4]) == 0.0);
  }

  r = run("sweep --height 0.004 --corr-length 0.03 --eps 9 --steps 10 --theta-max 60 --tau 0 0.25 0.5 0.75 1");
  REQUIRE(r.code == 0);
  rows = read_csv(r.output);
  REQUIRE(rows.size() == 51);
  for (int t = 0; t < 5; ++t) {
    for (int i = 0; i < 10; ++i) {
      const auto& row = rows[1 + t * 10 + i];
      const double tau = std::stod(row[1]), spm = std::stod(row[2]), ka = std::stod(row[3]);
      const double blend = std::stod(row[4]);
      CHECK(tau == 0.25 * t);
      CHECK(blend == doctest::Approx((1 - tau) * spm + tau * ka).epsilon(1e-14));
      if (t == 0) CHECK(blend == spm);
      if (t == 4) CHECK(blend == ka);
    }
  }

  r = run("sweep --theta-min 80 --theta-max 100 --steps 3");
  REQUIRE(r.code == 0);
  rows = read_csv(r.output);
  REQUIRE(rows[3].size() == rows[0].size());
  CHECK(rows[3].back().rfind("error:", 0) == 0);
  CHECK(run("sweep --pol HV").code != 0);
}
