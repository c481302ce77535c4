#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "drtsar/learn.hpp"

namespace drtsar {

/// Config error carrying the location (file:line) and the offending field.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& where, const std::string& field, const std::string& message)
      : std::runtime_error(where + ": " + field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ParamOverride {
  std::string group;
  std::optional<double> h, l, eps_r, tau;

  friend bool operator==(const ParamOverride&, const ParamOverride&) = default;
};

/// One observation pass. Angles are kept in degrees, exactly as written.
struct ViewSpec {
  std::string name;
  Vec3 start;
  Vec3 end;
  double alpha0_deg = 0.0;
  double alpha1_deg = 0.0;

  friend bool operator==(const ViewSpec&, const ViewSpec&) = default;
};

struct RadarSettings {
  double frequency = 9.6e9;
  std::string polarization = "HH";
  std::string psd = "gaussian";
  int num_azimuth = 32;
  int angle_bins = 64;
  int spua = 4;
  double range_res = 0.05;
  double azimuth_res = 0.05;
  std::uint64_t seed = 1;
  std::optional<double> range_origin;
  std::optional<int> num_range_bins;

  friend bool operator==(const RadarSettings&, const RadarSettings&) = default;
};

struct OptimSettings {
  AdamConfig adam;
  int iterations = 200;
  std::uint64_t seed = 0;
  std::string validity_box = "none";
  double eps_floor = 1.01;
  std::vector<std::string> train_groups;  // empty: every group
  bool freeze_tau = false;
  bool tie_groups = false;
  double early_stop_tol = 1e-6;
  int early_stop_window = 50;
  std::vector<std::string> held_out;  // view names used for RMSE only

  friend bool operator==(const OptimSettings&, const OptimSettings&) = default;
};

/// Experiment description. Relative paths resolve against `base_dir`
/// (the directory of the config file).
struct SceneConfig {
  std::filesystem::path base_dir;
  std::string mesh_path;
  std::string output_dir = "out";
  BsdfParams param_defaults{0.005, 0.01, 25.0, 0.0};
  std::string param_file;  // optional per-vertex CSV; overrides defaults and groups
  std::vector<ParamOverride> group_params;
  RadarSettings radar;
  std::vector<ViewSpec> views;
  LossConfig loss;
  OptimSettings optim;

  std::filesystem::path resolve(const std::string& p) const;

  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

/// Parses the sectioned key = value format. `check_files` verifies that referenced
/// files exist. Throws ParseError.
SceneConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                         const std::string& source_name = "<config>", bool check_files = true);
SceneConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(serialize_config(c)) == c.
std::string serialize_config(const SceneConfig& config);

/// Radar for one configured view.
RadarConfig make_radar(const SceneConfig& config, const ViewSpec& view);

/// Initial per-vertex parameters (defaults, then group overrides, then the CSV file).
ParamMap initial_params(const SceneConfig& config, const Mesh& mesh);

/// Trainable set and layout implied by the optim section.
TrainSpec make_train_spec(const SceneConfig& config, const Mesh& mesh);

}  // namespace drtsar
