#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "drtsar/imaging.hpp"

namespace drtsar {

struct LossConfig {
  double lambda_sim = 1.0;
  double lambda_mat = 1e-3;
  bool normalize = true;  // divide both images by max(reference) before the MSE

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct ImageLoss {
  double value = 0.0;
  std::vector<double> grad;  // dL/dI per pixel, row-major
};

/// lambda_sim / (U * M * N) * sum (I - I_ref)^2, where U is the number of views
/// sharing the loss.
ImageLoss loss_sim(const SarImage& image, const SarImage& reference, const LossConfig& cfg,
                   int num_views = 1);

/// RMSE between the images after dividing both by max(reference) (raw RMSE when
/// the reference is all zero).
double normalized_rmse(const SarImage& image, const SarImage& reference);

/// Per-vertex gradient of a scalar with respect to (h, l, eps_r, tau).
struct GradBuffer {
  std::vector<BsdfParams> per_vertex;

  GradBuffer() = default;
  explicit GradBuffer(std::size_t n) : per_vertex(n, BsdfParams{0.0, 0.0, 0.0, 0.0}) {}
  std::size_t size() const { return per_vertex.size(); }
  GradBuffer& operator+=(const GradBuffer& o);
  bool all_finite() const;
};

/// Row-major grid view of a per-vertex table: vertices in file order, the last
/// vertex replicated into any padding cells.
struct TvGrid {
  int rows = 0;
  int cols = 0;
  std::size_t num_vertices = 0;

  static TvGrid for_vertices(std::size_t n);
  std::size_t vertex_at(int r, int c) const;
};

struct TvLoss {
  double value = 0.0;
  GradBuffer grad;
};

/// lambda_mat * sum over grid neighbours of |dz| for the h, l and eps_r channels;
/// subgradient uses sign(0) = 0.
TvLoss loss_tv(const ParamMap& params, double lambda_mat);

/// Chains dL/dI through the ledger: pixel gradient x quadrature weight x BSDF
/// partials, scattered to the facet vertices by the interpolation adjoint.
/// Entries are accumulated in ledger order.
GradBuffer backward(const Mesh& mesh, const HitLedger& ledger, std::span<const double> dl_di,
                    int cols);

enum class ChannelSpace { Linear, Log };

enum class ValidityBox { None, Spm, Ka };
ValidityBox parse_validity_box(const std::string& s);
const char* to_string(ValidityBox b);

/// Componentwise box every parameter is projected into after an optimizer step.
struct ParamBounds {
  BsdfParams lo{1e-7, 1e-7, 1.01, 0.0};
  BsdfParams hi{1.0, 10.0, 1000.0, 1.0};

  /// Hard bounds intersected with the box implied by a model's validity conditions
  /// at this wavelength (SPM: kh < 0.3; KA: kl > 6, kh > sqrt(10)/2).
  static ParamBounds make(const WaveConfig& wave, ValidityBox box, double eps_floor = 1.01);

  BsdfParams clamp(const BsdfParams& p) const;
};

/// Which (vertex, channel) values the optimizer owns. With `tie_groups`, all
/// trainable vertices of one mesh group share a single value per channel.
struct TrainSpec {
  std::vector<bool> vertex_trainable;  // empty: all vertices
  std::array<bool, 4> channel_trainable{true, true, true, true};
  bool tie_groups = false;
};

class ParamLayout {
 public:
  struct Slot {
    Channel channel;
    std::vector<std::uint32_t> vertices;
  };

  static ParamLayout build(const Mesh& mesh, const TrainSpec& spec);

  const std::vector<Slot>& slots() const { return slots_; }
  std::size_t size() const { return slots_.size(); }

 private:
  std::vector<Slot> slots_;
};

struct AdamConfig {
  double lr = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr_decay = 1.0;  // lr multiplier applied per step
  std::array<ChannelSpace, 4> space{ChannelSpace::Log, ChannelSpace::Log, ChannelSpace::Log,
                                    ChannelSpace::Linear};
  // Step log-space h/l slot pairs over the same vertices in the rotated coordinates
  // (log h + log l, log l - log h). The KA term only sees the second one, so the
  // first gets its own step size instead of being swamped by the specular fit.
  bool couple_roughness = false;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Adam moments, step counter and the projection box, over the layout's slots.
struct OptimState {
  AdamConfig adam;
  ParamBounds bounds;
  ParamLayout layout;
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  std::vector<std::pair<std::size_t, std::size_t>> roughness_pairs;  // (h slot, l slot)

  OptimState(AdamConfig adam, ParamBounds bounds, ParamLayout layout);
  double current_lr() const;
};

/// Thrown when a step would consume a non-finite gradient; parameters are untouched.
class StepRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Value of a raw parameter in the optimizer's coordinates, and back.
double to_opt_space(double raw, ChannelSpace space);
double from_opt_space(double x, ChannelSpace space);

/// Clamps every trainable slot into the bounds (and equalizes tied vertices).
void project(const OptimState& state, ParamMap& params);

/// Slot gradients in optimizer coordinates.
std::vector<double> slot_gradient(const OptimState& state, const ParamMap& params,
                                  const GradBuffer& grads);

/// One bias-corrected Adam step in optimizer coordinates followed by projection.
void adam_step(OptimState& state, ParamMap& params, const GradBuffer& grads);

struct TrainingView {
  RadarConfig radar;
  SarImage reference;
};

struct LearnOptions {
  int iterations = 100;
  LossConfig loss;
  RenderOptions render;
  // Stop when the best mean training RMSE improves by less than early_stop_tol
  // over early_stop_window iterations; tol <= 0 disables.
  double early_stop_tol = 1e-6;
  int early_stop_window = 50;
  std::vector<TrainingView> held_out;  // RMSE only, never in the gradient
};

struct HistoryRow {
  int iter = 0;
  double total_loss = 0.0;
  double sim_loss = 0.0;
  double tv_loss = 0.0;
  std::vector<double> view_rmse;
  std::vector<double> held_out_rmse;
};

struct LearnResult {
  ParamMap params;
  std::vector<HistoryRow> history;
  std::vector<SarImage> final_images;  // one per training view, at the returned params
  bool aborted = false;
  bool early_stopped = false;
  std::string message;
};

/// Multi-view inverse loop: render, loss, backward, Adam, repeat. History row t
/// holds the losses at the parameters reached after t steps.
LearnResult learn(const Scene& scene, const ParamMap& init, const std::vector<TrainingView>& views,
                  OptimState& opt, const LearnOptions& options,
                  const ScatterModel* model_override = nullptr);

/// `history.csv`: iter,total_loss,sim_loss,tv_loss,view_rmse_0,...[,heldout_rmse_0,...]
std::string history_csv(const std::vector<HistoryRow>& history);

struct GradProbe {
  std::uint32_t vertex = 0;
  Channel channel = Channel::H;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradProbe> probes;
  double max_rel_error = 0.0;
  double median_rel_error = 0.0;
};

struct GradCheckOptions {
  int num_probes = 20;
  std::uint64_t seed = 0;
  double step = 1e-5;  // central-difference step in optimizer coordinates
  LossConfig loss;
  std::array<ChannelSpace, 4> space = AdamConfig{}.space;
  RenderOptions render;
  std::vector<std::uint32_t> candidate_vertices;  // empty: all vertices
  std::array<bool, 4> channels{true, true, true, true};
};

/// Compares the backward-assembled gradient with central finite differences of
/// render + loss at random (vertex, channel) probes. Relative errors use
/// max(|analytic|, |numeric|) as the denominator; both zero counts as exact.
GradCheckReport grad_check(const Scene& scene, const ParamMap& params,
                           const std::vector<TrainingView>& views, const GradCheckOptions& options,
                           const ScatterModel* model_override = nullptr);

}  // namespace drtsar
