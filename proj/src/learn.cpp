#include "drtsar/learn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <random>

#include "drtsar/error.hpp"

namespace drtsar {

ImageLoss loss_sim(const SarImage& image, const SarImage& reference, const LossConfig& cfg,
                   int num_views) {
  if (!image.same_shape(reference)) {
    throw ContractViolation("image shape " + std::to_string(image.rows) + "x" +
                            std::to_string(image.cols) + " does not match reference " +
                            std::to_string(reference.rows) + "x" + std::to_string(reference.cols));
  }
  if (num_views < 1) throw ContractViolation("num_views must be >= 1");
  double scale = 1.0;
  if (cfg.normalize) {
    const double peak = reference.max_value();
    if (peak > 0.0) scale = 1.0 / peak;
  }
  const std::size_t n = image.data.size();
  ImageLoss out;
  out.grad.resize(n);
  if (n == 0) return out;
  const double norm = cfg.lambda_sim / (static_cast<double>(num_views) * static_cast<double>(n));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = (image.data[i] - reference.data[i]) * scale;
    sum += diff * diff;
    out.grad[i] = 2.0 * norm * diff * scale;
  }
  out.value = norm * sum;
  return out;
}

double normalized_rmse(const SarImage& image, const SarImage& reference) {
  if (!image.same_shape(reference)) throw ContractViolation("RMSE of images with different shapes");
  if (image.data.empty()) return 0.0;
  const double peak = reference.max_value();
  const double scale = peak > 0.0 ? 1.0 / peak : 1.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    const double d = (image.data[i] - reference.data[i]) * scale;
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(image.data.size()));
}

GradBuffer& GradBuffer::operator+=(const GradBuffer& o) {
  if (o.size() != size()) throw ContractViolation("gradient buffers differ in size");
  for (std::size_t v = 0; v < size(); ++v) {
    auto& a = per_vertex[v];
    const auto& b = o.per_vertex[v];
    a.h += b.h;
    a.l += b.l;
    a.eps_r += b.eps_r;
    a.tau += b.tau;
  }
  return *this;
}

bool GradBuffer::all_finite() const {
  return std::all_of(per_vertex.begin(), per_vertex.end(), [](const BsdfParams& g) {
    return std::isfinite(g.h) && std::isfinite(g.l) && std::isfinite(g.eps_r) &&
           std::isfinite(g.tau);
  });
}

TvGrid TvGrid::for_vertices(std::size_t n) {
  TvGrid g;
  g.num_vertices = n;
  if (n == 0) return g;
  g.cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  g.rows = static_cast<int>((n + g.cols - 1) / g.cols);
  return g;
}

std::size_t TvGrid::vertex_at(int r, int c) const {
  const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
  return std::min(idx, num_vertices - 1);
}

TvLoss loss_tv(const ParamMap& params, double lambda_mat) {
  TvLoss out;
  out.grad = GradBuffer(params.size());
  if (params.size() == 0 || lambda_mat == 0.0) return out;
  const TvGrid grid = TvGrid::for_vertices(params.size());
  constexpr std::array<Channel, 3> channels{Channel::H, Channel::L, Channel::EpsR};

  auto pair = [&](std::size_t a, std::size_t b) {
    // |z[b] - z[a]|
    for (const Channel c : channels) {
      const double d = get(params[b], c) - get(params[a], c);
      out.value += std::abs(d);
      const double s = (d > 0.0) - (d < 0.0);
      get(out.grad.per_vertex[b], c) += lambda_mat * s;
      get(out.grad.per_vertex[a], c) -= lambda_mat * s;
    }
  };
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const std::size_t here = grid.vertex_at(r, c);
      if (r + 1 < grid.rows) pair(here, grid.vertex_at(r + 1, c));
      if (c + 1 < grid.cols) pair(here, grid.vertex_at(r, c + 1));
    }
  }
  out.value *= lambda_mat;
  return out;
}

GradBuffer backward(const Mesh& mesh, const HitLedger& ledger, std::span<const double> dl_di,
                    int cols) {
  GradBuffer out(mesh.num_vertices());
  for (int r = 0; r < ledger.rows(); ++r) {
    for (const LedgerEntry& e : ledger.row(r)) {
      if (e.range_bin < 0 || e.range_bin >= cols) {
        throw ContractViolation("ledger entry range bin " + std::to_string(e.range_bin) +
                                " outside image with " + std::to_string(cols) + " columns");
      }
      const std::size_t pixel = static_cast<std::size_t>(r) * cols + e.range_bin;
      if (pixel >= dl_di.size()) throw ContractViolation("ledger pixel outside gradient image");
      const double g = dl_di[pixel] * e.weight;
      if (g == 0.0) continue;
      const BsdfParams d{g * e.sigma.d_h, g * e.sigma.d_l, g * e.sigma.d_eps, g * e.sigma.d_tau};
      for (const auto& vc : interpolation_adjoint(mesh, e.hit.facet_id, e.hit.m1, e.hit.m2, d)) {
        auto& acc = out.per_vertex[vc.vertex];
        acc.h += vc.grad.h;
        acc.l += vc.grad.l;
        acc.eps_r += vc.grad.eps_r;
        acc.tau += vc.grad.tau;
      }
    }
  }
  return out;
}

ValidityBox parse_validity_box(const std::string& s) {
  if (s == "none") return ValidityBox::None;
  if (s == "spm") return ValidityBox::Spm;
  if (s == "ka") return ValidityBox::Ka;
  throw DomainError("unknown validity box '" + s + "' (expected none, spm or ka)");
}

const char* to_string(ValidityBox b) {
  switch (b) {
    case ValidityBox::None: return "none";
    case ValidityBox::Spm: return "spm";
    case ValidityBox::Ka: return "ka";
  }
  return "none";
}

ParamBounds ParamBounds::make(const WaveConfig& wave, ValidityBox box, double eps_floor) {
  ParamBounds b;
  b.lo.eps_r = std::max(1.0, eps_floor);
  const double k = wave.wavenumber;
  if (box == ValidityBox::Spm) {
    b.hi.h = std::min(b.hi.h, 0.3 / k);
  } else if (box == ValidityBox::Ka) {
    b.lo.l = std::max(b.lo.l, 6.0 / k);
    b.lo.h = std::max(b.lo.h, std::sqrt(10.0) / (2.0 * k));
  }
  return b;
}

BsdfParams ParamBounds::clamp(const BsdfParams& p) const {
  return {std::clamp(p.h, lo.h, hi.h), std::clamp(p.l, lo.l, hi.l),
          std::clamp(p.eps_r, lo.eps_r, hi.eps_r), std::clamp(p.tau, lo.tau, hi.tau)};
}

ParamLayout ParamLayout::build(const Mesh& mesh, const TrainSpec& spec) {
  const std::size_t n = mesh.num_vertices();
  if (!spec.vertex_trainable.empty() && spec.vertex_trainable.size() != n) {
    throw ContractViolation("trainable mask size does not match vertex count");
  }
  auto trainable = [&](std::size_t v) {
    return spec.vertex_trainable.empty() || spec.vertex_trainable[v];
  };

  ParamLayout layout;
  for (const Channel c : kAllChannels) {
    if (!spec.channel_trainable[static_cast<int>(c)]) continue;
    if (spec.tie_groups) {
      for (std::uint32_t g = 0; g < mesh.group_names.size(); ++g) {
        Slot slot{c, {}};
        for (std::uint32_t v = 0; v < n; ++v) {
          if (trainable(v) && mesh.vertex_group[v] == g) slot.vertices.push_back(v);
        }
        if (!slot.vertices.empty()) layout.slots_.push_back(std::move(slot));
      }
    } else {
      for (std::uint32_t v = 0; v < n; ++v) {
        if (trainable(v)) layout.slots_.push_back({c, {v}});
      }
    }
  }
  return layout;
}

OptimState::OptimState(AdamConfig adam_cfg, ParamBounds b, ParamLayout l)
    : adam(adam_cfg), bounds(b), layout(std::move(l)), m(layout.size(), 0.0), v(layout.size(), 0.0) {
  const bool log_hl = adam.space[static_cast<int>(Channel::H)] == ChannelSpace::Log &&
                      adam.space[static_cast<int>(Channel::L)] == ChannelSpace::Log;
  if (!adam.couple_roughness || !log_hl) return;
  const auto& slots = layout.slots();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].channel != Channel::H) continue;
    for (std::size_t j = 0; j < slots.size(); ++j) {
      if (slots[j].channel == Channel::L && slots[j].vertices == slots[i].vertices) {
        roughness_pairs.emplace_back(i, j);
        break;
      }
    }
  }
}

double OptimState::current_lr() const {
  return adam.lr * std::pow(adam.lr_decay, static_cast<double>(std::max(0L, step - 1)));
}

double to_opt_space(double raw, ChannelSpace space) {
  return space == ChannelSpace::Log ? std::log(raw) : raw;
}

double from_opt_space(double x, ChannelSpace space) {
  return space == ChannelSpace::Log ? std::exp(x) : x;
}

namespace {

ChannelSpace space_of(const OptimState& s, Channel c) { return s.adam.space[static_cast<int>(c)]; }

double slot_value(const OptimState& s, const ParamLayout::Slot& slot, const ParamMap& params) {
  double sum = 0.0;
  for (const auto v : slot.vertices) sum += to_opt_space(get(params[v], slot.channel), space_of(s, slot.channel));
  return sum / static_cast<double>(slot.vertices.size());
}

void write_slot(const OptimState& s, const ParamLayout::Slot& slot, double x, ParamMap& params) {
  const double lo = get(s.bounds.lo, slot.channel);
  const double hi = get(s.bounds.hi, slot.channel);
  const double raw = std::clamp(from_opt_space(x, space_of(s, slot.channel)), lo, hi);
  for (const auto v : slot.vertices) get(params[v], slot.channel) = raw;
}

}  // namespace

void project(const OptimState& state, ParamMap& params) {
  for (const auto& slot : state.layout.slots()) {
    const double first = get(params[slot.vertices.front()], slot.channel);
    const bool uniform = std::all_of(slot.vertices.begin(), slot.vertices.end(), [&](std::uint32_t v) {
      return get(params[v], slot.channel) == first;
    });
    if (uniform) {
      // Skip the round trip through optimizer coordinates so in-bounds values stay bit-exact.
      const double raw = std::clamp(first, get(state.bounds.lo, slot.channel), get(state.bounds.hi, slot.channel));
      for (const auto v : slot.vertices) get(params[v], slot.channel) = raw;
    } else {
      write_slot(state, slot, slot_value(state, slot, params), params);
    }
  }
}

std::vector<double> slot_gradient(const OptimState& state, const ParamMap& params,
                                  const GradBuffer& grads) {
  if (grads.size() != params.size()) throw ContractViolation("gradient/parameter size mismatch");
  std::vector<double> g(state.layout.size(), 0.0);
  for (std::size_t i = 0; i < state.layout.size(); ++i) {
    const auto& slot = state.layout.slots()[i];
    const bool log_space = space_of(state, slot.channel) == ChannelSpace::Log;
    for (const auto v : slot.vertices) {
      const double raw_grad = get(grads.per_vertex[v], slot.channel);
      g[i] += log_space ? raw_grad * get(params[v], slot.channel) : raw_grad;
    }
  }
  return g;
}

void adam_step(OptimState& state, ParamMap& params, const GradBuffer& grads) {
  if (state.m.size() != state.layout.size()) throw ContractViolation("optimizer state size mismatch");
  const std::vector<double> g = slot_gradient(state, params, grads);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      const auto& slot = state.layout.slots()[i];
      throw StepRejected("non-finite gradient for channel " + std::string(channel_name(slot.channel)) +
                         " of vertex " + std::to_string(slot.vertices.front()) + "; step rejected");
    }
  }

  ++state.step;
  const auto& a = state.adam;
  const double lr = state.current_lr();
  const double bc1 = 1.0 - std::pow(a.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(a.beta2, static_cast<double>(state.step));
  const auto& slots = state.layout.slots();
  // (a, b) = (log h, log l)  ->  (u, w) = (a + b, b - a)
  std::vector<double> gx = g;
  for (const auto& [ih, il] : state.roughness_pairs) {
    gx[ih] = 0.5 * (g[ih] + g[il]);
    gx[il] = 0.5 * (g[il] - g[ih]);
  }
  std::vector<double> dx(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    state.m[i] = a.beta1 * state.m[i] + (1.0 - a.beta1) * gx[i];
    state.v[i] = a.beta2 * state.v[i] + (1.0 - a.beta2) * gx[i] * gx[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    dx[i] = -lr * m_hat / (std::sqrt(v_hat) + a.eps);
  }
  for (const auto& [ih, il] : state.roughness_pairs) {
    const double du = dx[ih], dw = dx[il];
    dx[ih] = 0.5 * (du - dw);
    dx[il] = 0.5 * (du + dw);
  }
  // A zero step leaves the slot untouched rather than round-tripping it through log/exp.
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (dx[i] != 0.0) write_slot(state, slots[i], slot_value(state, slots[i], params) + dx[i], params);
  }
}

namespace {

struct ViewEval {
  double sim_loss = 0.0;
  double rmse = 0.0;
  RenderResult render;
  ImageLoss loss;
};

class ViewModels {
 public:
  ViewModels(const std::vector<TrainingView>& views, const ScatterModel* override_model) {
    for (const auto& v : views) {
      if (override_model) {
        ptrs_.push_back(override_model);
      } else {
        owned_.push_back(std::make_unique<DoubleScaleBsdf>(v.radar.wave));
        ptrs_.push_back(owned_.back().get());
      }
    }
  }
  const ScatterModel& operator[](std::size_t i) const { return *ptrs_[i]; }

 private:
  std::vector<std::unique_ptr<ScatterModel>> owned_;
  std::vector<const ScatterModel*> ptrs_;
};

std::vector<TraceResult> trace_views(const Scene& scene, const std::vector<TrainingView>& views,
                                     const RenderOptions& render) {
  std::vector<TraceResult> traces;
  for (std::size_t i = 0; i < views.size(); ++i) {
    RadarConfig radar = views[i].radar;
    // Render on the reference's range window so pixels line up.
    if (!radar.range_origin && views[i].reference.cols > 0) {
      radar.range_origin = views[i].reference.range_origin;
      radar.num_range_bins = views[i].reference.cols;
    }
    traces.push_back(trace_view(scene, radar, render));
    if (traces.back().rows != views[i].reference.rows || traces.back().cols != views[i].reference.cols) {
      throw ContractViolation("view " + std::to_string(i) + ": reference image is " +
                              std::to_string(views[i].reference.rows) + "x" +
                              std::to_string(views[i].reference.cols) + " but the view renders " +
                              std::to_string(traces.back().rows) + "x" +
                              std::to_string(traces.back().cols));
    }
  }
  return traces;
}

ViewEval evaluate_view(const Scene& scene, const ParamMap& params, const TraceResult& trace,
                       const TrainingView& view, const ScatterModel& model, const LossConfig& loss,
                       int num_views, const RenderOptions& render) {
  ViewEval e;
  e.render = shade_view(scene, params, trace, model, render);
  e.loss = loss_sim(e.render.image, view.reference, loss, num_views);
  e.sim_loss = e.loss.value;
  e.rmse = normalized_rmse(e.render.image, view.reference);
  return e;
}

}  // namespace

LearnResult learn(const Scene& scene, const ParamMap& init, const std::vector<TrainingView>& views,
                  OptimState& opt, const LearnOptions& options, const ScatterModel* model_override) {
  if (views.empty()) throw ContractViolation("learning needs at least one reference view");
  if (init.size() != scene.mesh.num_vertices()) {
    throw ContractViolation("initial parameter map does not match the mesh");
  }

  const auto traces = trace_views(scene, views, options.render);
  const auto held_traces = trace_views(scene, options.held_out, options.render);
  const ViewModels models(views, model_override);
  const ViewModels held_models(options.held_out, model_override);
  const int num_views = static_cast<int>(views.size());

  LearnResult result;
  ParamMap params = init;
  project(opt, params);
  ParamMap last_good = params;
  std::vector<double> best_rmse_history;
  double best_rmse = std::numeric_limits<double>::infinity();

  for (int iter = 0;; ++iter) {
    HistoryRow row;
    row.iter = iter;
    std::vector<ViewEval> evals;
    for (std::size_t v = 0; v < views.size(); ++v) {
      evals.push_back(evaluate_view(scene, params, traces[v], views[v], models[v], options.loss,
                                    num_views, options.render));
      row.sim_loss += evals.back().sim_loss;
      row.view_rmse.push_back(evals.back().rmse);
    }
    for (std::size_t v = 0; v < options.held_out.size(); ++v) {
      const auto e = evaluate_view(scene, params, held_traces[v], options.held_out[v], held_models[v],
                                   options.loss, 1, options.render);
      row.held_out_rmse.push_back(e.rmse);
    }
    TvLoss tv = loss_tv(params, options.loss.lambda_mat);
    row.tv_loss = tv.value;
    row.total_loss = row.sim_loss + row.tv_loss;

    if (!std::isfinite(row.total_loss)) {
      result.aborted = true;
      result.message = "non-finite loss at iteration " + std::to_string(iter) +
                       "; returning last finite parameters";
      params = last_good;
      break;
    }
    last_good = params;
    result.history.push_back(row);
    result.final_images.clear();
    for (auto& e : evals) result.final_images.push_back(std::move(e.render.image));

    double mean_rmse = 0.0;
    for (const double r : row.view_rmse) mean_rmse += r;
    mean_rmse /= static_cast<double>(row.view_rmse.size());
    best_rmse = std::min(best_rmse, mean_rmse);
    best_rmse_history.push_back(best_rmse);

    if (iter >= options.iterations) break;
    if (options.early_stop_tol > 0.0 && iter >= options.early_stop_window) {
      const double before = best_rmse_history[iter - options.early_stop_window];
      if (before - best_rmse < options.early_stop_tol) {
        result.early_stopped = true;
        result.message = "early stop at iteration " + std::to_string(iter);
        break;
      }
    }

    GradBuffer grad = std::move(tv.grad);
    for (std::size_t v = 0; v < views.size(); ++v) {
      grad += backward(scene.mesh, evals[v].render.ledger, evals[v].loss.grad, traces[v].cols);
    }
    try {
      adam_step(opt, params, grad);
    } catch (const StepRejected& e) {
      result.aborted = true;
      result.message = e.what();
      break;
    }
  }
  result.params = params;
  return result;
}

std::string history_csv(const std::vector<HistoryRow>& history) {
  std::string out = "iter,total_loss,sim_loss,tv_loss";
  if (!history.empty()) {
    for (std::size_t v = 0; v < history.front().view_rmse.size(); ++v) {
      out += ",view_rmse_" + std::to_string(v);
    }
    for (std::size_t v = 0; v < history.front().held_out_rmse.size(); ++v) {
      out += ",heldout_rmse_" + std::to_string(v);
    }
  }
  out += '\n';
  char buf[64];
  for (const auto& row : history) {
    out += std::to_string(row.iter);
    for (const double x : {row.total_loss, row.sim_loss, row.tv_loss}) {
      std::snprintf(buf, sizeof buf, ",%.17g", x);
      out += buf;
    }
    for (const double x : row.view_rmse) {
      std::snprintf(buf, sizeof buf, ",%.17g", x);
      out += buf;
    }
    for (const double x : row.held_out_rmse) {
      std::snprintf(buf, sizeof buf, ",%.17g", x);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

GradCheckReport grad_check(const Scene& scene, const ParamMap& params,
                           const std::vector<TrainingView>& views, const GradCheckOptions& options,
                           const ScatterModel* model_override) {
  GradCheckReport report;
  if (options.num_probes <= 0) return report;
  if (views.empty()) throw ContractViolation("gradient check needs at least one view");

  const auto traces = trace_views(scene, views, options.render);
  const ViewModels models(views, model_override);
  const int num_views = static_cast<int>(views.size());

  auto total_loss = [&](const ParamMap& p, GradBuffer* grad) {
    TvLoss tv = loss_tv(p, options.loss.lambda_mat);
    double total = tv.value;
    if (grad) *grad = std::move(tv.grad);
    for (std::size_t v = 0; v < views.size(); ++v) {
      const auto e = evaluate_view(scene, p, traces[v], views[v], models[v], options.loss, num_views,
                                   options.render);
      total += e.sim_loss;
      if (grad) *grad += backward(scene.mesh, e.render.ledger, e.loss.grad, traces[v].cols);
    }
    return total;
  };

  GradBuffer analytic_raw;
  total_loss(params, &analytic_raw);

  std::vector<std::uint32_t> candidates = options.candidate_vertices;
  if (candidates.empty()) {
    for (std::uint32_t v = 0; v < params.size(); ++v) candidates.push_back(v);
  }
  std::vector<Channel> channels;
  for (const Channel c : kAllChannels) {
    if (options.channels[static_cast<int>(c)]) channels.push_back(c);
  }
  if (channels.empty()) throw ContractViolation("gradient check needs at least one channel");

  std::mt19937_64 gen(options.seed);
  for (int i = 0; i < options.num_probes; ++i) {
    GradProbe probe;
    probe.vertex = candidates[gen() % candidates.size()];
    probe.channel = channels[gen() % channels.size()];
    const ChannelSpace space = options.space[static_cast<int>(probe.channel)];
    const double raw = get(params[probe.vertex], probe.channel);
    const double raw_grad = get(analytic_raw.per_vertex[probe.vertex], probe.channel);
    probe.analytic = space == ChannelSpace::Log ? raw_grad * raw : raw_grad;

    const double x = to_opt_space(raw, space);
    double lo = x - options.step;
    double hi = x + options.step;
    // tau is only defined on [0, 1]: fall back to a one-sided difference at the ends.
    if (probe.channel == Channel::Tau) {
      lo = std::max(lo, 0.0);
      hi = std::min(hi, 1.0);
    }
    ParamMap p = params;
    get(p[probe.vertex], probe.channel) = from_opt_space(hi, space);
    const double f_hi = total_loss(p, nullptr);
    get(p[probe.vertex], probe.channel) = from_opt_space(lo, space);
    const double f_lo = total_loss(p, nullptr);
    probe.numeric = (f_hi - f_lo) / (hi - lo);

    // Smallest gradient a central difference resolves to 1e-3 given rounding in the loss.
    const double resolvable =
        1e3 * std::numeric_limits<double>::epsilon() * std::max(std::abs(f_hi), std::abs(f_lo)) / (hi - lo);
    const double denom = std::max({std::abs(probe.analytic), std::abs(probe.numeric), resolvable});
    probe.rel_error = denom > 0.0 ? std::abs(probe.analytic - probe.numeric) / denom : 0.0;
    report.probes.push_back(probe);
  }

  std::vector<double> errs;
  for (const auto& p : report.probes) errs.push_back(p.rel_error);
  std::sort(errs.begin(), errs.end());
  report.max_rel_error = errs.back();
  report.median_rel_error = errs.size() % 2 ? errs[errs.size() / 2]
                                            : 0.5 * (errs[errs.size() / 2 - 1] + errs[errs.size() / 2]);
  return report;
}

}  // namespace drtsar
