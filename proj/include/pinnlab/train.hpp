#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "pinnlab/config.hpp"
#include "pinnlab/losses.hpp"
#include "pinnlab/models.hpp"
#include "pinnlab/optimize.hpp"
#include "pinnlab/pde.hpp"
#include "pinnlab/theory.hpp"

namespace pinnlab {

/// Signed residual R_theta(x) of a frozen model (drives the rad sampler).
inline Field residual_field(const Model& model, const ParamVector& theta,
                            const PdeProblem& prob) {
  auto theta_copy = std::make_shared<ParamVector>(theta);
  const Model* m = &model;
  const PdeProblem* pp = &prob;
  return [m, theta_copy, pp](std::span<const double> x) {
    Tape t(*theta_copy);
    std::vector<double> coords(x.begin(), x.end());
    for (int i = 1; i < m->set_size(); ++i) coords.insert(coords.end(), x.begin(), x.end());
    auto jets = m->forward_group(t, coords, true);
    return t.value(pp->residual(t, jets[0], x));
  };
}

struct MetricsRow {
  int64_t step = 0;
  std::string stage;  // adam | lbfgs
  double total_loss = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct TrainOutcome {
  ParamVector theta;
  std::vector<MetricsRow> metrics;
  std::vector<std::string> loss_log;  // LossBreakdown json lines per step
  LbfgsResult lbfgs;
  double adam_handoff_loss = 0.0;
  double final_loss = 0.0;
  LossBreakdown final_breakdown;
  /// final loss <= handoff loss, or the line search failed (reported flag).
  bool nonincrease_ok = true;
};

/// Two-stage training per the benchmark protocol: collocation batches are
/// sampled once up front and stay fixed; Adam warmup is followed by L-BFGS
/// with strong Wolfe line search on the full batch.
inline TrainOutcome train(const PdeProblem& prob, const RunConfig& cfg) {
  auto model = make_model(cfg.model);
  ParamVector theta = model->init_params(Rng(cfg.seed, 0x1417));

  ProblemBatches batches;
  if (cfg.sampler == Sampler::Rad) {
    Field rad = residual_field(*model, theta, prob);
    batches = sample_problem_batches(prob, cfg.plan, cfg.seed, rad);
  } else {
    batches = sample_problem_batches(prob, cfg.plan, cfg.seed);
  }
  LossMode mode = cfg.method == Method::SetPinn ? LossMode::SetEnergy : LossMode::Pointwise;
  LossGraph graph = build_loss(*model, prob, batches, theta, mode);

  TrainOutcome out;
  auto t_start = std::chrono::steady_clock::now();
  auto now_ms = [&]() {
    if (!cfg.real_timings) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     t_start)
        .count();
  };

  std::vector<double> grad(theta.data.size());
  AdamState adam(theta.data.size(), AdamConfig{cfg.opt.adam_lr, 0.9, 0.999, 1e-8});
  int64_t step = 0;
  double loss = 0.0;
  for (int it = 0; it < cfg.opt.adam_iters; ++it) {
    loss = graph.eval_grad(theta.data, grad);
    adam_step(adam, theta.data, grad);
    ++step;
    double gn = 0.0;
    for (double g : grad) gn += g * g;
    out.metrics.push_back({step, "adam", loss, std::sqrt(gn), now_ms()});
    out.loss_log.push_back(graph.breakdown().json_line(step));
  }
  out.adam_handoff_loss = graph.eval(theta.data);

  LbfgsConfig lcfg;
  lcfg.max_iters = cfg.opt.lbfgs_iters;
  lcfg.grad_tol = cfg.opt.lbfgs_tol;
  Objective obj = [&graph](std::span<const double> th, std::span<double> g) {
    return graph.eval_grad(th, g);
  };
  out.lbfgs = lbfgs_minimize(obj, theta.data, lcfg, [&](const LbfgsIterate& it) {
    ++step;
    out.metrics.push_back({step, "lbfgs", it.f, it.grad_norm, now_ms()});
    // breakdown reflects the tape's most recent evaluation (the accepted point)
    out.loss_log.push_back(graph.breakdown().json_line(step));
  });
  out.final_loss = graph.eval(theta.data);
  out.final_breakdown = graph.breakdown();
  out.nonincrease_ok = out.final_loss <= out.adam_handoff_loss + 1e-12 ||
                       out.lbfgs.status == LbfgsStatus::LineSearchFailed;
  out.theta = std::move(theta);
  return out;
}

inline void save_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ConfigError("cannot open for writing: " + path);
  std::fprintf(f, "step,stage,total_loss,grad_norm,wall_ms\n");
  for (const auto& r : rows)
    std::fprintf(f, "%lld,%s,%.17g,%.17g,%.17g\n", static_cast<long long>(r.step),
                 r.stage.c_str(), r.total_loss, r.grad_norm, r.wall_ms);
  std::fclose(f);
}

}  // namespace pinnlab
