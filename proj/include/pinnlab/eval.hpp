#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "pinnlab/losses.hpp"
#include "pinnlab/models.hpp"
#include "pinnlab/pde.hpp"

namespace pinnlab {

/// Batch predictor: fills one output per point (out_dim == 1).
using Predictor =
    std::function<void(std::span<const double> coords, std::span<double> out)>;

/// Uniform tensor grid including the domain boundaries.
inline std::vector<double> make_grid(const Domain& d, std::span<const int> counts) {
  const int dim = d.dim();
  int64_t n = 1;
  for (int c : counts) n *= c;
  std::vector<double> pts;
  pts.reserve(static_cast<size_t>(n) * static_cast<size_t>(dim));
  std::vector<int> idx(static_cast<size_t>(dim), 0);
  for (int64_t i = 0; i < n; ++i) {
    for (int a = 0; a < dim; ++a) {
      int c = counts[static_cast<size_t>(a)];
      double u = c == 1 ? 0.5 : static_cast<double>(idx[static_cast<size_t>(a)]) / (c - 1);
      pts.push_back(d.lo[static_cast<size_t>(a)] +
                    u * (d.hi[static_cast<size_t>(a)] - d.lo[static_cast<size_t>(a)]));
    }
    for (int a = 0; a < dim; ++a) {
      if (++idx[static_cast<size_t>(a)] < counts[static_cast<size_t>(a)]) break;
      idx[static_cast<size_t>(a)] = 0;
    }
  }
  return pts;
}

/// Value-only model predictor. Pointwise models evaluate in fixed-size
/// chunks; set models group grid points by partition element and pad the
/// final short chunk of an element by repeating its last point (padding
/// entries are discarded).
inline Predictor model_predictor(const Model& model, const ParamVector& theta,
                                 const Partition* partition = nullptr) {
  auto theta_ptr = std::make_shared<ParamVector>(theta);
  const Model* m = &model;
  if (model.set_size() == 1) {
    return [m, theta_ptr](std::span<const double> coords, std::span<double> out) {
      const size_t d = static_cast<size_t>(m->in_dim());
      const size_t n = coords.size() / d;
      const size_t chunk = 256;
      for (size_t start = 0; start < n; start += chunk) {
        size_t cnt = std::min(chunk, n - start);
        Tape t(*theta_ptr);
        auto jets = m->forward_group(t, coords.subspan(start * d, cnt * d), false);
        for (size_t i = 0; i < cnt; ++i) out[start + i] = jets[i].value();
      }
    };
  }
  if (!partition)
    throw UsageError("set-model predictor requires the problem partition");
  auto part = std::make_shared<Partition>(*partition);
  return [m, theta_ptr, part](std::span<const double> coords, std::span<double> out) {
    const size_t d = static_cast<size_t>(m->in_dim());
    const size_t n = coords.size() / d;
    const size_t g = static_cast<size_t>(m->set_size());
    std::vector<std::vector<size_t>> by_el(static_cast<size_t>(part->size()));
    for (size_t i = 0; i < n; ++i)
      by_el[static_cast<size_t>(part->locate(coords.subspan(i * d, d)))].push_back(i);
    std::vector<double> group(g * d);
    std::vector<size_t> members(g);
    for (const auto& idxs : by_el) {
      if (idxs.empty()) continue;
      // strided grouping: each set spans the element instead of hugging one
      // grid row, matching the spread of training-time draws
      const size_t chunks = (idxs.size() + g - 1) / g;
      for (size_t c = 0; c < chunks; ++c) {
        for (size_t j = 0; j < g; ++j) {
          size_t pos = c + j * chunks;
          size_t src = idxs[pos < idxs.size() ? pos : idxs.size() - 1];
          members[j] = src;
          for (size_t a = 0; a < d; ++a) group[j * d + a] = coords[src * d + a];
        }
        Tape t(*theta_ptr);
        auto jets = m->forward_group(t, group, false);
        for (size_t j = 0; j < g; ++j) {
          size_t pos = c + j * chunks;
          if (pos < idxs.size()) out[members[j]] = jets[j].value();
        }
      }
    }
  };
}

/// Constant-value predictor (rRMSE sanity anchors).
inline Predictor constant_predictor(double v) {
  return [v](std::span<const double> coords, std::span<double> out) {
    (void)coords;
    for (auto& o : out) o = v;
  };
}

/// Predictor that evaluates an analytic field.
inline Predictor field_predictor(const std::function<double(std::span<const double>)>& f) {
  return [f](std::span<const double> coords, std::span<double> out) {
    size_t d = coords.size() / out.size();
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(coords.subspan(i * d, d));
  };
}

struct EvalResult {
  double rrmse = 0.0;
  double abs_rmse = 0.0;
  bool truth_all_zero = false;  // rrmse undefined; abs_rmse reported instead
  std::vector<int> grid;
  std::vector<double> pred, truth, abs_err;
  double runtime_ms = 0.0;
  LossBreakdown final_losses;
};

/// Relative root mean squared error over a dense test grid:
/// sqrt(sum (pred - truth)^2 / sum truth^2).
inline EvalResult evaluate_rrmse(const Predictor& predict, const PdeProblem& prob,
                                 std::span<const int> grid_counts) {
  if (!prob.has_solution)
    throw ConfigError("problem '" + prob.name + "' has no reference solution to score");
  EvalResult r;
  r.grid.assign(grid_counts.begin(), grid_counts.end());
  std::vector<double> pts = make_grid(prob.domain, grid_counts);
  const size_t d = static_cast<size_t>(prob.dim);
  const size_t n = pts.size() / d;
  r.pred.resize(n);
  r.truth.resize(n);
  r.abs_err.resize(n);
  predict(pts, r.pred);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < n; ++i) {
    r.truth[i] = prob.solution(std::span(pts.data() + i * d, d));
    double e = r.pred[i] - r.truth[i];
    r.abs_err[i] = std::abs(e);
    num += e * e;
    den += r.truth[i] * r.truth[i];
  }
  r.abs_rmse = std::sqrt(num / static_cast<double>(n));
  if (den == 0.0) {
    r.truth_all_zero = true;
    r.rrmse = r.abs_rmse;
  } else {
    r.rrmse = std::sqrt(num / den);
  }
  return r;
}

/// Field dump rows: x...,u_pred,u_true,abs_err over the evaluation grid.
inline void save_field_csv(const std::string& path, const PdeProblem& prob,
                           const EvalResult& r) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ConfigError("cannot open for writing: " + path);
  for (int a = 0; a < prob.dim; ++a) std::fprintf(f, "x%d,", a);
  std::fprintf(f, "u_pred,u_true,abs_err\n");
  std::vector<double> pts = make_grid(prob.domain, r.grid);
  const size_t d = static_cast<size_t>(prob.dim);
  for (size_t i = 0; i < r.pred.size(); ++i) {
    for (size_t a = 0; a < d; ++a) std::fprintf(f, "%.17g,", pts[i * d + a]);
    std::fprintf(f, "%.17g,%.17g,%.17g\n", r.pred[i], r.truth[i], r.abs_err[i]);
  }
  std::fclose(f);
}

}  // namespace pinnlab
