#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pinnlab/geometry.hpp"
#include "pinnlab/losses.hpp"
#include "pinnlab/models.hpp"
#include "pinnlab/pde.hpp"
#include "pinnlab/rng.hpp"

namespace pinnlab {

using Field = std::function<double(std::span<const double>)>;

/// Composite midpoint quadrature on a tensor grid, Richardson-doubled until
/// the relative change drops below rel_tol (or the resolution cap is hit).
inline double oracle_integral(const Field& f, const Domain& d, int init_res = 32,
                              double rel_tol = 1e-6, int max_res = 4096) {
  const int dim = d.dim();
  auto level = [&](int res) {
    std::vector<double> x(static_cast<size_t>(dim));
    std::vector<int> idx(static_cast<size_t>(dim), 0);
    int64_t cells = 1;
    for (int a = 0; a < dim; ++a) cells *= res;
    double cell = d.measure() / static_cast<double>(cells);
    double acc = 0.0;
    for (int64_t c = 0; c < cells; ++c) {
      for (int a = 0; a < dim; ++a)
        x[static_cast<size_t>(a)] =
            d.lo[static_cast<size_t>(a)] +
            (idx[static_cast<size_t>(a)] + 0.5) *
                (d.hi[static_cast<size_t>(a)] - d.lo[static_cast<size_t>(a)]) / res;
      acc += f(x);
      for (int a = 0; a < dim; ++a) {
        if (++idx[static_cast<size_t>(a)] < res) break;
        idx[static_cast<size_t>(a)] = 0;
      }
    }
    return acc * cell;
  };
  double prev = level(init_res);
  for (int res = init_res * 2; res <= max_res; res *= 2) {
    double cur = level(res);
    double denom = std::max(std::abs(cur), 1e-300);
    if (std::abs(cur - prev) / denom <= rel_tol) return cur;
    prev = cur;
  }
  return prev;
}

/// One-shot stratified estimate: sum_k (|E_k| / m_k) sum_i phi(x_{k,i}).
inline double ihat_eas(const Field& phi, const Partition& p,
                       std::span<const int> m_k, Rng& rng) {
  PointBatch b = sample_eas(p, m_k, rng);
  double acc = 0.0;
  size_t i = 0;
  for (int k = 0; k < p.size(); ++k) {
    double ek = 0.0;
    for (int j = 0; j < m_k[static_cast<size_t>(k)]; ++j, ++i) ek += phi(b.point(i));
    if (m_k[static_cast<size_t>(k)] > 0)
      acc += p.element(k).measure / m_k[static_cast<size_t>(k)] * ek;
  }
  return acc;
}

/// One-shot global estimate: (|Omega| / M) sum_j phi(x_j).
inline double ihat_gus(const Field& phi, const Domain& d, int M, Rng& rng) {
  PointBatch b = sample_gus(d, M, rng);
  double acc = 0.0;
  for (size_t i = 0; i < b.size(); ++i) acc += phi(b.point(i));
  return d.measure() / M * acc;
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance_of(std::span<const double> v) {
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// Per-trial Monte-Carlo statistics for the two estimators of
/// I = integral of phi. Coverage ratios C = I / Ihat use the first trial.
struct EstimatorReport {
  std::string experiment;
  double I = 0.0;
  std::vector<double> eas_vals, gus_vals;
  double mean_eas = 0.0, var_eas = 0.0;
  double mean_gus = 0.0, var_gus = 0.0;
  double coverage_eas = 0.0, coverage_gus = 0.0;
  bool unbiased_eas = false, unbiased_gus = false;

  void finalize() {
    mean_eas = mean_of(eas_vals);
    var_eas = variance_of(eas_vals);
    mean_gus = mean_of(gus_vals);
    var_gus = variance_of(gus_vals);
    coverage_eas = I / eas_vals.front();
    coverage_gus = I / gus_vals.front();
    const double t = static_cast<double>(eas_vals.size());
    auto within = [&](double mean, double var) {
      double se = std::sqrt(var / t);
      return std::abs(mean - I) <= 3.0 * se + 1e-12 * std::abs(I) + 1e-300;
    };
    unbiased_eas = within(mean_eas, var_eas);
    unbiased_gus = within(mean_gus, var_gus);
  }
};

/// Run `trials` independent one-shot estimates under both strategies with
/// per-trial disjoint rng streams. The allocation table covers the skewed
/// (non-proportional) Lemma-1 variant as well.
inline EstimatorReport estimate_I(const Field& phi, const Partition& p,
                                  std::span<const int> m_k, int trials,
                                  uint64_t seed, double true_I) {
  EstimatorReport r;
  r.I = true_I;
  int M = 0;
  for (int m : m_k) M += m;
  Rng root(seed);
  for (int t = 0; t < trials; ++t) {
    Rng re = root.stream(2 * static_cast<uint64_t>(t));
    Rng rg = root.stream(2 * static_cast<uint64_t>(t) + 1);
    r.eas_vals.push_back(ihat_eas(phi, p, m_k, re));
    r.gus_vals.push_back(ihat_gus(phi, p.domain(), M, rg));
  }
  r.finalize();
  return r;
}

/// Bootstrap standard error of a statistic of one sample.
inline double bootstrap_se(std::span<const double> vals, int resamples, uint64_t seed,
                           const std::function<double(std::span<const double>)>& stat) {
  Rng rng(seed, 0x9e3779b9);
  std::vector<double> stats(static_cast<size_t>(resamples));
  std::vector<double> re(vals.size());
  for (int b = 0; b < resamples; ++b) {
    for (auto& x : re) x = vals[static_cast<size_t>(rng.below(vals.size()))];
    stats[static_cast<size_t>(b)] = stat(re);
  }
  double m = mean_of(stats);
  double s = 0.0;
  for (double x : stats) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(resamples - 1));
}

/// Variance-reduction check (estimator side): empirical comparison with a
/// bootstrap margin plus the deterministic Cauchy-Schwarz inequality on
/// oracle per-element integrals.
struct VarianceCheck {
  EstimatorReport report;
  double var_ratio = 0.0;       // var_eas / var_gus
  double ratio_se = 0.0;        // bootstrap SE of the ratio
  bool pass_empirical = false;  // var_eas <= var_gus (1 + 3 SE)
  double cs_lhs = 0.0;          // sum I_k^2 / |E_k|
  double cs_rhs = 0.0;          // I^2 / |Omega|
  bool pass_cs = false;
  bool pass() const { return pass_empirical && pass_cs; }
};

inline double cauchy_schwarz_lhs(const Field& phi, const Partition& p,
                                 int element_res = 64) {
  double lhs = 0.0;
  for (int k = 0; k < p.size(); ++k) {
    const Element& el = p.element(k);
    Domain sub(el.lo, el.hi);
    double ik = oracle_integral(phi, sub, element_res, 1e-9, element_res);
    lhs += ik * ik / el.measure;
  }
  return lhs;
}

inline VarianceCheck verify_variance_inequality(const Field& phi, const Partition& p,
                                                int m_per_element, int trials,
                                                uint64_t seed, double true_I,
                                                int bootstrap_n = 1000,
                                                int element_res = 64) {
  VarianceCheck c;
  std::vector<int> m_k(static_cast<size_t>(p.size()), m_per_element);
  c.report = estimate_I(phi, p, m_k, trials, seed, true_I);
  c.var_ratio = c.report.var_eas / c.report.var_gus;
  // bootstrap SE of the variance ratio (independent resamples of both arms)
  {
    Rng rng(seed, 0x5eed);
    std::vector<double> ratios(static_cast<size_t>(bootstrap_n));
    std::vector<double> re(c.report.eas_vals.size()), rg(c.report.gus_vals.size());
    for (int b = 0; b < bootstrap_n; ++b) {
      for (auto& x : re)
        x = c.report.eas_vals[static_cast<size_t>(rng.below(re.size()))];
      for (auto& x : rg)
        x = c.report.gus_vals[static_cast<size_t>(rng.below(rg.size()))];
      ratios[static_cast<size_t>(b)] = variance_of(re) / variance_of(rg);
    }
    double m = mean_of(ratios);
    double s = 0.0;
    for (double x : ratios) s += (x - m) * (x - m);
    c.ratio_se = std::sqrt(s / static_cast<double>(bootstrap_n - 1));
  }
  c.pass_empirical = c.var_ratio <= 1.0 + 3.0 * c.ratio_se;
  c.cs_lhs = cauchy_schwarz_lhs(phi, p, element_res);
  double I = oracle_integral(phi, p.domain(), element_res, 1e-9, element_res);
  c.cs_rhs = I * I / p.domain().measure();
  c.pass_cs = c.cs_lhs >= c.cs_rhs - 1e-9 * std::abs(c.cs_rhs);
  return c;
}

/// Gradient-variance comparison for a frozen model: per-trial gradients of
/// the Def-4.1 estimators, traces of the empirical covariance, and a
/// bootstrap margin on their ratio.
struct GradVarReport {
  double trace_eas = 0.0, trace_gus = 0.0;
  double ratio = 0.0, ratio_se = 0.0;
  int trials = 0;
  bool pass = false;
};

namespace detail {

/// nabla_theta of Ihat = sum_i w_i * |R(x_i)|^2 for a fixed weighting.
inline void estimator_gradient(const Model& model, const ParamVector& theta,
                               const PdeProblem& prob, const PointBatch& batch,
                               std::span<const double> weights,
                               std::span<double> grad_out) {
  Tape t(theta);
  auto jets = forward_points(model, t, batch.coords, prob.dim, true);
  NodeId acc = kNoNode;
  for (size_t i = 0; i < jets.size(); ++i) {
    NodeId r = prob.residual(t, jets[i], batch.point(i));
    NodeId term = t.scale(t.square(r), weights[i]);
    acc = i == 0 ? term : t.add(acc, term);
  }
  t.gradient(acc, grad_out);
}

inline double trace_cov(const std::vector<std::vector<double>>& g) {
  const size_t T = g.size(), P = g.front().size();
  std::vector<double> mean(P, 0.0);
  for (const auto& v : g)
    for (size_t p = 0; p < P; ++p) mean[p] += v[p];
  for (auto& m : mean) m /= static_cast<double>(T);
  double acc = 0.0;
  for (const auto& v : g)
    for (size_t p = 0; p < P; ++p) acc += (v[p] - mean[p]) * (v[p] - mean[p]);
  return acc / static_cast<double>(T - 1);
}

inline double trace_cov_resampled(const std::vector<std::vector<double>>& g,
                                  std::span<const int> pick) {
  const size_t P = g.front().size();
  std::vector<double> mean(P, 0.0);
  double sumsq = 0.0;
  for (int t : pick)
    for (size_t p = 0; p < P; ++p) mean[p] += g[static_cast<size_t>(t)][p];
  for (auto& m : mean) m /= static_cast<double>(pick.size());
  for (int t : pick)
    for (size_t p = 0; p < P; ++p) {
      double d = g[static_cast<size_t>(t)][p] - mean[p];
      sumsq += d * d;
    }
  return sumsq / static_cast<double>(pick.size() - 1);
}

}  // namespace detail

inline GradVarReport verify_gradient_variance(const Model& model,
                                              const ParamVector& theta,
                                              const PdeProblem& prob,
                                              const Partition& p, int m_per_element,
                                              int trials, uint64_t seed,
                                              int bootstrap_n = 1000) {
  const int K = p.size();
  const int M = K * m_per_element;
  const size_t P = static_cast<size_t>(theta.size());
  std::vector<std::vector<double>> g_eas(static_cast<size_t>(trials)),
      g_gus(static_cast<size_t>(trials));
  Rng root(seed);
  std::vector<int> m_k(static_cast<size_t>(K), m_per_element);
  for (int t = 0; t < trials; ++t) {
    Rng re = root.stream(2 * static_cast<uint64_t>(t));
    Rng rg = root.stream(2 * static_cast<uint64_t>(t) + 1);
    PointBatch be = sample_eas(p, m_k, re);
    std::vector<double> we(be.size());
    for (size_t i = 0; i < be.size(); ++i)
      we[i] = p.element(be.element[i]).measure / m_per_element;
    g_eas[static_cast<size_t>(t)].resize(P);
    detail::estimator_gradient(model, theta, prob, be, we, g_eas[static_cast<size_t>(t)]);

    PointBatch bg = sample_gus(p.domain(), M, rg);
    std::vector<double> wg(bg.size(), p.domain().measure() / M);
    g_gus[static_cast<size_t>(t)].resize(P);
    detail::estimator_gradient(model, theta, prob, bg, wg, g_gus[static_cast<size_t>(t)]);
  }
  GradVarReport r;
  r.trials = trials;
  r.trace_eas = detail::trace_cov(g_eas);
  r.trace_gus = detail::trace_cov(g_gus);
  r.ratio = r.trace_eas / r.trace_gus;
  {
    Rng rng(seed, 0xb007);
    std::vector<double> ratios(static_cast<size_t>(bootstrap_n));
    std::vector<int> pe(static_cast<size_t>(trials)), pg(static_cast<size_t>(trials));
    for (int b = 0; b < bootstrap_n; ++b) {
      for (auto& i : pe) i = static_cast<int>(rng.below(static_cast<uint64_t>(trials)));
      for (auto& i : pg) i = static_cast<int>(rng.below(static_cast<uint64_t>(trials)));
      ratios[static_cast<size_t>(b)] =
          detail::trace_cov_resampled(g_eas, pe) / detail::trace_cov_resampled(g_gus, pg);
    }
    double m = mean_of(ratios);
    double s = 0.0;
    for (double x : ratios) s += (x - m) * (x - m);
    r.ratio_se = std::sqrt(s / static_cast<double>(bootstrap_n - 1));
  }
  r.pass = r.ratio <= 1.0 + 3.0 * r.ratio_se;
  return r;
}

/// Coverage ratio C = I / Ihat for a single sampling realization.
inline double coverage_ratio_eas(const Field& phi, double I, const Partition& p,
                                 int m_per_element, Rng& rng) {
  std::vector<int> m_k(static_cast<size_t>(p.size()), m_per_element);
  return I / ihat_eas(phi, p, m_k, rng);
}

inline double coverage_ratio_gus(const Field& phi, double I, const Domain& d, int M,
                                 Rng& rng) {
  return I / ihat_gus(phi, d, M, rng);
}

/// Squared-residual field |R_theta(x)|^2 of a frozen model, usable as a
/// quadrature/estimation target. Evaluates pointwise through the jet engine.
inline Field residual_energy_field(const Model& model, const ParamVector& theta,
                                   const PdeProblem& prob) {
  auto model_ptr = &model;
  auto theta_copy = std::make_shared<ParamVector>(theta);
  auto prob_ptr = &prob;
  return [model_ptr, theta_copy, prob_ptr](std::span<const double> x) {
    Tape t(*theta_copy);
    std::vector<double> coords(x.begin(), x.end());
    // set models see a degenerate set of copies of the same point
    const int g = model_ptr->set_size();
    for (int i = 1; i < g; ++i) coords.insert(coords.end(), x.begin(), x.end());
    auto jets = model_ptr->forward_group(t, coords, true);
    double r = t.value(prob_ptr->residual(t, jets[0], x));
    return r * r;
  };
}

}  // namespace pinnlab
