#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "pinnlab/errors.hpp"

namespace pinnlab {

/// Objective contract: fill grad, return f. Must be deterministic for a
/// fixed x (full-batch; collocation points never move inside a run).
using Objective = std::function<double(std::span<const double>, std::span<double>)>;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::vector<double> m, v;
  int64_t step = 0;

  explicit AdamState(size_t n, AdamConfig c = {})
      : cfg(c), m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam update, in place.
inline void adam_step(AdamState& st, std::span<double> theta,
                      std::span<const double> grad) {
  if (theta.size() != st.m.size() || grad.size() != st.m.size())
    throw UsageError("adam_step: size mismatch");
  ++st.step;
  const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (size_t i = 0; i < theta.size(); ++i) {
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * grad[i];
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * grad[i] * grad[i];
    double mhat = st.m[i] / c1;
    double vhat = st.v[i] / c2;
    theta[i] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
  }
}

struct LbfgsConfig {
  int memory = 10;
  int max_iters = 2000;
  double grad_tol = 1e-10;
  double c1 = 1e-4;           // sufficient decrease
  double c2 = 0.9;            // curvature
  int max_linesearch = 25;
  double curvature_min = 1e-10;  // discard pairs with s.y below this
};

enum class LbfgsStatus { Converged, IterationCap, LineSearchFailed, AlreadyOptimal };

inline const char* lbfgs_status_name(LbfgsStatus s) {
  switch (s) {
    case LbfgsStatus::Converged: return "converged";
    case LbfgsStatus::IterationCap: return "iteration_cap";
    case LbfgsStatus::LineSearchFailed: return "line_search_failed";
    case LbfgsStatus::AlreadyOptimal: return "already_optimal";
  }
  return "?";
}

struct LbfgsIterate {
  int iter = 0;
  double f = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
  int evals = 0;
};

struct LbfgsResult {
  LbfgsStatus status = LbfgsStatus::IterationCap;
  int accepted_steps = 0;
  int evals = 0;
  int history_resets = 0;
  int wolfe_violations = 0;  // accepted steps failing either inequality
  double f = 0.0;
  double grad_norm = 0.0;
  std::vector<LbfgsIterate> trace;
};

namespace detail {

inline double dot_v(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot_v(a, a)); }

struct Pair {
  std::vector<double> s, y;
  double rho = 0.0;  // 1 / (s.y)
};

/// Two-loop recursion with gamma = s.y / y.y initial scaling.
inline void two_loop(const std::deque<Pair>& hist, std::span<const double> g,
                     std::span<double> dir) {
  std::vector<double> q(g.begin(), g.end());
  std::vector<double> alpha(hist.size());
  for (size_t i = hist.size(); i-- > 0;) {
    const Pair& p = hist[i];
    alpha[i] = p.rho * dot_v(p.s, q);
    for (size_t j = 0; j < q.size(); ++j) q[j] -= alpha[i] * p.y[j];
  }
  double gamma = 1.0;
  if (!hist.empty()) {
    const Pair& last = hist.back();
    gamma = 1.0 / (last.rho * dot_v(last.y, last.y));
  }
  for (size_t j = 0; j < q.size(); ++j) q[j] *= gamma;
  for (size_t i = 0; i < hist.size(); ++i) {
    const Pair& p = hist[i];
    double beta = p.rho * dot_v(p.y, q);
    for (size_t j = 0; j < q.size(); ++j) q[j] += p.s[j] * (alpha[i] - beta);
  }
  for (size_t j = 0; j < q.size(); ++j) dir[j] = -q[j];
}

/// Cubic-interpolated minimizer of a 1D slice between two evaluated points;
/// falls back to bisection when the interpolant is degenerate.
inline double cubic_min(double a, double fa, double ga, double b, double fb, double gb) {
  double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
  double disc = d1 * d1 - ga * gb;
  if (disc < 0.0 || !std::isfinite(disc)) return 0.5 * (a + b);
  double d2 = std::sqrt(disc);
  if (b < a) d2 = -d2;
  double t = b - (b - a) * ((gb + d2 - d1) / (gb - ga + 2.0 * d2));
  if (!std::isfinite(t)) return 0.5 * (a + b);
  double lo = std::min(a, b), hi = std::max(a, b);
  double margin = 0.1 * (hi - lo);
  return std::min(std::max(t, lo + margin), hi - margin);
}

}  // namespace detail

/// Strong-Wolfe line search (bracket + zoom). phi(a) = f(x + a d).
/// Returns the accepted step in *alpha and leaves f/g evaluated there, or
/// returns false when no acceptable step was found.
class WolfeLineSearch {
 public:
  WolfeLineSearch(const Objective& obj, std::span<const double> x0,
                  std::span<const double> dir, double f0, double g0,
                  const LbfgsConfig& cfg)
      : obj_(obj), x0_(x0), dir_(dir), f0_(f0), dphi0_(g0), cfg_(cfg),
        xtrial_(x0.size()), gtrial_(x0.size()) {}

  bool search(double alpha_init, double* alpha_out) {
    double a_prev = 0.0, f_prev = f0_, g_prev = dphi0_;
    double a = alpha_init;
    const double a_max = 1e20;
    for (int it = 0; it < cfg_.max_linesearch; ++it) {
      double f, g;
      phi(a, &f, &g);
      if (f > f0_ + cfg_.c1 * a * dphi0_ || (it > 0 && f >= f_prev))
        return zoom(a_prev, f_prev, g_prev, a, f, g, alpha_out);
      if (std::abs(g) <= -cfg_.c2 * dphi0_) {
        *alpha_out = a;
        return true;
      }
      if (g >= 0.0) return zoom(a, f, g, a_prev, f_prev, g_prev, alpha_out);
      a_prev = a;
      f_prev = f;
      g_prev = g;
      a = std::min(2.0 * a, a_max);
    }
    return false;
  }

  int evals() const { return evals_; }
  double last_f() const { return f_last_; }
  std::span<const double> last_x() const { return xtrial_; }
  std::span<const double> last_grad() const { return gtrial_; }

  /// Evaluate the slice at alpha (caches the full gradient of the trial).
  void phi(double a, double* f, double* dphi) {
    for (size_t i = 0; i < x0_.size(); ++i) xtrial_[i] = x0_[i] + a * dir_[i];
    f_last_ = obj_(xtrial_, gtrial_);
    ++evals_;
    *f = f_last_;
    *dphi = detail::dot_v(gtrial_, dir_);
  }

 private:
  bool zoom(double alo, double flo, double glo, double ahi, double fhi, double ghi,
            double* alpha_out) {
    for (int it = 0; it < cfg_.max_linesearch; ++it) {
      double a = detail::cubic_min(alo, flo, glo, ahi, fhi, ghi);
      double f, g;
      phi(a, &f, &g);
      if (f > f0_ + cfg_.c1 * a * dphi0_ || f >= flo) {
        ahi = a;
        fhi = f;
        ghi = g;
      } else {
        if (std::abs(g) <= -cfg_.c2 * dphi0_) {
          *alpha_out = a;
          return true;
        }
        if (g * (ahi - alo) >= 0.0) {
          ahi = alo;
          fhi = flo;
          ghi = glo;
        }
        alo = a;
        flo = f;
        glo = g;
      }
      if (std::abs(ahi - alo) < 1e-16 * std::max(1.0, std::abs(alo))) break;
    }
    return false;
  }

  const Objective& obj_;
  std::span<const double> x0_;
  std::span<const double> dir_;
  double f0_, dphi0_;
  const LbfgsConfig& cfg_;
  std::vector<double> xtrial_, gtrial_;
  int evals_ = 0;
  double f_last_ = 0.0;
};

/// L-BFGS with strong Wolfe line search. theta is updated in place. A first
/// line-search failure resets the history once and retries from steepest
/// descent; a second failure terminates with LineSearchFailed.
inline LbfgsResult lbfgs_minimize(
    const Objective& obj, std::span<double> theta, const LbfgsConfig& cfg = {},
    const std::function<void(const LbfgsIterate&)>& on_iterate = {}) {
  const size_t n = theta.size();
  LbfgsResult res;
  std::vector<double> g(n), dir(n), x_old(n), g_old(n);
  double f = obj(theta, g);
  ++res.evals;
  double gnorm = detail::norm2(g);
  if (gnorm <= cfg.grad_tol) {
    res.status = LbfgsStatus::AlreadyOptimal;
    res.f = f;
    res.grad_norm = gnorm;
    return res;
  }
  std::deque<detail::Pair> hist;
  bool reset_used = false;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    detail::two_loop(hist, g, dir);
    double dg = detail::dot_v(dir, g);
    if (dg >= 0.0) {  // not a descent direction: drop history
      hist.clear();
      for (size_t i = 0; i < n; ++i) dir[i] = -g[i];
      dg = -gnorm * gnorm;
    }
    double alpha0 = hist.empty() ? std::min(1.0, 1.0 / std::max(1e-12, gnorm)) : 1.0;
    WolfeLineSearch ls(obj, theta, dir, f, dg, cfg);
    double alpha = 0.0;
    bool ok = ls.search(alpha0, &alpha);
    res.evals += ls.evals();
    if (!ok) {
      if (!reset_used && !hist.empty()) {
        reset_used = true;
        ++res.history_resets;
        hist.clear();
        continue;  // retry this iterate with steepest descent
      }
      res.status = LbfgsStatus::LineSearchFailed;
      res.f = f;
      res.grad_norm = gnorm;
      return res;
    }
    // accepted: record Wolfe check, update history
    {
      double f_new = ls.last_f();
      double dphi_new = detail::dot_v(ls.last_grad(), dir);
      bool armijo = f_new <= f + cfg.c1 * alpha * dg + 1e-12 * std::abs(f);
      bool curv = std::abs(dphi_new) <= -cfg.c2 * dg + 1e-12;
      if (!(armijo && curv)) ++res.wolfe_violations;
      assert(armijo && curv);
    }
    x_old.assign(theta.begin(), theta.end());
    g_old = g;
    auto gx = ls.last_x();
    for (size_t i = 0; i < n; ++i) theta[i] = gx[i];
    std::copy(ls.last_grad().begin(), ls.last_grad().end(), g.begin());
    f = ls.last_f();
    gnorm = detail::norm2(g);
    ++res.accepted_steps;

    detail::Pair pr;
    pr.s.resize(n);
    pr.y.resize(n);
    double sy = 0.0;
    for (size_t i = 0; i < n; ++i) {
      pr.s[i] = theta[i] - x_old[i];
      pr.y[i] = g[i] - g_old[i];
      sy += pr.s[i] * pr.y[i];
    }
    if (sy > cfg.curvature_min) {
      pr.rho = 1.0 / sy;
      hist.push_back(std::move(pr));
      if (static_cast<int>(hist.size()) > cfg.memory) hist.pop_front();
    }
    if (on_iterate) {
      LbfgsIterate li{iter + 1, f, gnorm, alpha, res.evals};
      on_iterate(li);
    }
    if (gnorm <= cfg.grad_tol) {
      res.status = LbfgsStatus::Converged;
      res.f = f;
      res.grad_norm = gnorm;
      return res;
    }
  }
  res.status = LbfgsStatus::IterationCap;
  res.f = f;
  res.grad_norm = gnorm;
  return res;
}

}  // namespace pinnlab
