// Test-side oracles: finite differences, closed-form PDE derivatives, and
// small statistics helpers. These stay independent of the jet/tape
// propagation they are used to check.
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "pinnlab/models.hpp"
#include "pinnlab/pde.hpp"

namespace oracles {

using pinnlab::Model;
using pinnlab::ParamVector;
using pinnlab::Tape;

inline double rel_err(double got, double want, double floor = 1e-6) {
  return std::abs(got - want) / std::max(floor, std::abs(want));
}

/// Value-only model evaluation used as the base of every FD check.
inline double eval_value(const Model& m, const ParamVector& th,
                         std::span<const double> coords, size_t point_idx = 0) {
  Tape t(th);
  return m.forward_group(t, coords, false)[point_idx].value();
}

/// Central first difference of the model value in coordinate `a` of point
/// `point_idx` within the group.
inline double fd_d1(const Model& m, const ParamVector& th, std::vector<double> coords,
                    size_t point_idx, int a, double h = 1e-4) {
  const size_t off = point_idx * static_cast<size_t>(m.in_dim()) + static_cast<size_t>(a);
  std::vector<double> xp = coords, xm = coords;
  xp[off] += h;
  xm[off] -= h;
  return (eval_value(m, th, xp, point_idx) - eval_value(m, th, xm, point_idx)) / (2 * h);
}

/// Central second difference (pure) in coordinate `a`.
inline double fd_d2(const Model& m, const ParamVector& th, std::vector<double> coords,
                    size_t point_idx, int a, double h = 1e-4) {
  const size_t off = point_idx * static_cast<size_t>(m.in_dim()) + static_cast<size_t>(a);
  std::vector<double> xp = coords, xm = coords;
  xp[off] += h;
  xm[off] -= h;
  double f0 = eval_value(m, th, coords, point_idx);
  return (eval_value(m, th, xp, point_idx) - 2 * f0 + eval_value(m, th, xm, point_idx)) /
         (h * h);
}

/// Central difference of a scalar objective over one parameter.
inline double fd_param(const std::function<double(const ParamVector&)>& f,
                       const ParamVector& th, size_t j, double h = 1e-6) {
  ParamVector tp = th, tm = th;
  tp.data[j] += h;
  tm.data[j] -= h;
  return (f(tp) - f(tm)) / (2 * h);
}

// ---- closed-form solution derivatives (independent of the jet engine) ----

struct Closed {
  double u, ux, ut, uxx, utt;
};

inline Closed convection_closed(double x, double t, double beta = 50.0) {
  double p = x - beta * t;
  return {std::sin(p), std::cos(p), -beta * std::cos(p), -std::sin(p),
          -beta * beta * std::sin(p)};
}

inline Closed reaction_closed(double x, double t, double rho = 5.0) {
  const double s = pinnlab::kPi / 4.0;
  double h = std::exp(-(x - pinnlab::kPi) * (x - pinnlab::kPi) / (2 * s * s));
  double A = h * std::exp(rho * t);
  double B = 1.0 - h;
  double u = A / (A + B);
  double ut = rho * A * B / ((A + B) * (A + B));
  return {u, 0.0, ut, 0.0, 0.0};  // spatial derivatives unused by the residual
}

inline Closed wave_closed(double x, double t, double beta = 4.0) {
  const double pi = pinnlab::kPi;
  double s1 = std::sin(pi * x), c1 = std::cos(2 * pi * t);
  double s2 = std::sin(beta * pi * x), c2 = std::cos(2 * beta * pi * t);
  Closed c;
  c.u = s1 * c1 + 0.5 * s2 * c2;
  c.ux = pi * std::cos(pi * x) * c1 + 0.5 * beta * pi * std::cos(beta * pi * x) * c2;
  c.ut = -2 * pi * s1 * std::sin(2 * pi * t) -
         beta * pi * s2 * std::sin(2 * beta * pi * t);
  c.uxx = -pi * pi * s1 * c1 - 0.5 * beta * beta * pi * pi * s2 * c2;
  c.utt = -4 * pi * pi * s1 * c1 - 2 * beta * beta * pi * pi * s2 * c2;
  return c;
}

struct Closed2d {
  double u, uxx, uyy;
};

inline Closed2d harmonic_closed(double x, double y, double A = 500, int kx = 5, int ky = 3) {
  const double pi = pinnlab::kPi;
  double denom = (kx * kx + ky * ky) * pi * pi;
  double u = A * std::sin(kx * pi * x) * std::sin(ky * pi * y) / denom;
  return {u, -kx * kx * pi * pi * u, -ky * ky * pi * pi * u};
}

/// Build a jet whose streams are filled with given closed-form derivatives,
/// for feeding residual operators without any network.
inline pinnlab::Jet closed_jet(Tape& t, double u, std::span<const double> d1,
                               std::span<const double> d2) {
  pinnlab::Jet j;
  j.tape = &t;
  j.dim = static_cast<int>(d1.size());
  j.val = t.constant(u);
  for (size_t i = 0; i < d1.size(); ++i) {
    j.d1.push_back(t.constant(d1[i]));
    j.d2.push_back(t.constant(d2[i]));
  }
  return j;
}

}  // namespace oracles
