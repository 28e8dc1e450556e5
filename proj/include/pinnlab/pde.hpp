#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "pinnlab/errors.hpp"
#include "pinnlab/geometry.hpp"
#include "pinnlab/jet.hpp"
#include "pinnlab/tape.hpp"

namespace pinnlab {

inline constexpr double kPi = std::numbers::pi;

enum class ConstraintKind : uint8_t {
  Value,         // u(x) - g(x) = 0
  Derivative,    // du/d(axis)(x) - g(x) = 0
  PeriodicPair,  // u(x) - u(x + period e_axis) = 0
};

/// One initial/boundary constraint, defined on an axis-aligned face of the
/// domain. Free axes are sampled; fixed axes hold the listed value. Periodic
/// constraints fix pair_axis at the domain's low side and are enforced
/// against the matching point on the high side (the pair differs only on
/// that axis, by the full period).
struct Constraint {
  RegionTag tag = RegionTag::Boundary;
  ConstraintKind kind = ConstraintKind::Value;
  std::vector<int> free_axes;
  std::vector<double> fixed;  // full-dim; entries on free axes are ignored
  int pair_axis = -1;
  int deriv_axis = -1;
  std::function<double(std::span<const double>)> target;  // g on full coords

  /// Lower-dimensional sampling domain over the free axes.
  Domain face_domain(const Domain& full) const {
    std::vector<double> lo, hi;
    for (int a : free_axes) {
      lo.push_back(full.lo[static_cast<size_t>(a)]);
      hi.push_back(full.hi[static_cast<size_t>(a)]);
    }
    return Domain(lo, hi);
  }

  /// Lift face coordinates to full-dimension coordinates.
  void lift(std::span<const double> face_x, std::span<double> full_x) const {
    for (size_t a = 0; a < fixed.size(); ++a) full_x[a] = fixed[a];
    for (size_t i = 0; i < free_axes.size(); ++i)
      full_x[static_cast<size_t>(free_axes[i])] = face_x[i];
  }

  /// Periodic partner of a lifted point.
  void partner(const Domain& full, std::span<const double> full_x,
               std::span<double> out) const {
    for (size_t a = 0; a < fixed.size(); ++a) out[a] = full_x[a];
    out[static_cast<size_t>(pair_axis)] = full.hi[static_cast<size_t>(pair_axis)];
  }
};

/// One benchmark: governing residual over jets, constraints, and an
/// analytic (or spectral reference) solution used for scoring.
struct PdeProblem {
  std::string name;
  int dim = 2;
  int out_dim = 1;
  Domain domain;
  /// Scalar residual node assembled from the output jet at one point.
  std::function<NodeId(Tape&, const Jet& u, std::span<const double> x)> residual;
  std::vector<Constraint> constraints;
  std::function<double(std::span<const double>)> solution;
  bool has_solution = true;
};

// ---- individual benchmarks -------------------------------------------------

/// u_t + beta u_x = 0 on [0,2pi]x[0,1]; u(x,0)=sin x; periodic in x.
/// Method of characteristics gives u = sin(x - beta t).
inline PdeProblem convection_problem(double beta = 50.0) {
  PdeProblem p;
  p.name = "convection";
  p.dim = 2;  // (x, t)
  p.domain = Domain({0.0, 0.0}, {2.0 * kPi, 1.0});
  p.residual = [beta](Tape& t, const Jet& u, std::span<const double>) {
    return t.add(u.d1[1], t.scale(u.d1[0], beta));
  };
  Constraint ic;
  ic.tag = RegionTag::Initial;
  ic.kind = ConstraintKind::Value;
  ic.free_axes = {0};
  ic.fixed = {0.0, 0.0};
  ic.target = [](std::span<const double> x) { return std::sin(x[0]); };
  p.constraints.push_back(ic);
  Constraint bc;
  bc.tag = RegionTag::Boundary;
  bc.kind = ConstraintKind::PeriodicPair;
  bc.free_axes = {1};
  bc.fixed = {0.0, 0.0};
  bc.pair_axis = 0;
  p.constraints.push_back(bc);
  p.solution = [beta](std::span<const double> x) { return std::sin(x[0] - beta * x[1]); };
  return p;
}

/// u_t - rho u (1-u) = 0 on [0,2pi]x[0,1]; u(x,0) = h(x) Gaussian bump;
/// periodic in x. Logistic growth in t gives the closed form.
inline PdeProblem reaction_problem(double rho = 5.0) {
  PdeProblem p;
  p.name = "reaction1d";
  p.dim = 2;
  p.domain = Domain({0.0, 0.0}, {2.0 * kPi, 1.0});
  auto bump = [](double x) {
    double s = kPi / 4.0;
    return std::exp(-(x - kPi) * (x - kPi) / (2.0 * s * s));
  };
  p.residual = [rho](Tape& t, const Jet& u, std::span<const double>) {
    NodeId logistic = t.sub(u.val, t.square(u.val));  // u (1-u)
    return t.sub(u.d1[1], t.scale(logistic, rho));
  };
  Constraint ic;
  ic.tag = RegionTag::Initial;
  ic.kind = ConstraintKind::Value;
  ic.free_axes = {0};
  ic.fixed = {0.0, 0.0};
  ic.target = [bump](std::span<const double> x) { return bump(x[0]); };
  p.constraints.push_back(ic);
  Constraint bc;
  bc.tag = RegionTag::Boundary;
  bc.kind = ConstraintKind::PeriodicPair;
  bc.free_axes = {1};
  bc.fixed = {0.0, 0.0};
  bc.pair_axis = 0;
  p.constraints.push_back(bc);
  p.solution = [bump, rho](std::span<const double> x) {
    double h = bump(x[0]);
    double e = h * std::exp(rho * x[1]);
    return e / (e + 1.0 - h);
  };
  return p;
}

/// u_tt - beta u_xx = 0 on [0,1]^2; u(x,0) = sin(pi x) + 1/2 sin(beta pi x),
/// u_t(x,0) = 0; u(0,t) = u(1,t) = 0.
inline PdeProblem wave_problem(double beta = 4.0) {
  PdeProblem p;
  p.name = "wave1d";
  p.dim = 2;
  p.domain = Domain({0.0, 0.0}, {1.0, 1.0});
  p.residual = [beta](Tape& t, const Jet& u, std::span<const double>) {
    return t.sub(u.d2[1], t.scale(u.d2[0], beta));
  };
  Constraint ic;
  ic.tag = RegionTag::Initial;
  ic.kind = ConstraintKind::Value;
  ic.free_axes = {0};
  ic.fixed = {0.0, 0.0};
  ic.target = [beta](std::span<const double> x) {
    return std::sin(kPi * x[0]) + 0.5 * std::sin(beta * kPi * x[0]);
  };
  p.constraints.push_back(ic);
  Constraint icdt;
  icdt.tag = RegionTag::InitialDt;
  icdt.kind = ConstraintKind::Derivative;
  icdt.free_axes = {0};
  icdt.fixed = {0.0, 0.0};
  icdt.deriv_axis = 1;
  icdt.target = [](std::span<const double>) { return 0.0; };
  p.constraints.push_back(icdt);
  for (int side = 0; side < 2; ++side) {
    Constraint bc;
    bc.tag = RegionTag::Boundary;
    bc.kind = ConstraintKind::Value;
    bc.free_axes = {1};
    bc.fixed = {side == 0 ? 0.0 : 1.0, 0.0};
    bc.target = [](std::span<const double>) { return 0.0; };
    p.constraints.push_back(bc);
  }
  p.solution = [beta](std::span<const double> x) {
    return std::sin(kPi * x[0]) * std::cos(2.0 * kPi * x[1]) +
           0.5 * std::sin(beta * kPi * x[0]) * std::cos(2.0 * beta * kPi * x[1]);
  };
  return p;
}

/// -Lap u = A sin(kx pi x) sin(ky pi y) on [0,1]^2, zero Dirichlet boundary.
/// Closed form u = A sin sin / ((kx^2 + ky^2) pi^2).
inline PdeProblem harmonic_problem(double A = 500.0, int kx = 5, int ky = 3) {
  PdeProblem p;
  p.name = "harmonic";
  p.dim = 2;  // (x, y)
  p.domain = Domain({0.0, 0.0}, {1.0, 1.0});
  auto source = [A, kx, ky](std::span<const double> x) {
    return A * std::sin(kx * kPi * x[0]) * std::sin(ky * kPi * x[1]);
  };
  p.residual = [source](Tape& t, const Jet& u, std::span<const double> x) {
    NodeId lap = t.add(u.d2[0], u.d2[1]);
    return t.add_imm(t.neg(lap), -source(x));
  };
  for (int axis = 0; axis < 2; ++axis)
    for (int side = 0; side < 2; ++side) {
      Constraint bc;
      bc.tag = RegionTag::Boundary;
      bc.kind = ConstraintKind::Value;
      bc.free_axes = {1 - axis};
      bc.fixed = {0.0, 0.0};
      bc.fixed[static_cast<size_t>(axis)] = side == 0 ? 0.0 : 1.0;
      bc.target = [](std::span<const double>) { return 0.0; };
      p.constraints.push_back(bc);
    }
  const double denom = (kx * kx + ky * ky) * kPi * kPi;
  p.solution = [source, denom](std::span<const double> x) { return source(x) / denom; };
  return p;
}

/// Truncated double sine series for the box-load Poisson problem.
/// Coefficients are closed-form integrals of the indicator load.
class PlateSeries {
 public:
  PlateSeries(double q, double x0, double x1, double y0, double y1, int modes)
      : modes_(modes) {
    ax_.resize(static_cast<size_t>(modes));
    ay_.resize(static_cast<size_t>(modes));
    for (int m = 1; m <= modes; ++m) {
      ax_[static_cast<size_t>(m - 1)] =
          (std::cos(m * kPi * x0) - std::cos(m * kPi * x1)) / (m * kPi);
      ay_[static_cast<size_t>(m - 1)] =
          (std::cos(m * kPi * y0) - std::cos(m * kPi * y1)) / (m * kPi);
    }
    q4_ = 4.0 * q;
  }

  double operator()(double x, double y) const {
    std::vector<double> sx(static_cast<size_t>(modes_)), sy(static_cast<size_t>(modes_));
    for (int m = 1; m <= modes_; ++m) {
      sx[static_cast<size_t>(m - 1)] = std::sin(m * kPi * x);
      sy[static_cast<size_t>(m - 1)] = std::sin(m * kPi * y);
    }
    double acc = 0.0;
    for (int m = 1; m <= modes_; ++m) {
      const double fx = ax_[static_cast<size_t>(m - 1)] * sx[static_cast<size_t>(m - 1)];
      if (fx == 0.0) continue;
      double inner = 0.0;
      for (int n = 1; n <= modes_; ++n) {
        inner += ay_[static_cast<size_t>(n - 1)] * sy[static_cast<size_t>(n - 1)] /
                 ((double(m) * m + double(n) * n) * kPi * kPi);
      }
      acc += fx * inner;
    }
    return q4_ * acc;
  }

 private:
  int modes_;
  double q4_;
  std::vector<double> ax_, ay_;
};

/// -Lap u = Q 1[load box] on [0,1]^2, zero Dirichlet boundary. Reference
/// solution by truncated Fourier sine series (tail checked by mode doubling).
inline PdeProblem plate_problem(double q = 20.0, double x0 = 0.25, double x1 = 0.3,
                                double y0 = 0.7, double y1 = 0.75, int modes = 200) {
  PdeProblem p;
  p.name = "plate";
  p.dim = 2;
  p.domain = Domain({0.0, 0.0}, {1.0, 1.0});
  auto load = [q, x0, x1, y0, y1](std::span<const double> x) {
    return (x[0] >= x0 && x[0] <= x1 && x[1] >= y0 && x[1] <= y1) ? q : 0.0;
  };
  p.residual = [load](Tape& t, const Jet& u, std::span<const double> x) {
    NodeId lap = t.add(u.d2[0], u.d2[1]);
    return t.add_imm(t.neg(lap), -load(x));
  };
  for (int axis = 0; axis < 2; ++axis)
    for (int side = 0; side < 2; ++side) {
      Constraint bc;
      bc.tag = RegionTag::Boundary;
      bc.kind = ConstraintKind::Value;
      bc.free_axes = {1 - axis};
      bc.fixed = {0.0, 0.0};
      bc.fixed[static_cast<size_t>(axis)] = side == 0 ? 0.0 : 1.0;
      bc.target = [](std::span<const double>) { return 0.0; };
      p.constraints.push_back(bc);
    }
  auto series = std::make_shared<PlateSeries>(q, x0, x1, y0, y1, modes);
  p.solution = [series](std::span<const double> x) { return (*series)(x[0], x[1]); };
  return p;
}

/// -Lap u - kappa^2 u = A sin(kx pi x) sin(ky pi y) sin(kz pi z) on [0,1]^3.
/// With kappa_factor = 1 the forcing mode is resonant and no bounded
/// reference exists; scoring uses the non-resonant kappa' = kappa_factor *
/// sqrt(kx^2+ky^2+kz^2) pi variant, whose closed form is
/// u = A sin sin sin / ((kx^2+ky^2+kz^2) pi^2 - kappa'^2).
inline PdeProblem helmholtz3d_problem(double A = 1.0, int kx = 1, int ky = 1, int kz = 1,
                                      double kappa_factor = 0.9) {
  PdeProblem p;
  p.name = "helmholtz3d";
  p.dim = 3;
  p.domain = Domain({0.0, 0.0, 0.0}, {1.0, 1.0, 1.0});
  const double lam = (kx * kx + ky * ky + kz * kz) * kPi * kPi;  // forcing eigenvalue
  const double kappa2 = kappa_factor * kappa_factor * lam;
  auto source = [A, kx, ky, kz](std::span<const double> x) {
    return A * std::sin(kx * kPi * x[0]) * std::sin(ky * kPi * x[1]) *
           std::sin(kz * kPi * x[2]);
  };
  p.residual = [source, kappa2](Tape& t, const Jet& u, std::span<const double> x) {
    NodeId lap = t.add(t.add(u.d2[0], u.d2[1]), u.d2[2]);
    NodeId lhs = t.sub(t.neg(lap), t.scale(u.val, kappa2));
    return t.add_imm(lhs, -source(x));
  };
  for (int axis = 0; axis < 3; ++axis)
    for (int side = 0; side < 2; ++side) {
      Constraint bc;
      bc.tag = RegionTag::Boundary;
      bc.kind = ConstraintKind::Value;
      for (int a = 0; a < 3; ++a)
        if (a != axis) bc.free_axes.push_back(a);
      bc.fixed = {0.0, 0.0, 0.0};
      bc.fixed[static_cast<size_t>(axis)] = side == 0 ? 0.0 : 1.0;
      bc.target = [](std::span<const double>) { return 0.0; };
      p.constraints.push_back(bc);
    }
  const double denom = lam - kappa2;
  p.has_solution = std::abs(denom) > 1e-9 * lam;
  if (p.has_solution)
    p.solution = [source, denom](std::span<const double> x) { return source(x) / denom; };
  return p;
}

inline PdeProblem make_problem(const std::string& name) {
  if (name == "convection") return convection_problem();
  if (name == "reaction1d") return reaction_problem();
  if (name == "wave1d") return wave_problem();
  if (name == "harmonic") return harmonic_problem();
  if (name == "plate") return plate_problem();
  if (name == "helmholtz3d") return helmholtz3d_problem();
  throw ConfigError("unknown problem: " + name +
                    " (expected convection|reaction1d|wave1d|harmonic|plate|helmholtz3d)");
}

}  // namespace pinnlab
