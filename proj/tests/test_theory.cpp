#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pinnlab/experiments.hpp"
#include "pinnlab/theory.hpp"

using namespace pinnlab;

namespace {
TheoryParams quick_params() {
  TheoryParams tp;
  tp.trials = 2000;
  tp.grad_trials = 400;
  tp.paired_trials = 300;
  tp.bootstrap = 300;
  tp.seed = 1234;
  return tp;
}
}  // namespace

TEST_CASE("oracle integral: constants and polynomials") {
  Domain sq({0, 0}, {1, 1});
  Field one = [](std::span<const double>) { return 1.0; };
  CHECK(oracle_integral(one, sq) == doctest::Approx(1.0).epsilon(1e-12));
  Domain line({0}, {1});
  Field x2 = [](std::span<const double> x) { return x[0] * x[0]; };
  CHECK(oracle_integral(x2, line) == doctest::Approx(1.0 / 3).epsilon(1e-6));
  // value fixed by the doubling criterion: a second call reproduces it
  double a = oracle_integral(x2, line);
  double b = oracle_integral(x2, line);
  CHECK(a == b);
}

TEST_CASE("oracle integral: scaled domain") {
  Domain d({0, 0}, {2 * kPi, 1.0});
  Field f = [](std::span<const double> x) { return std::sin(x[0]) * std::sin(x[0]); };
  // integral of sin^2 over one period times the unit t-range: pi
  CHECK(oracle_integral(f, d) == doctest::Approx(kPi).epsilon(1e-6));
}

TEST_CASE("constant field: both estimators are exact with zero variance") {
  Field c = [](std::span<const double>) { return 3.0; };
  Partition p(Domain({0, 0}, {1, 1}), {4, 4});
  std::vector<int> m_k(16, 4);
  EstimatorReport r = estimate_I(c, p, m_k, 200, 7, 3.0);
  CHECK(r.mean_eas == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(r.mean_gus == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(r.var_eas <= 1e-28);
  CHECK(r.var_gus <= 1e-28);
  CHECK(r.coverage_eas == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("half-domain indicator: closed-form variances from the variance formulas") {
  // Var(EAS) = 0; Var(GUS) = |O|^2/M (1/2 - 1/4)
  Field phi = experiments::half_domain_field();
  Partition p(Domain({0, 0}, {1, 1}), {2, 1});
  const int m = 32;
  std::vector<int> m_k = {m, m};
  const int M = 2 * m;
  EstimatorReport r = estimate_I(phi, p, m_k, 20000, 8, 0.5);
  CHECK(r.var_eas == 0.0);
  double closed = (0.5 - 0.25) / M;
  CHECK(std::abs(r.var_gus - closed) < 5.0 * closed / std::sqrt(20000.0 / 2));
  CHECK(r.unbiased_eas);
  CHECK(r.unbiased_gus);
}

TEST_CASE("unbiasedness within 3 standard errors over many trials") {
  Field phi = experiments::heterogeneous_field();
  Partition p(Domain({0, 0}, {1, 1}), {4, 4});
  double I = oracle_integral(phi, p.domain(), 64, 1e-9);
  std::vector<int> m_k(16, 4);
  EstimatorReport r = estimate_I(phi, p, m_k, 10000, 9, I);
  CHECK(r.unbiased_eas);
  CHECK(r.unbiased_gus);
}

TEST_CASE("unbiasedness holds for skewed allocations (Lemma holds generally)") {
  TheoryParams tp = quick_params();
  tp.trials = 8000;
  auto o = experiments::lemma1_skewed(tp);
  CHECK(o.pass);
}

TEST_CASE("variance inequality with bootstrap margin and hard Cauchy-Schwarz") {
  TheoryParams tp = quick_params();
  auto o = experiments::theorem1_variance(tp);
  CHECK(o.pass);
  CHECK(o.var_eas <= o.var_gus);  // strict ordering on this heterogeneous field
}

TEST_CASE("cauchy-schwarz equality for constant fields") {
  Field c = [](std::span<const double>) { return 2.0; };
  Partition p(Domain({0, 0}, {1, 1}), {4, 4});
  double lhs = cauchy_schwarz_lhs(c, p, 16);
  double I = 2.0;
  double rhs = I * I / 1.0;
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("gradient variance: single-parameter toy matches the closed form") {
  // u_theta(x) = theta x^2 on the 1d "u_x = 0" problem: residual 2 theta x,
  // phi = 4 theta^2 x^2, g(x) = d phi / d theta = 8 theta x^2.
  struct ToyModel : Model {
    ToyModel() { add_weight("w", 1, 1); }
    Method method() const override { return Method::Pinn; }
    int in_dim() const override { return 1; }
    int out_dim() const override { return 1; }
    std::vector<Jet> forward_group(Tape& t, std::span<const double> coords,
                                   bool with_derivs = true,
                                   SetTrace* = nullptr) const override {
      std::vector<Jet> out;
      for (size_t i = 0; i < coords.size(); ++i) {
        Jet x = jet::input(t, coords.subspan(i, 1), with_derivs);
        out.push_back(jet::linear(t, 0, 1, 1, jet::mul(x, x)));
      }
      return out;
    }
  } toy;
  PdeProblem prob;
  prob.name = "toy";
  prob.dim = 1;
  prob.domain = Domain({0.0}, {1.0});
  prob.residual = [](Tape&, const Jet& u, std::span<const double>) { return u.d1[0]; };
  prob.has_solution = false;

  ParamVector th = ParamVector::zeros(toy.layout());
  const double theta = 0.8;
  th.data[0] = theta;
  Partition p(prob.domain, {4});
  const int m = 8, K = 4, M = K * m;
  GradVarReport r = verify_gradient_variance(toy, th, prob, p, m, 40000, 10, 200);

  // closed forms: g(x) = 8 theta x^2.
  // GUS: Var(G) = |O|^2/M Var_U(g) with Var_U(g) = 64 th^2 (1/5 - 1/9)
  double g2 = 64.0 * theta * theta;
  double var_gus = g2 * (1.0 / 5 - 1.0 / 9) / M;
  // EAS (proportional): |O|/M sum_k |E_k| Var_{U(E_k)}(g)
  double var_eas = 0.0;
  for (int k = 0; k < K; ++k) {
    double a = 0.25 * k, b = 0.25 * (k + 1);
    double m2 = (std::pow(b, 5) - std::pow(a, 5)) / (5 * (b - a));
    double m1 = (std::pow(b, 3) - std::pow(a, 3)) / (3 * (b - a));
    var_eas += (b - a) * g2 * (m2 - m1 * m1);
  }
  var_eas /= M;
  CHECK(std::abs(r.trace_gus - var_gus) / var_gus < 0.05);
  CHECK(std::abs(r.trace_eas - var_eas) / var_eas < 0.05);
  CHECK(r.trace_eas < r.trace_gus);
}

TEST_CASE("gradient variance: frozen net comparison passes with margin") {
  TheoryParams tp = quick_params();
  auto o = experiments::theorem2_gradient(tp);
  CHECK(o.pass);
  CHECK(o.trace_cov_eas <= o.trace_cov_gus);
}

TEST_CASE("coverage ratio: constant exactly 1; paired comparison; demo") {
  TheoryParams tp = quick_params();
  auto o = experiments::coverage(tp);
  CHECK(o.pass);
  auto d = experiments::coverage_adversarial_demo(tp);
  CHECK(d.pass);
  CHECK(d.coverage_gus > 10.0);
}

TEST_CASE("estimator trials are reproducible for a fixed seed") {
  Field phi = experiments::heterogeneous_field();
  Partition p(Domain({0, 0}, {1, 1}), {4, 4});
  std::vector<int> m_k(16, 4);
  EstimatorReport a = estimate_I(phi, p, m_k, 100, 77, 1.0);
  EstimatorReport b = estimate_I(phi, p, m_k, 100, 77, 1.0);
  CHECK(a.eas_vals == b.eas_vals);
  CHECK(a.gus_vals == b.gus_vals);
}

TEST_CASE("full experiment battery at reduced scale") {
  TheoryParams tp = quick_params();
  auto outcomes = experiments::run_all(tp);
  for (const auto& o : outcomes) {
    INFO(o.experiment, ": ", o.detail);
    CHECK(o.pass);
  }
}
