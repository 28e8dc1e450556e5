// Acceptance suite: one test case per criterion, one PASS/FAIL line each.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "pinnlab/config.hpp"
#include "pinnlab/eval.hpp"
#include "pinnlab/experiments.hpp"
#include "pinnlab/train.hpp"

using namespace pinnlab;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

double seconds_since(clk::time_point t0) {
  return std::chrono::duration<double>(clk::now() - t0).count();
}

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("CRITERION %2d: %s  %s\n", criterion, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct RunSpec {
  std::string problem;
  Method method;
  Sampler sampler;
  uint64_t seed;
};

/// Desk-profile training run; returns the test rRMSE.
double desk_run(const RunSpec& rs, std::vector<int> cells_override = {},
                int points_override = 0, int set_size_override = 0) {
  RunConfig cfg;
  cfg.problem = rs.problem;
  cfg.method = rs.method;
  cfg.model.method = rs.method;
  cfg.sampler = rs.sampler;
  cfg.seed = rs.seed;
  PdeProblem prob = make_problem(rs.problem);
  cfg.apply_profile(prob.dim);
  cfg.model.mlp.in_dim = prob.dim;
  cfg.model.set.in_dim = prob.dim;
  cfg.plan.sampler = rs.sampler;
  if (!cells_override.empty()) cfg.plan.interior_cells = cells_override;
  if (points_override > 0) {
    cfg.plan.interior_points_per_element = points_override;
    cfg.plan.face_points_per_element = points_override;
  }
  if (set_size_override > 0) cfg.model.set.set_size = set_size_override;
  TrainOutcome out = train(prob, cfg);
  auto model = make_model(cfg.model);
  Partition part(prob.domain, cfg.plan.interior_cells);
  Predictor pred = model_predictor(*model, out.theta,
                                   cfg.method == Method::SetPinn ? &part : nullptr);
  return evaluate_rrmse(pred, prob, cfg.eval_grid).rrmse;
}

/// Run a batch of independent jobs two-wide with a deterministic result order.
std::vector<double> run_parallel(const std::vector<std::function<double()>>& jobs) {
  std::vector<double> results(jobs.size());
  std::atomic<size_t> next{0};
  unsigned workers = std::max(1u, std::min(std::thread::hardware_concurrency(), 2u));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      while (true) {
        size_t i = next.fetch_add(1);
        if (i >= jobs.size()) return;
        results[i] = jobs[i]();
      }
    });
  for (auto& th : pool) th.join();
  return results;
}

}  // namespace

TEST_CASE("criterion 1: derivative correctness across architectures") {
  auto t0 = clk::now();
  Rng rng(0xC1);
  double w1 = 0, w2 = 0, wp = 0;
  auto probe_model = [&](const Model& model, const ParamVector& th,
                         const std::vector<double>& coords, size_t pt) {
    Tape t(th);
    auto jets = model.forward_group(t, coords, true);
    const Jet& u = jets[pt];
    for (int a = 0; a < model.in_dim(); ++a) {
      w1 = std::max(w1, oracles::rel_err(u.deriv1(a),
                                         oracles::fd_d1(model, th, coords, pt, a), 1e-4));
      w2 = std::max(w2, oracles::rel_err(u.deriv2(a),
                                         oracles::fd_d2(model, th, coords, pt, a), 1e-3));
    }
    Tape t2(th);
    auto jets2 = model.forward_group(t2, coords, true);
    auto g = t2.gradient(t2.square(jets2[pt].val));
    size_t stride = std::max<size_t>(1, th.data.size() / 5);
    for (size_t j = 0; j < th.data.size(); j += stride) {
      double fd = oracles::fd_param(
          [&](const ParamVector& p) {
            Tape tt(p);
            double v = model.forward_group(tt, coords, false)[pt].value();
            return v * v;
          },
          th, j);
      wp = std::max(wp, oracles::rel_err(g[j], fd, 1e-4));
    }
  };
  for (int trial = 0; trial < 100; ++trial) {
    int hidden = 4 + static_cast<int>(rng.below(8));
    MlpConfig mc{.in_dim = 2, .out_dim = 1,
                 .hidden_layers = 1 + static_cast<int>(rng.below(3)), .hidden = hidden};
    std::vector<double> x = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    {
      MlpModel m(mc, false);
      probe_model(m, m.init_params(rng.stream(4 * trial)), x, 0);
    }
    {
      MlpModel m(mc, true);
      probe_model(m, m.init_params(rng.stream(4 * trial + 1)), x, 0);
    }
    {
      QresModel m(mc);
      probe_model(m, m.init_params(rng.stream(4 * trial + 2)), x, 0);
    }
    {
      SetPinnConfig sc;
      sc.in_dim = 2;
      sc.set_size = 4;
      sc.embedding = 8;
      sc.heads = 2;
      sc.ffn_hidden = 12;
      sc.mixer_hidden = 12;
      sc.probe_hidden = 12;
      SetPinnModel m(sc);
      std::vector<double> xs;
      for (int i = 0; i < 8; ++i) xs.push_back(rng.uniform(-1, 1));
      probe_model(m, m.init_params(rng.stream(4 * trial + 3)), xs,
                  static_cast<size_t>(rng.below(4)));
    }
  }
  double dt = seconds_since(t0);
  bool pass = w1 <= 1e-5 && w2 <= 1e-4 && wp <= 1e-5 && dt <= 60.0;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "d1 %.2e (<=1e-5), d2 %.2e (<=1e-4), dtheta %.2e (<=1e-5), %.1fs", w1,
                w2, wp, dt);
  report(1, pass, buf);
  CHECK(w1 <= 1e-5);
  CHECK(w2 <= 1e-4);
  CHECK(wp <= 1e-5);
  CHECK(dt <= 60.0);
}

TEST_CASE("criterion 2: unbiasedness of both estimators (Lemma 1)") {
  auto t0 = clk::now();
  TheoryParams tp;
  tp.trials = 10000;
  auto c = experiments::lemma1_constant(tp);
  auto p = experiments::lemma1_piecewise(tp);
  auto n = experiments::lemma1_net(tp);
  auto s = experiments::lemma1_skewed(tp);
  double dt = seconds_since(t0);
  bool pass = c.pass && p.pass && n.pass && s.pass && dt <= 120.0;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "constant %s, piecewise %s, trained-net %s, skewed-alloc %s, %.1fs",
                c.pass ? "ok" : "FAIL", p.pass ? "ok" : "FAIL", n.pass ? "ok" : "FAIL",
                s.pass ? "ok" : "FAIL", dt);
  report(2, pass, buf);
  CHECK(pass);
}

TEST_CASE("criterion 3: estimator variance reduction (Theorem 1)") {
  TheoryParams tp;
  tp.trials = 10000;
  auto o = experiments::theorem1_variance(tp);
  report(3, o.pass, o.detail);
  CHECK(o.pass);
}

TEST_CASE("criterion 4: gradient variance reduction (Theorem 2)") {
  auto t0 = clk::now();
  TheoryParams tp;
  tp.grad_trials = 2000;
  auto o = experiments::theorem2_gradient(tp);
  double dt = seconds_since(t0);
  bool pass = o.pass && dt <= 600.0;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s, %.1fs (<=600)", o.detail.c_str(), dt);
  report(4, pass, buf);
  CHECK(pass);
}

TEST_CASE("criterion 5: coverage ratio (Definition 4.1 / Corollary 1)") {
  TheoryParams tp;
  tp.paired_trials = 1000;
  auto o = experiments::coverage(tp);
  auto d = experiments::coverage_adversarial_demo(tp);
  bool pass = o.pass && d.pass;
  report(5, pass, o.detail + "; " + d.detail);
  CHECK(pass);
}

TEST_CASE("criterion 6: set architecture properties") {
  SetPinnConfig sc;
  sc.in_dim = 2;
  sc.set_size = 4;
  sc.embedding = 16;
  sc.heads = 2;
  sc.ffn_hidden = 32;
  sc.mixer_hidden = 32;
  sc.probe_hidden = 32;
  SetPinnModel m(sc);
  ParamVector th = m.init_params(Rng(0xC6));
  Rng rng(0xC6C6);
  double worst_equiv = 0, worst_row = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> xs;
    for (int i = 0; i < 8; ++i) xs.push_back(rng.uniform(-1, 1));
    std::vector<int> perm = {0, 1, 2, 3};
    rng.shuffle(std::span<int>(perm));
    std::vector<double> xp(8);
    for (int i = 0; i < 4; ++i)
      for (int a = 0; a < 2; ++a)
        xp[size_t(i * 2 + a)] = xs[size_t(perm[size_t(i)] * 2 + a)];
    Tape t1(th), t2(th);
    SetTrace tr;
    auto u = m.forward_group(t1, xs, true, &tr);
    auto up = m.forward_group(t2, xp, true);
    for (int i = 0; i < 4; ++i)
      worst_equiv = std::max(worst_equiv, std::abs(up[size_t(i)].value() -
                                                   u[size_t(perm[size_t(i)])].value()));
    for (const auto& head : tr.attn[0])
      for (const auto& row : head) {
        double s = 0;
        for (double a : row) s += a;
        worst_row = std::max(worst_row, std::abs(s - 1.0));
      }
  }
  SetPinnConfig full;
  full.in_dim = 2;
  full.set_size = 4;
  full.embedding = 32;
  full.heads = 2;
  full.encoder_blocks = 2;
  full.ffn_hidden = 512;
  full.mixer_hidden = 512;
  full.probe_hidden = 512;
  full.probe_hidden_layers = 2;
  SetPinnModel fm(full);
  double rel = std::abs(double(fm.param_count()) - 366000.0) / 366000.0;
  bool pass = worst_equiv <= 1e-12 && worst_row <= 1e-12 && rel < 0.05;
  char buf[200];
  std::snprintf(
      buf, sizeof buf,
      "equivariance %.2e (<=1e-12), attn rows %.2e (<=1e-12), params %lld (%.1f%% off 366K)",
      worst_equiv, worst_row, (long long)fm.param_count(), 100.0 * rel);
  report(6, pass, buf);
  CHECK(pass);
}

TEST_CASE("criterion 7: optimizer contracts") {
  Rng rng(0xC7);
  const int n = 10;
  std::vector<double> b(static_cast<size_t>(n) * n);
  for (auto& v : b) v = rng.uniform(-1, 1);
  std::vector<double> a(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int k = 0; k < n; ++k) s += b[size_t(k * n + i)] * b[size_t(k * n + j)];
      a[size_t(i * n + j)] = s + (i == j ? 1.0 : 0.0);
    }
  std::vector<double> c(static_cast<size_t>(n));
  for (auto& v : c) v = rng.uniform(-2, 2);
  Objective quad = [&](std::span<const double> x, std::span<double> g) {
    double f = 0;
    for (int i = 0; i < n; ++i) {
      double gi = 0;
      for (int j = 0; j < n; ++j)
        gi += a[size_t(i * n + j)] * (x[size_t(j)] - c[size_t(j)]);
      g[size_t(i)] = gi;
      f += 0.5 * (x[size_t(i)] - c[size_t(i)]) * gi;
    }
    return f;
  };
  std::vector<double> x(static_cast<size_t>(n));
  for (auto& v : x) v = rng.uniform(-2, 2);
  LbfgsConfig cfg;
  cfg.grad_tol = 1e-10;
  cfg.max_iters = 30;
  LbfgsResult rq = lbfgs_minimize(quad, x, cfg);
  bool quad_ok = rq.status == LbfgsStatus::Converged && rq.grad_norm <= 1e-10 &&
                 rq.accepted_steps <= 30 && rq.wolfe_violations == 0;

  Objective rosen = [](std::span<const double> xx, std::span<double> g) {
    double u = 1.0 - xx[0];
    double v = xx[1] - xx[0] * xx[0];
    g[0] = -2.0 * u - 400.0 * xx[0] * v;
    g[1] = 200.0 * v;
    return u * u + 100.0 * v * v;
  };
  std::vector<double> xr = {-1.2, 1.0};
  LbfgsConfig rcfg;
  rcfg.max_iters = 200;
  rcfg.grad_tol = 1e-12;
  LbfgsResult rr = lbfgs_minimize(rosen, xr, rcfg);
  bool rosen_ok = rr.f <= 1e-8 && rr.accepted_steps <= 200 && rr.wolfe_violations == 0;
  bool pass = quad_ok && rosen_ok;
  char buf[220];
  std::snprintf(buf, sizeof buf,
                "quadratic |g|=%.1e in %d iters; rosenbrock f=%.1e in %d iters; "
                "wolfe violations %d",
                rq.grad_norm, rq.accepted_steps, rr.f, rr.accepted_steps,
                rq.wolfe_violations + rr.wolfe_violations);
  report(7, pass, buf);
  CHECK(pass);
}

TEST_CASE("criterion 8: desk-scale benchmark direction") {
  PdeProblem harm = harmonic_problem();
  EvalResult self = evaluate_rrmse(field_predictor(harm.solution), harm,
                                   std::vector<int>{101, 101});
  bool analytic_zero = self.rrmse == 0.0;
  EvalResult zero =
      evaluate_rrmse(constant_predictor(0.0), harm, std::vector<int>{101, 101});
  bool zero_one = zero.rrmse == 1.0;

  const char* problems[3] = {"convection", "reaction1d", "harmonic"};
  std::vector<std::function<double()>> jobs;
  for (const char* prob : problems)
    for (Method meth : {Method::SetPinn, Method::Pinn})
      for (uint64_t seed = 1; seed <= 5; ++seed) {
        RunSpec rs{prob, meth,
                   meth == Method::SetPinn ? Sampler::Eas : Sampler::Gus, seed};
        jobs.push_back([rs]() { return desk_run(rs); });
      }
  std::vector<double> r = run_parallel(jobs);
  bool direction = true;
  std::string detail;
  for (int p = 0; p < 3; ++p) {
    std::vector<double> set_r(r.begin() + p * 10, r.begin() + p * 10 + 5);
    std::vector<double> pinn_r(r.begin() + p * 10 + 5, r.begin() + p * 10 + 10);
    double ms = median(set_r), mp = median(pinn_r);
    direction = direction && ms < mp;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s set %.3f vs pinn %.3f; ", problems[p], ms, mp);
    detail += buf;
  }
  bool pass = direction && analytic_zero && zero_one;
  detail += analytic_zero ? "analytic rrmse=0; " : "analytic rrmse NONZERO; ";
  detail += zero_one ? "zero-predictor rrmse=1" : "zero-predictor rrmse != 1";
  report(8, pass, detail);
  CHECK(analytic_zero);
  CHECK(zero_one);
  CHECK(direction);
}

TEST_CASE("criterion 9: ablation directions") {
  std::vector<std::function<double()>> ejobs;
  const int base = 24;
  for (int n : {2, 4, 8})
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      int cells = base / n;
      int pts = n * n;
      ejobs.push_back([cells, pts, seed]() {
        RunSpec rs{"reaction1d", Method::SetPinn, Sampler::Eas, seed};
        return desk_run(rs, {cells, cells}, pts, pts);
      });
    }
  std::vector<double> er = run_parallel(ejobs);
  double m2 = median({er[0], er[1], er[2], er[3], er[4]});
  double m4 = median({er[5], er[6], er[7], er[8], er[9]});
  double m8 = median({er[10], er[11], er[12], er[13], er[14]});
  bool monotone = m2 <= m4 && m4 <= m8;

  const char* pdes[5] = {"wave1d", "reaction1d", "convection", "harmonic", "plate"};
  std::vector<std::function<double()>> sjobs;
  for (const char* pde : pdes)
    for (Sampler s : {Sampler::Eas, Sampler::Gus})
      for (uint64_t seed = 1; seed <= 5; ++seed) {
        RunSpec rs{pde, Method::Pinn, s, seed};
        sjobs.push_back([rs]() { return desk_run(rs); });
      }
  std::vector<double> sr = run_parallel(sjobs);
  int eas_wins = 0;
  std::string sdetail;
  for (int p = 0; p < 5; ++p) {
    std::vector<double> eas_r(sr.begin() + p * 10, sr.begin() + p * 10 + 5);
    std::vector<double> gus_r(sr.begin() + p * 10 + 5, sr.begin() + p * 10 + 10);
    double me = median(eas_r), mg = median(gus_r);
    if (me <= mg) ++eas_wins;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s %.3f/%.3f ", pdes[p], me, mg);
    sdetail += buf;
  }
  bool pass = monotone && eas_wins >= 3;
  char buf[300];
  std::snprintf(buf, sizeof buf,
                "element medians %.3f <= %.3f <= %.3f (%s); eas/uniform per pde: %s(%d of 5)",
                m2, m4, m8, monotone ? "monotone" : "NOT monotone", sdetail.c_str(),
                eas_wins);
  report(9, pass, buf);
  CHECK(monotone);
  CHECK(eas_wins >= 3);
}

TEST_CASE("criterion 10: byte-identical artifacts under identical config and seed") {
  fs::path dir = fs::temp_directory_path() / "pinnlab_acceptance_c10";
  fs::remove_all(dir);
  fs::create_directories(dir);
  setenv("PINNLAB_OUT_ROOT", dir.string().c_str(), 1);
  fs::path cfg = dir / "c10.ini";
  {
    std::ofstream out(cfg);
    out << "[run]\nseed = 21\nproblem = reaction1d\nmethod = pinn\nsampler = eas\n"
           "out_dir = a\n[partition]\ninterior_cells = 4 4\nface_cells = 4\n"
           "[optimizer]\nadam_iters = 5\nlbfgs_iters = 10\n[eval]\ngrid = 21 21\n";
  }
  auto run_cli = [&](const std::string& args) {
    std::string cmd = std::string(PINNLAB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  bool pass = run_cli("train --config " + cfg.string() + " --out a") == 0 &&
              run_cli("train --config " + cfg.string() + " --out b") == 0;
  int identical = 0;
  for (const char* f :
       {"checkpoint.bin", "metrics.csv", "eval.json", "field.csv", "losses.jsonl"})
    identical +=
        slurp(dir / "a" / f) == slurp(dir / "b" / f) && !slurp(dir / "a" / f).empty();
  pass = pass && identical == 5;
  pass = pass &&
         run_cli("verify-theory --config " + cfg.string() + " --out t1 --seed 21") == 0;
  pass = pass &&
         run_cli("verify-theory --config " + cfg.string() + " --out t2 --seed 21") == 0;
  pass = pass && slurp(dir / "t1" / "theory_report.json") ==
                     slurp(dir / "t2" / "theory_report.json");
  pass = pass && run_cli("sample --config " + cfg.string() + " --out-file s1.csv") == 0;
  pass = pass && run_cli("sample --config " + cfg.string() + " --out-file s2.csv") == 0;
  pass = pass && slurp(dir / "s1.csv") == slurp(dir / "s2.csv");
  char buf[96];
  std::snprintf(buf, sizeof buf,
                "train artifacts identical %d/5; theory and sample reruns identical",
                identical);
  report(10, pass, buf);
  CHECK(pass);
}
