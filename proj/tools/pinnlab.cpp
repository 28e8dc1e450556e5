// Command-line front end: training runs, evaluation, theory verification,
// ablation sweeps, point-batch export, and artifact inspection.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "pinnlab/config.hpp"
#include "pinnlab/eval.hpp"
#include "pinnlab/experiments.hpp"
#include "pinnlab/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace pinnlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCheckFailed = 4;

fs::path out_root() {
  if (const char* env = std::getenv("PINNLAB_OUT_ROOT")) return fs::path(env);
  return fs::current_path();
}

fs::path resolve_out(const std::string& dir) {
  fs::path p(dir);
  if (p.is_absolute()) return p;
  return out_root() / p;
}

struct CliOverrides {
  std::string seed, profile, method, sampler, problem, out;

  void apply(IniFile& f) const {
    if (!seed.empty()) f.set("run", "seed", seed);
    if (!profile.empty()) f.set("run", "profile", profile);
    if (!method.empty()) f.set("run", "method", method);
    if (!sampler.empty()) f.set("run", "sampler", sampler);
    if (!problem.empty()) f.set("run", "problem", problem);
    if (!out.empty()) f.set("run", "out_dir", out);
  }
};

RunConfig load_config(const std::string& path, const CliOverrides& ov) {
  IniFile f = IniFile::parse_file(path);
  ov.apply(f);
  return RunConfig::resolve(f);
}

json losses_json(const LossBreakdown& b) {
  json j;
  j["interior"] = b.interior;
  j["initial"] = b.initial;
  j["initial_dt"] = b.initial_dt;
  j["boundary"] = b.boundary;
  j["total"] = b.total;
  return j;
}

json eval_json(const RunConfig& cfg, const EvalResult& ev, const TrainOutcome* tr) {
  json j;
  j["problem"] = cfg.problem;
  j["method"] = method_name(cfg.method);
  j["sampler"] = sampler_name(cfg.sampler);
  j["profile"] = cfg.profile;
  j["seed"] = cfg.seed;
  j["grid"] = ev.grid;
  j["rrmse"] = ev.rrmse;
  j["abs_rmse"] = ev.abs_rmse;
  j["truth_all_zero"] = ev.truth_all_zero;
  j["runtime_ms"] = ev.runtime_ms;
  if (tr) {
    j["losses"] = losses_json(ev.final_losses);
    json l;
    l["status"] = lbfgs_status_name(tr->lbfgs.status);
    l["accepted_steps"] = tr->lbfgs.accepted_steps;
    l["wolfe_violations"] = tr->lbfgs.wolfe_violations;
    l["history_resets"] = tr->lbfgs.history_resets;
    l["final_grad_norm"] = tr->lbfgs.grad_norm;
    l["nonincrease_ok"] = tr->nonincrease_ok;
    j["lbfgs"] = l;
  }
  return j;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + p.string());
  out << text;
}

struct RunArtifacts {
  EvalResult eval;
  TrainOutcome outcome;
};

RunArtifacts run_training(const RunConfig& cfg, const PdeProblem& prob) {
  RunArtifacts ra;
  auto t0 = std::chrono::steady_clock::now();
  ra.outcome = train(prob, cfg);
  auto model = make_model(cfg.model);
  Partition part(prob.domain, cfg.plan.interior_cells);
  Predictor pred = model_predictor(*model, ra.outcome.theta,
                                   cfg.method == Method::SetPinn ? &part : nullptr);
  ra.eval = evaluate_rrmse(pred, prob, cfg.eval_grid);
  if (cfg.real_timings)
    ra.eval.runtime_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
  ra.eval.final_losses = ra.outcome.final_breakdown;
  return ra;
}

void write_train_artifacts(const fs::path& dir, const RunConfig& cfg,
                           const PdeProblem& prob, const RunArtifacts& ra) {
  fs::create_directories(dir);
  checkpoint::save((dir / "checkpoint.bin").string(), ra.outcome.theta);
  save_metrics_csv((dir / "metrics.csv").string(), ra.outcome.metrics);
  std::string log;
  for (const auto& line : ra.outcome.loss_log) log += line + "\n";
  write_text(dir / "losses.jsonl", log);
  write_text(dir / "eval.json", eval_json(cfg, ra.eval, &ra.outcome).dump(2) + "\n");
  save_field_csv((dir / "field.csv").string(), prob, ra.eval);
}

int cmd_train(const std::string& config_path, const CliOverrides& ov) {
  RunConfig cfg = load_config(config_path, ov);
  PdeProblem prob = make_problem(cfg.problem);
  RunArtifacts ra = run_training(cfg, prob);
  fs::path dir = resolve_out(cfg.out_dir);
  write_train_artifacts(dir, cfg, prob, ra);
  std::printf("trained %s/%s/%s seed=%llu rrmse=%.6g loss=%.6g -> %s\n",
              cfg.problem.c_str(), method_name(cfg.method), sampler_name(cfg.sampler),
              static_cast<unsigned long long>(cfg.seed), ra.eval.rrmse,
              ra.outcome.final_loss, dir.string().c_str());
  return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const CliOverrides& ov) {
  RunConfig cfg = load_config(config_path, ov);
  PdeProblem prob = make_problem(cfg.problem);
  auto model = make_model(cfg.model);
  ParamVector theta =
      checkpoint::load(checkpoint_path, model->layout().digest());
  Partition part(prob.domain, cfg.plan.interior_cells);
  Predictor pred = model_predictor(*model, theta,
                                   cfg.method == Method::SetPinn ? &part : nullptr);
  EvalResult ev = evaluate_rrmse(pred, prob, cfg.eval_grid);
  fs::path dir = resolve_out(cfg.out_dir);
  fs::create_directories(dir);
  write_text(dir / "eval.json", eval_json(cfg, ev, nullptr).dump(2) + "\n");
  save_field_csv((dir / "field.csv").string(), prob, ev);
  std::printf("eval %s rrmse=%.6g -> %s\n", cfg.problem.c_str(), ev.rrmse,
              dir.string().c_str());
  return kExitOk;
}

int cmd_verify_theory(const std::string& config_path, const CliOverrides& ov) {
  IniFile f = config_path.empty() ? IniFile::parse("[run]\nseed = 17\n")
                                  : IniFile::parse_file(config_path);
  ov.apply(f);
  TheoryParams tp;
  tp.seed = f.get_u64("run", "seed", 17);
  tp.trials = f.get_int("theory", "trials", tp.trials);
  tp.grad_trials = f.get_int("theory", "grad_trials", tp.grad_trials);
  tp.paired_trials = f.get_int("theory", "paired_trials", tp.paired_trials);
  tp.bootstrap = f.get_int("theory", "bootstrap", tp.bootstrap);
  tp.m_per_element = f.get_int("theory", "m_per_element", tp.m_per_element);
  tp.cells = f.get_ints("theory", "cells", tp.cells);
  std::string out_dir = f.get_str("run", "out_dir", "theory");

  auto outcomes = experiments::run_all(tp);
  bool all_pass = true;
  json report;
  report["experiments"] = json::array();
  for (const auto& o : outcomes) {
    json e;
    e["experiment"] = o.experiment;
    e["I"] = o.I;
    e["mean_eas"] = o.mean_eas;
    e["var_eas"] = o.var_eas;
    e["mean_gus"] = o.mean_gus;
    e["var_gus"] = o.var_gus;
    e["coverage_eas"] = o.coverage_eas;
    e["coverage_gus"] = o.coverage_gus;
    e["trace_cov_eas"] = o.trace_cov_eas;
    e["trace_cov_gus"] = o.trace_cov_gus;
    e["pass"] = o.pass;
    e["detail"] = o.detail;
    report["experiments"].push_back(e);
    all_pass = all_pass && o.pass;
    std::printf("%-28s %s  %s\n", o.experiment.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
  }
  report["pass"] = all_pass;
  fs::path dir = resolve_out(out_dir);
  fs::create_directories(dir);
  write_text(dir / "theory_report.json", report.dump(2) + "\n");
  return all_pass ? kExitOk : kExitCheckFailed;
}

struct SweepJob {
  RunConfig cfg;
  std::string setting;
};

int cmd_ablate(const std::string& config_path, const std::string& sweep, int seeds,
               const CliOverrides& ov) {
  RunConfig base = load_config(config_path, ov);
  std::vector<SweepJob> jobs;
  auto push_seeded = [&](RunConfig cfg, const std::string& setting) {
    for (int s = 0; s < seeds; ++s) {
      SweepJob j{cfg, setting};
      j.cfg.seed = base.seed + static_cast<uint64_t>(s);
      jobs.push_back(std::move(j));
    }
  };
  if (sweep == "element_size") {
    // n x n grid cells per element on a fixed 40x40 base grid: cells 40/n,
    // set size (and points per element) n^2, constant total M
    for (int n : {2, 4, 8}) {
      RunConfig cfg = base;
      cfg.method = Method::SetPinn;
      cfg.model.method = Method::SetPinn;
      cfg.sampler = Sampler::Eas;
      cfg.plan.sampler = Sampler::Eas;
      int cells = 40 / n;
      cfg.plan.interior_cells = {cells, cells};
      cfg.plan.interior_points_per_element = n * n;
      cfg.model.set.set_size = n * n;
      cfg.plan.face_cells = 64 / (n * n);
      cfg.plan.face_points_per_element = n * n;
      push_seeded(cfg, std::to_string(n));
    }
  } else if (sweep == "heads") {
    for (int h : {2, 4, 8}) {
      RunConfig cfg = base;
      cfg.method = Method::SetPinn;
      cfg.model.method = Method::SetPinn;
      cfg.sampler = Sampler::Eas;
      cfg.plan.sampler = Sampler::Eas;
      cfg.model.set.heads = h;
      push_seeded(cfg, std::to_string(h));
    }
  } else if (sweep == "blocks") {
    for (int b : {1, 2}) {
      RunConfig cfg = base;
      cfg.method = Method::SetPinn;
      cfg.model.method = Method::SetPinn;
      cfg.sampler = Sampler::Eas;
      cfg.plan.sampler = Sampler::Eas;
      cfg.model.set.encoder_blocks = b;
      push_seeded(cfg, std::to_string(b));
    }
  } else if (sweep == "sampler") {
    for (Sampler s : {Sampler::Eas, Sampler::Gus, Sampler::Lhs, Sampler::Rad}) {
      RunConfig cfg = base;
      cfg.sampler = s;
      cfg.plan.sampler = s;
      push_seeded(cfg, sampler_name(s));
    }
  } else {
    throw ConfigError("unknown sweep: " + sweep +
                      " (expected element_size|heads|blocks|sampler)");
  }

  struct Row {
    std::string setting;
    uint64_t seed;
    double rrmse, final_loss;
  };
  std::vector<Row> rows(jobs.size());
  const unsigned workers =
      std::max(1u, std::min(std::thread::hardware_concurrency(), 4u));
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  std::string first_error;
  std::mutex err_mu;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        size_t i = next.fetch_add(1);
        if (i >= jobs.size()) return;
        try {
          PdeProblem prob = make_problem(jobs[i].cfg.problem);
          RunArtifacts ra = run_training(jobs[i].cfg, prob);
          rows[i] = {jobs[i].setting, jobs[i].cfg.seed, ra.eval.rrmse,
                     ra.outcome.final_loss};
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (first_error.empty()) first_error = e.what();
          rows[i] = {jobs[i].setting, jobs[i].cfg.seed,
                     std::numeric_limits<double>::quiet_NaN(),
                     std::numeric_limits<double>::quiet_NaN()};
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (!first_error.empty()) throw NumericalError("sweep run failed: " + first_error);

  fs::path dir = resolve_out(base.out_dir);
  fs::create_directories(dir);
  fs::path csv = dir / ("ablate_" + sweep + ".csv");
  FILE* fcsv = std::fopen(csv.string().c_str(), "wb");
  if (!fcsv) throw ConfigError("cannot open for writing: " + csv.string());
  std::fprintf(fcsv, "sweep,setting,seed,problem,method,sampler,rrmse,final_loss\n");
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::fprintf(fcsv, "%s,%s,%llu,%s,%s,%s,%.17g,%.17g\n", sweep.c_str(),
                 r.setting.c_str(), static_cast<unsigned long long>(r.seed),
                 jobs[i].cfg.problem.c_str(), method_name(jobs[i].cfg.method),
                 sampler_name(jobs[i].cfg.sampler), r.rrmse, r.final_loss);
  }
  std::fclose(fcsv);
  std::printf("ablate %s: %zu rows -> %s\n", sweep.c_str(), rows.size(),
              csv.string().c_str());
  return kExitOk;
}

int cmd_sample(const std::string& config_path, const std::string& out_file,
               const std::string& region, const CliOverrides& ov) {
  RunConfig cfg = load_config(config_path, ov);
  PdeProblem prob = make_problem(cfg.problem);
  ProblemBatches b;
  if (cfg.sampler == Sampler::Rad) {
    auto model = make_model(cfg.model);
    ParamVector theta = model->init_params(Rng(cfg.seed, 0x1417));
    Field rad = residual_field(*model, theta, prob);
    b = sample_problem_batches(prob, cfg.plan, cfg.seed, rad);
  } else {
    b = sample_problem_batches(prob, cfg.plan, cfg.seed);
  }
  PointBatch out;
  out.dim = prob.dim;
  auto want = [&](RegionTag t) {
    return region == "all" || region == region_name(t);
  };
  if (want(RegionTag::Interior)) {
    for (size_t i = 0; i < b.interior.size(); ++i)
      out.push(b.interior.point(i), b.interior.element[i], RegionTag::Interior);
  }
  for (const auto& fb : b.faces) {
    RegionTag tag = prob.constraints[fb.constraint].tag;
    if (!want(tag)) continue;
    for (size_t i = 0; i < fb.points.size(); ++i)
      out.push(std::span(fb.lifted.data() + i * static_cast<size_t>(prob.dim),
                         static_cast<size_t>(prob.dim)),
               fb.points.element[i], tag);
  }
  fs::path p = resolve_out(out_file);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  save_batch_csv(p.string(), out);
  std::printf("sampled %zu points (%s) -> %s\n", out.size(), region.c_str(),
              p.string().c_str());
  return kExitOk;
}

int cmd_inspect(const std::string& file) {
  fs::path p(file);
  if (!fs::exists(p)) throw ConfigError("no such file: " + file);
  std::ifstream in(p, std::ios::binary);
  std::string head(8, '\0');
  in.read(head.data(), 8);
  in.seekg(0);
  if (head.rfind("PLCK", 0) == 0) {
    // checkpoint: report digest and count without a layout to check against
    in.seekg(8);
    uint64_t digest = 0, count = 0;
    in.read(reinterpret_cast<char*>(&digest), 8);
    in.read(reinterpret_cast<char*>(&count), 8);
    std::printf("checkpoint: %llu params, layout digest %016llx\n",
                static_cast<unsigned long long>(count),
                static_cast<unsigned long long>(digest));
    return kExitOk;
  }
  std::string text((std::istreambuf_iterator<char>(in)), {});
  std::string ext = p.extension().string();
  if (ext == ".json") {
    json j = json::parse(text);
    std::printf("json: %zu top-level keys", j.size());
    if (j.contains("rrmse")) std::printf(", rrmse=%.6g", j["rrmse"].get<double>());
    if (j.contains("pass")) std::printf(", pass=%s", j["pass"].get<bool>() ? "true" : "false");
    std::printf("\n");
    return kExitOk;
  }
  if (ext == ".jsonl") {
    size_t n = 0;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
      if (line.empty()) continue;
      auto rec = json::parse(line);
      (void)rec;
      ++n;
    }
    std::printf("jsonl: %zu records\n", n);
    return kExitOk;
  }
  if (ext == ".csv") {
    std::istringstream ss(text);
    std::string header;
    std::getline(ss, header);
    size_t rows = 0;
    std::string line;
    while (std::getline(ss, line))
      if (!line.empty()) ++rows;
    if (header.find("element,region") != std::string::npos) {
      PointBatch b = load_batch_csv(p.string());
      std::printf("point batch: %zu points, dim %d\n", b.size(), b.dim);
    } else if (header.rfind("step,stage", 0) == 0 ||
               header.find("u_pred") != std::string::npos ||
               header.rfind("sweep,", 0) == 0) {
      std::printf("csv [%s]: %zu rows\n", header.c_str(), rows);
    } else {
      throw ConfigError("unrecognized csv header: " + header);
    }
    return kExitOk;
  }
  throw ConfigError("unrecognized artifact: " + file);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"physics-informed set-network laboratory"};
  app.require_subcommand(1);

  CliOverrides ov;
  std::string config_path, checkpoint_path, sweep, out_file, file;
  std::string region = "interior";
  int seeds = 5;

  auto add_common = [&](CLI::App* c, bool config_required = true) {
    auto* opt = c->add_option("--config", config_path, "run configuration file");
    if (config_required) opt->required();
    c->add_option("--seed", ov.seed, "override [run] seed");
    c->add_option("--profile", ov.profile, "override profile (desk|full)");
    c->add_option("--method", ov.method, "override method (pinn|fls|qres|setpinn)");
    c->add_option("--sampler", ov.sampler, "override sampler (eas|gus|lhs|rad)");
    c->add_option("--problem", ov.problem, "override problem name");
    c->add_option("--out", ov.out, "override output directory");
  };

  auto* train_cmd = app.add_subcommand("train", "train a model and write artifacts");
  add_common(train_cmd);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test grid");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  auto* verify_cmd = app.add_subcommand("verify-theory", "run the estimator-theory suites");
  add_common(verify_cmd, /*config_required=*/false);
  auto* ablate_cmd = app.add_subcommand("ablate", "run a hyperparameter sweep");
  add_common(ablate_cmd);
  ablate_cmd->add_option("--sweep", sweep, "element_size|heads|blocks|sampler")->required();
  ablate_cmd->add_option("--seeds", seeds, "seeds per setting");
  auto* sample_cmd = app.add_subcommand("sample", "export a collocation point batch");
  add_common(sample_cmd);
  sample_cmd->add_option("--out-file", out_file, "output csv path")->required();
  sample_cmd->add_option("--region", region, "interior|initial|initial_dt|boundary|all");
  auto* inspect_cmd = app.add_subcommand("inspect", "parse and summarize an artifact");
  inspect_cmd->add_option("--file", file, "artifact path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(train_cmd)) return cmd_train(config_path, ov);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(config_path, checkpoint_path, ov);
    if (app.got_subcommand(verify_cmd)) return cmd_verify_theory(config_path, ov);
    if (app.got_subcommand(ablate_cmd)) return cmd_ablate(config_path, sweep, seeds, ov);
    if (app.got_subcommand(sample_cmd)) return cmd_sample(config_path, out_file, region, ov);
    if (app.got_subcommand(inspect_cmd)) return cmd_inspect(file);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
  return kExitConfig;
}
