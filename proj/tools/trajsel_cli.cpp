// Command-line front end: data generation, two-phase training, evaluation,
// FLOPs sweep, leave-one-out oracle, variance-loss ablation, score dumps.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "trajsel/data/synthetic.hpp"
#include "trajsel/exp/config.hpp"
#include "trajsel/exp/evaluation.hpp"
#include "trajsel/exp/training.hpp"
#include "trajsel/model/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace trajsel;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::optional<double> alpha;
  std::optional<std::string> out;
  bool verbose = false;
};

exp::ExperimentConfig resolve(const CommonOptions& o) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw data::ConfigError("cannot open config " + o.config);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw data::ConfigError("config " + o.config + ": " + e.what());
    }
  }
  if (o.seed) j["seed"] = *o.seed;
  if (o.threshold) j["threshold"] = *o.threshold;
  if (o.alpha) j["alpha"] = *o.alpha;
  if (o.out) j["out_dir"] = *o.out;
  exp::ExperimentConfig c = exp::parse_experiment_config(j);
  fs::create_directories(c.out_dir);
  return c;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_log_csv(const fs::path& path, const exp::TrainLog& log) {
  auto out = open_output(path);
  out << "epoch,loss,trajectory,variance_term,score_mean,score_std,keep_rate,grad_norm\n";
  for (const auto& e : log.epochs) {
    out << fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", e.epoch, e.loss, e.trajectory,
                       e.variance_term, e.score_mean, e.score_std, e.keep_rate, e.grad_norm);
  }
}

model::PredictorModel require_predictor(const exp::ExperimentConfig& c) {
  if (!fs::exists(c.tp_path())) {
    throw data::ConfigError("no predictor checkpoint at " + c.tp_path().string() + "; run train-tp first");
  }
  return model::load_predictor(c.tp_path().string());
}

model::EstimatorModel require_estimator(const exp::ExperimentConfig& c) {
  if (!fs::exists(c.ie_path())) {
    throw data::ConfigError("no estimator checkpoint at " + c.ie_path().string() + "; run train-ie first");
  }
  return model::load_estimator(c.ie_path().string());
}

void save_config(const exp::ExperimentConfig& c) {
  auto out = open_output(fs::path(c.out_dir) / "config.json");
  out << exp::to_json(c).dump(2) << '\n';
}

void cmd_gen_data(const exp::ExperimentConfig& c) {
  const fs::path dir(c.out_dir);
  data::save_scenes(dir / "train.jsonl", exp::load_data(c, exp::DataRole::Train));
  if (c.estimator_train) {
    data::save_scenes(dir / "estimator_train.jsonl", exp::load_data(c, exp::DataRole::EstimatorTrain));
  }
  data::save_scenes(dir / "eval.jsonl", exp::load_data(c, exp::DataRole::Eval));
  std::cout << "wrote scenes to " << dir.string() << '\n';
}

void cmd_train_tp(const exp::ExperimentConfig& c) {
  const auto scenes = exp::load_data(c, exp::DataRole::Train);
  exp::TrainLog log;
  const auto m = exp::train_predictor(scenes, c.predictor, c.train_tp, &log);
  model::save_predictor(c.tp_path().string(), m);
  write_log_csv(fs::path(c.out_dir) / "tp_log.csv", log);
  std::cout << fmt::format("predictor: final loss {:.6f}, saved {}\n", log.epochs.back().loss, c.tp_path().string());
}

exp::TrainLog train_ie(const exp::ExperimentConfig& c, const model::PredictorModel& tp, double alpha,
                       const fs::path& checkpoint, const fs::path& log_path) {
  const auto scenes = exp::load_data(c, exp::DataRole::EstimatorTrain);
  exp::TrainConfig t = c.train_ie;
  t.alpha = alpha;
  exp::TrainLog log;
  const auto m = exp::train_estimator(scenes, tp, c.estimator, t, &log);
  model::save_estimator(checkpoint.string(), m);
  write_log_csv(log_path, log);
  return log;
}

void cmd_train_ie(const exp::ExperimentConfig& c) {
  const auto tp = require_predictor(c);
  const auto log = train_ie(c, tp, c.train_ie.alpha, c.ie_path(), fs::path(c.out_dir) / "ie_log.csv");
  const auto& e = log.epochs.back();
  std::cout << fmt::format("estimator: score mean {:.4f} std {:.4f} keep {:.3f}, saved {}\n", e.score_mean,
                           e.score_std, e.keep_rate, c.ie_path().string());
}

void cmd_eval(const exp::ExperimentConfig& c) {
  const auto tp = require_predictor(c);
  const auto ie = require_estimator(c);
  const auto r = exp::evaluate(exp::load_data(c, exp::DataRole::Eval), tp, ie, c.gumbel);
  const fs::path dir(c.out_dir);
  {
    auto out = open_output(dir / "eval.csv");
    exp::write_metrics_csv(out, r, false);
  }
  {
    auto out = open_output(dir / "eval_baseline.csv");
    exp::write_metrics_csv(out, r, true);
  }
  {
    auto out = open_output(dir / "eval_summary.csv");
    exp::write_eval_summary(out, r);
  }
  {
    auto out = open_output(dir / "score_histogram.csv");
    out << "bin_low,bin_high,count\n";
    for (std::size_t b = 0; b < r.score_histogram.size(); ++b)
      out << fmt::format("{:.1f},{:.1f},{}\n", 0.1 * b, 0.1 * (b + 1), r.score_histogram[b]);
  }
  std::cout << fmt::format("TP ADE {:.4f} FDE {:.4f} | TP+IE ADE {:.4f} FDE {:.4f} keep {:.3f} flops {:.3f}\n",
                           r.baseline_ade, r.baseline_fde, r.ade, r.fde, r.keep_rate, r.flops_ratio);
}

void cmd_flops_sweep(const exp::ExperimentConfig& c) {
  const auto tp = require_predictor(c);
  const auto ie = require_estimator(c);
  const auto r = exp::evaluate(exp::load_data(c, exp::DataRole::Eval), tp, ie, c.gumbel);
  std::map<std::size_t, double> rates;
  for (const auto& [n, ks] : r.keep_by_n) rates[n] = ks.keep_rate;
  const auto sweep = exp::flops_sweep(c.predictor, c.estimator, c.sweep_min, c.sweep_max, rates, r.keep_rate);
  auto out = open_output(fs::path(c.out_dir) / "flops_sweep.csv");
  exp::write_sweep_csv(out, sweep);
  if (sweep.crossover) {
    std::cout << "crossover: pruned pipeline is cheaper from N = " << *sweep.crossover << '\n';
  } else {
    std::cout << "crossover: none in range\n";
  }
}

void cmd_oracle(const exp::ExperimentConfig& c) {
  const auto tp = require_predictor(c);
  const auto r = exp::oracle_eval(exp::load_data(c, exp::DataRole::Eval), tp);
  const fs::path dir(c.out_dir);
  {
    auto out = open_output(dir / "oracle.csv");
    exp::write_oracle_csv(out, r);
  }
  auto out = open_output(dir / "oracle_summary.csv");
  exp::write_oracle_summary(out, r);
  std::cout << fmt::format("baseline ADE {:.4f} FDE {:.4f} | oracle ADE {:.4f} FDE {:.4f} ({} of {} scenes improved)\n",
                           r.baseline_ade, r.baseline_fde, r.oracle_ade, r.oracle_fde, r.improved_scenes,
                           r.rows.size());
}

void cmd_ablate_vl(const exp::ExperimentConfig& c) {
  const auto tp = require_predictor(c);
  const auto eval_scenes = exp::load_data(c, exp::DataRole::Eval);
  const fs::path dir(c.out_dir);
  auto out = open_output(dir / "ablation.csv");
  out << "alpha,first_trajectory_loss,train_score_std,train_keep_rate,eval_score_mean,eval_score_std,eval_keep_rate,"
         "ade,fde,baseline_ade,flops_ratio\n";
  const double with_vl = c.train_ie.alpha > 0.0 ? c.train_ie.alpha : 1.0;
  for (double alpha : {0.0, with_vl}) {
    const std::string tag = fmt::format("alpha{}", alpha);
    const auto log = train_ie(c, tp, alpha, dir / ("ie_" + tag + ".ckpt"), dir / ("ie_" + tag + "_log.csv"));
    const auto ie = model::load_estimator((dir / ("ie_" + tag + ".ckpt")).string());
    const auto r = exp::evaluate(eval_scenes, tp, ie, c.gumbel);
    const auto& e = log.epochs.back();
    out << fmt::format("{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", alpha,
                       log.first_trajectory_loss, e.score_std, e.keep_rate, r.score_mean, r.score_std, r.keep_rate,
                       r.ade, r.fde, r.baseline_ade, r.flops_ratio);
    std::cout << fmt::format("alpha {}: score std {:.4f}, keep rate {:.3f}, ADE {:.4f} (TP {:.4f})\n", alpha,
                             r.score_std, r.keep_rate, r.ade, r.baseline_ade);
  }
}

void cmd_dump_scores(const exp::ExperimentConfig& c) {
  const auto tp = require_predictor(c);
  const auto ie = require_estimator(c);
  auto out = open_output(fs::path(c.out_dir) / "scores.txt");
  exp::write_scores(out, exp::load_data(c, exp::DataRole::Eval), tp, ie);
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::string flat = message;
  for (char& ch : flat)
    if (ch == '\n') ch = ' ';
  std::cerr << "error: " << kind << ": " << flat << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Importance-based neighbor selection for trajectory prediction"};
  app.require_subcommand(1);
  CommonOptions opt;

  using Handler = void (*)(const exp::ExperimentConfig&);
  const std::pair<const char*, std::pair<const char*, Handler>> commands[] = {
      {"gen-data", {"Generate synthetic train/eval scene files", cmd_gen_data}},
      {"train-tp", {"Train the trajectory predictor", cmd_train_tp}},
      {"train-ie", {"Train the importance estimator against a frozen predictor", cmd_train_ie}},
      {"eval", {"Compare the predictor alone with thresholded selection", cmd_eval}},
      {"flops-sweep", {"FLOPs ratio by number of people using measured keep rates", cmd_flops_sweep}},
      {"oracle", {"Best single-neighbor removal per scene", cmd_oracle}},
      {"ablate-vl", {"Train the estimator with and without the variance loss", cmd_ablate_vl}},
      {"dump-scores", {"Write per-neighbor scores for the eval scenes", cmd_dump_scores}},
  };
  Handler selected = nullptr;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", opt.config, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Base seed");
    sub->add_option("--threshold", opt.threshold, "Score threshold for keeping a neighbor");
    sub->add_option("--alpha", opt.alpha, "Variance-loss weight");
    sub->add_option("--out", opt.out, "Output directory");
    sub->add_flag("-v,--verbose", opt.verbose, "Debug logging");
    const Handler h = entry.second;
    sub->callback([&selected, h] { selected = h; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  auto logger = spdlog::stderr_color_mt("trajsel");
  spdlog::set_default_logger(logger);
  spdlog::set_level(opt.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    const auto config = resolve(opt);
    save_config(config);
    selected(config);
  } catch (const data::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const data::ParseError& e) {
    return fail("parse", e.what(), 3);
  } catch (const data::EmptyInputError& e) {
    return fail("empty-input", e.what(), 3);
  } catch (const model::CheckpointError& e) {
    return fail("checkpoint", e.what(), 4);
  } catch (const exp::TrainingDivergence& e) {
    return fail("divergence", e.what(), 5);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
