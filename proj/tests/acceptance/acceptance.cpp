// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "primitive_cases.hpp"
#include "trajsel/autodiff/grad_check.hpp"
#include "trajsel/data/synthetic.hpp"
#include "trajsel/exp/config.hpp"
#include "trajsel/exp/evaluation.hpp"
#include "trajsel/exp/training.hpp"
#include "trajsel/loss/losses.hpp"
#include "trajsel/model/flops.hpp"
#include "trajsel/select/selection.hpp"

using namespace trajsel;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

int failures = 0;
std::ofstream results_file;

void emit(const std::string& line) {
  std::cout << line << std::endl;
  if (results_file) results_file << line << '\n';
}

void report(int id, const std::string& title, const Outcome& o, double secs, double limit_secs) {
  Outcome out = o;
  out.require(secs < limit_secs, fmt::format("runtime {:.1f}s over limit {:.0f}s", secs, limit_secs));
  if (!out.passed) ++failures;
  emit(fmt::format("C{} {} | {} | {:.1f}s | {}", id, out.passed ? "PASS" : "FAIL", title, secs, out.detail));
}

// Gradient correctness of every differentiable primitive and both losses.
void criterion_gradients() {
  const auto start = Clock::now();
  Outcome o;
  const auto cases = ad::testing::primitive_cases();
  double worst = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto r = ad::grad_check(ad::testing::case_leaves(cases[i], 1000 + i), cases[i].builder, 1e-4, 1e-5);
    worst = std::max(worst, r.worst());
    o.require(r.passed, std::string(cases[i].name) + " " + r.summary());
  }

  Rng rng(5);
  const std::vector<Tensor> ln = {ad::testing::random_tensor({4, 6}, rng), ad::testing::random_tensor({6}, rng),
                                  ad::testing::random_tensor({6}, rng)};
  const auto ln_report = ad::grad_check(ln, [](ad::Graph& g, std::span<const ad::Var> v) {
    return ad::testing::weighted_sum(g, ad::layer_norm(v[0], v[1], v[2]), 99);
  }, 1e-3, 1e-5);
  o.require(ln_report.passed, "layer_norm " + ln_report.summary());

  const Tensor pred = ad::testing::random_tensor({12, 2}, rng), truth = ad::testing::random_tensor({12, 2}, rng);
  const auto traj = ad::grad_check({pred}, [&](ad::Graph& g, std::span<const ad::Var> v) {
    return loss::trajectory_loss(v[0], g.constant(truth));
  }, 1e-4, 1e-5);
  o.require(traj.passed, "trajectory loss " + traj.summary());
  const Tensor scores({6}, std::vector<double>{0.12, 0.3, 0.47, 0.55, 0.81, 0.93});
  const auto var = ad::grad_check({scores}, [](ad::Graph&, std::span<const ad::Var> v) {
    return *loss::variance_loss(v[0]);
  }, 1e-4, 1e-5);
  o.require(var.passed, "variance loss " + var.summary());
  worst = std::max({worst, traj.worst(), var.worst()});

  if (o.passed) {
    o.detail = fmt::format("{} primitives + layer_norm + 2 losses, worst rel err {:.2e} (layer_norm {:.2e})",
                           cases.size(), worst, ln_report.worst());
  }
  report(1, "gradient correctness", o, seconds_since(start), 60);
}

// Empirical keep frequency of the straight-through sampler.
void criterion_straight_through() {
  const auto start = Clock::now();
  Outcome o;
  constexpr std::size_t kDraws = 100000;
  double worst_z = 0.0;
  std::uint64_t stream = 0;
  for (double s : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    for (double tau : {0.1, 1.0, 5.0}) {
      Rng rng(derive_seed(2024, ++stream));
      const double scores[] = {s};
      std::size_t kept = 0;
      for (std::size_t i = 0; i < kDraws; ++i) kept += select::gumbel_sample(scores, tau, rng).hard[1];
      const double freq = static_cast<double>(kept) / kDraws;
      const double sigma = std::sqrt(s * (1.0 - s) / kDraws);
      worst_z = std::max(worst_z, std::abs(freq - s) / sigma);
      o.require(std::abs(freq - s) <= 3.0 * sigma, fmt::format("s={} tau={} freq={:.5f}", s, tau, freq));
    }
  }
  if (o.passed) o.detail = fmt::format("15 cells x 1e5 draws, worst deviation {:.2f} sigma (limit 3)", worst_z);
  report(2, "straight-through fidelity", o, seconds_since(start), 10);
}

struct Trained {
  exp::ExperimentConfig config;
  model::PredictorModel predictor;
  model::EstimatorModel collapsed;  // alpha = 0
  model::EstimatorModel estimator;  // alpha = 1
  exp::TrainLog collapsed_log, estimator_log;
  std::vector<data::Scene> eval;
  exp::EvalReport collapsed_report, report;
  double predictor_secs = 0.0, collapsed_secs = 0.0, estimator_secs = 0.0, eval_secs = 0.0;
};

// Masked prediction equals prediction on the reduced input; threshold 0 is the baseline.
void criterion_omission(const Trained& t) {
  const auto start = Clock::now();
  Outcome o;
  data::SyntheticConfig sc;
  sc.scene_count = 100;
  sc.min_people = 2;
  sc.max_people = 24;
  const auto scenes = data::generate_synthetic(sc, 77);
  Rng rng(78);
  double worst = 0.0;
  for (const auto& scene : scenes) {
    const auto ps = exp::prepare_scene(scene, t.predictor.config);
    const Tensor features = model::extract_individual_features(ps.normalized, t.predictor);
    std::vector<std::uint8_t> mask(scene.size(), 1);
    for (std::size_t j = 1; j < mask.size(); ++j) mask[j] = rng.uniform() < 0.5;
    const Tensor masked = model::predict(features, mask, t.predictor);
    const Tensor reduced = model::select_rows(features, mask);
    const std::vector<std::uint8_t> all(reduced.rows(), 1);
    const Tensor omitted = model::predict(reduced, all, t.predictor);
    for (std::size_t i = 0; i < masked.size(); ++i) worst = std::max(worst, std::abs(masked[i] - omitted[i]));
  }
  o.require(worst <= 1e-10, fmt::format("max |masked - omitted| = {:.3e}", worst));

  select::GumbelConfig zero = t.config.gumbel;
  zero.threshold = 0.0;
  const auto r = exp::evaluate(t.eval, t.predictor, t.estimator, zero);
  bool identical = r.ade == r.baseline_ade && r.fde == r.baseline_fde && r.keep_rate == 1.0;
  for (const auto& row : r.rows) identical = identical && row.ade == row.baseline_ade && row.fde == row.baseline_fde;
  o.require(identical, fmt::format("threshold 0: ADE {:.6f} vs baseline {:.6f}", r.ade, r.baseline_ade));
  if (o.passed) {
    o.detail = fmt::format("100 scenes, max diff {:.1e}; threshold 0 ADE {:.6f} == baseline {:.6f}", worst, r.ade,
                           r.baseline_ade);
  }
  report(3, "omission equivalence", o, seconds_since(start), 600);
}

Trained train_all(const fs::path& config_path) {
  Trained t{exp::load_experiment_config(config_path), {}, {}, {}, {}, {}, {}, {}, {}};
  auto& c = t.config;
  const auto train = exp::load_data(c, exp::DataRole::Train);
  t.eval = exp::load_data(c, exp::DataRole::Eval);

  auto start = Clock::now();
  t.predictor = exp::train_predictor(train, c.predictor, c.train_tp);
  t.predictor_secs = seconds_since(start);

  const auto ie_train = exp::load_data(c, exp::DataRole::EstimatorTrain);
  exp::TrainConfig ie = c.train_ie;
  ie.alpha = 0.0;
  start = Clock::now();
  t.collapsed = exp::train_estimator(ie_train, t.predictor, c.estimator, ie, &t.collapsed_log);
  t.collapsed_secs = seconds_since(start);
  ie.alpha = 1.0;
  start = Clock::now();
  t.estimator = exp::train_estimator(ie_train, t.predictor, c.estimator, ie, &t.estimator_log);
  t.estimator_secs = seconds_since(start);

  start = Clock::now();
  t.report = exp::evaluate(t.eval, t.predictor, t.estimator, c.gumbel);
  t.eval_secs = seconds_since(start);
  t.collapsed_report = exp::evaluate(t.eval, t.predictor, t.collapsed, c.gumbel);
  return t;
}

// Without the variance loss the scores collapse; with it they spread and prune.
void criterion_anti_collapse(const Trained& t) {
  Outcome o;
  const auto& z = t.collapsed_report;
  const auto& v = t.report;
  o.require(z.score_std < 0.05, fmt::format("alpha 0 score std {:.4f} >= 0.05", z.score_std));
  o.require(z.keep_rate > 0.95, fmt::format("alpha 0 keep {:.3f} <= 0.95", z.keep_rate));
  o.require(v.score_std > 0.1, fmt::format("alpha 1 score std {:.4f} <= 0.1", v.score_std));
  o.require(v.keep_rate < 0.8, fmt::format("alpha 1 keep {:.3f} >= 0.8", v.keep_rate));
  const auto& ez = t.collapsed_log.epochs.back();
  const auto& ev = t.estimator_log.epochs.back();
  o.detail += (o.detail.empty() ? "" : " | ") +
              fmt::format("alpha 0: std {:.4f} keep {:.3f}; alpha 1: std {:.4f} keep {:.3f} "
                          "(last epoch sampled: {:.4f}/{:.3f} and {:.4f}/{:.3f})",
                          z.score_std, z.keep_rate, v.score_std, v.keep_rate, ez.score_std, ez.keep_rate,
                          ev.score_std, ev.keep_rate);
  report(4, "variance-loss anti-collapse", o,
         t.predictor_secs + t.collapsed_secs + t.estimator_secs + t.eval_secs, 15 * 60);
}

// Accuracy close to the predictor alone while keeping at most 60% of neighbors.
void criterion_tradeoff(const Trained& t) {
  Outcome o;
  const auto& r = t.report;
  const double rel = (r.ade - r.baseline_ade) / r.baseline_ade;
  o.require(std::abs(rel) <= 0.05, fmt::format("ADE relative change {:+.2f}%", 100 * rel));
  o.require(r.keep_rate <= 0.6, fmt::format("keep rate {:.3f} > 0.6", r.keep_rate));
  o.detail += (o.detail.empty() ? "" : " | ") +
              fmt::format("TP ADE {:.4f}, TP+IE ADE {:.4f} ({:+.2f}%), keep {:.3f}, FLOPs ratio {:.3f}, {} scenes",
                          r.baseline_ade, r.ade, 100 * rel, r.keep_rate, r.flops_ratio, r.rows.size());
  report(5, "efficiency-accuracy trade-off", o, t.predictor_secs + t.estimator_secs + t.eval_secs, 30 * 60);
}

std::uint64_t instrumented_predictor_flops(const model::PredictorModel& m, const Tensor& inputs, Tensor* features) {
  ad::Graph g;
  model::Binding p(g, m.params, false);
  ad::FlopTally tally;
  ad::Var f = model::extract_individual_features(p, g.constant(inputs), m.config);
  model::predict(p, f, {}, m.config);
  *features = f.value();
  return tally.count();
}

std::uint64_t instrumented_estimator_flops(const model::EstimatorModel& m, const Tensor& features) {
  ad::Graph g;
  model::Binding p(g, m.params, false);
  ad::FlopTally tally;
  model::estimate_scores(p, g.constant(features), m.config);
  return tally.count();
}

// Sweep shape and agreement of the analytic count with an instrumented forward pass.
void criterion_flops(const Trained& t) {
  const auto start = Clock::now();
  Outcome o;
  const auto& pc = t.config.predictor;
  const auto& ec = t.config.estimator;
  for (std::size_t n = 1; n <= 40; ++n) {
    const auto full = model::pipeline_flops(pc, ec, n, n, true);
    o.require(full.ratio >= 1.0, fmt::format("keep-all ratio {:.4f} < 1 at N={}", full.ratio, n));
    for (std::size_t k = 2; k <= n; ++k) {
      o.require(model::pipeline_flops(pc, ec, n, k - 1, true).total < model::pipeline_flops(pc, ec, n, k, true).total,
                fmt::format("not strictly decreasing at N={} k={}", n, k));
    }
  }
  std::map<std::size_t, double> rates;
  for (const auto& [n, ks] : t.report.keep_by_n) rates[n] = ks.keep_rate;
  const auto sweep = exp::flops_sweep(pc, ec, t.config.sweep_min, t.config.sweep_max, rates, t.report.keep_rate);
  o.require(sweep.crossover.has_value(), "no crossover in the sweep range");
  double ratio_at_max = 1.0;
  if (sweep.crossover) {
    for (const auto& row : sweep.rows) {
      if (row.n_people >= *sweep.crossover)
        o.require(row.pruned_ratio < 1.0, fmt::format("ratio {:.4f} at N={}", row.pruned_ratio, row.n_people));
      ratio_at_max = row.pruned_ratio;
    }
  }

  struct Small {
    std::size_t d, heads, layers, n;
    bool full;
  };
  double worst = 0.0;
  for (const Small& s : {Small{8, 2, 1, 3, false}, Small{16, 4, 2, 6, true}, Small{12, 3, 1, 9, false}}) {
    model::PredictorConfig p;
    p.d_model = s.d;
    p.n_heads = s.heads;
    p.d_ff = 2 * s.d;
    p.n_temporal_layers = p.n_social_layers = s.layers;
    model::EstimatorConfig e;
    e.feature_width = e.d_embed = s.d;
    e.n_heads = s.heads;
    e.d_ff = 2 * s.d;
    e.n_layers = s.layers;
    e.full_self_attention = s.full;
    data::SyntheticConfig sc;
    sc.scene_count = 1;
    sc.min_people = sc.max_people = s.n;
    const auto scene = data::generate_synthetic(sc, s.n)[0];
    const auto pm = model::PredictorModel::initialize(p, 1);
    const auto em = model::EstimatorModel::initialize(e, 2);
    const auto ps = exp::prepare_scene(scene, p);
    Tensor features;
    const auto mp = instrumented_predictor_flops(pm, ps.inputs, &features);
    const auto me = instrumented_estimator_flops(em, features);
    const auto ap = model::predictor_flops(p, s.n).total;
    const auto ae = model::estimator_flops(e, s.n);
    const double rp = std::abs(double(ap) - double(mp)) / double(mp);
    const double re = std::abs(double(ae) - double(me)) / double(me);
    worst = std::max({worst, rp, re});
    o.require(rp <= 0.02 && re <= 0.02,
              fmt::format("d={} N={}: predictor {} vs {}, estimator {} vs {}", s.d, s.n, ap, mp, ae, me));
  }
  if (o.passed) {
    o.detail = fmt::format("keep-all ratio >= 1 for N in [1,40], crossover at N={}, ratio {:.3f} at N={}, "
                           "analytic vs instrumented worst {:.2f}%",
                           *sweep.crossover, ratio_at_max, t.config.sweep_max, 100 * worst);
  }
  report(6, "FLOPs crossover", o, seconds_since(start), 600);
}

// Best single removal per scene never loses to the baseline and wins with distractors.
void criterion_oracle(const Trained& t) {
  const auto start = Clock::now();
  Outcome o;
  const auto r = exp::oracle_eval(t.eval, t.predictor);
  o.require(r.oracle_ade <= r.baseline_ade, "oracle ADE above baseline");
  for (const auto& row : r.rows)
    o.require(row.oracle_ade <= row.baseline_ade, "scene " + row.scene_id + " oracle above baseline");
  if (r.improved_scenes == 0) {
    o.require(r.oracle_ade == r.baseline_ade, "no scene improved but aggregates differ");
  }
  o.require(r.oracle_ade < r.baseline_ade, "oracle not strictly better on the distractor set");
  o.detail += (o.detail.empty() ? "" : " | ") +
              fmt::format("baseline ADE {:.4f}, oracle ADE {:.4f}, {} of {} scenes improved", r.baseline_ade,
                          r.oracle_ade, r.improved_scenes, r.rows.size());
  report(7, "oracle dominance", o, seconds_since(start), 5 * 60);
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(entry.path(), dir).string()] = ss.str();
  }
  return files;
}

bool run_commands(const fs::path& out, std::string* failed) {
  for (const char* cmd : {"gen-data", "train-tp", "train-ie", "eval", "flops-sweep", "oracle", "ablate-vl",
                          "dump-scores"}) {
    const std::string line = fmt::format("\"{}\" {} --config \"{}\" --out \"{}\" > /dev/null 2>&1", TRAJSEL_CLI,
                                         cmd, TRAJSEL_SMOKE_CONFIG, out.string());
    if (std::system(line.c_str()) != 0) {
      *failed = cmd;
      return false;
    }
  }
  return true;
}

// Every CLI command rerun with the same config and seed writes identical bytes.
void criterion_determinism() {
  const auto start = Clock::now();
  Outcome o;
  const fs::path out = fs::temp_directory_path() / "trajsel_acceptance_determinism";
  fs::remove_all(out);
  std::string failed;
  std::map<std::string, std::string> first;
  if (!run_commands(out, &failed)) {
    o.require(false, "first run failed at " + failed);
  } else {
    first = snapshot(out);
    fs::remove_all(out);
    if (!run_commands(out, &failed)) o.require(false, "second run failed at " + failed);
  }
  if (o.passed) {
    const auto second = snapshot(out);
    o.require(first.size() == second.size(), "different file sets");
    std::size_t csv = 0, ckpt = 0;
    for (const auto& [name, bytes] : first) {
      const auto it = second.find(name);
      o.require(it != second.end() && it->second == bytes, name + " differs");
      csv += name.ends_with(".csv");
      ckpt += name.ends_with(".ckpt");
    }
    o.require(csv > 0 && ckpt > 0, "no CSV or checkpoint output");
    if (o.passed) {
      o.detail = fmt::format("8 commands twice, {} files identical ({} CSV, {} checkpoints)", first.size(), csv, ckpt);
    }
  }
  fs::remove_all(out);
  report(8, "determinism", o, seconds_since(start), 600);
}

}  // namespace

int main() {
  // Also kept next to the binary's working directory, since ctest hides output of passing tests.
  results_file.open("acceptance_results.txt");
  try {
    criterion_gradients();
    criterion_straight_through();
    std::cout << "training on " << TRAJSEL_BENCHMARK_CONFIG << " ..." << std::endl;
    const Trained t = train_all(TRAJSEL_BENCHMARK_CONFIG);
    emit(fmt::format("trained predictor {:.0f}s, estimator alpha 0 {:.0f}s, alpha 1 {:.0f}s, eval {:.0f}s",
                     t.predictor_secs, t.collapsed_secs, t.estimator_secs, t.eval_secs));
    criterion_omission(t);
    criterion_anti_collapse(t);
    criterion_tradeoff(t);
    criterion_flops(t);
    criterion_oracle(t);
    criterion_determinism();
  } catch (const std::exception& e) {
    emit(std::string("acceptance aborted: ") + e.what());
    return 2;
  }
  emit(failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures));
  return failures == 0 ? 0 : 1;
}
