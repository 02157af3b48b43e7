#include "trajsel/exp/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "trajsel/exp/training.hpp"
#include "trajsel/loss/losses.hpp"
#include "trajsel/model/flops.hpp"

namespace trajsel::exp {

namespace {

Tensor to_original(const Tensor& normalized, const data::SceneTransform& tf) {
  Tensor out = normalized;
  for (std::size_t t = 0; t < out.rows(); ++t) {
    const data::Point p = tf.to_original({normalized.at(t, 0), normalized.at(t, 1)});
    out.at(t, 0) = p.x;
    out.at(t, 1) = p.y;
  }
  return out;
}

Tensor predict_rows(const Tensor& features, const std::vector<std::uint8_t>& keep,
                    const model::PredictorModel& predictor) {
  Tensor kept = model::select_rows(features, keep);
  std::vector<std::uint8_t> all(kept.rows(), 1);
  return model::predict(kept, all, predictor);
}

std::string real(double v) { return fmt::format("{:.6f}", v); }

template <class Row>
void sort_by_id(std::vector<Row>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.scene_id < b.scene_id; });
}

}  // namespace

Tensor predict_kept(const data::Scene& scene, const model::PredictorModel& predictor,
                    const std::vector<std::uint8_t>& keep) {
  if (keep.size() != scene.size() || keep.empty() || !keep[0]) {
    throw ContractError("predict_kept: keep must cover every person and keep the primary");
  }
  PreparedScene ps = prepare_scene(data::select_tracks(scene, keep), predictor.config);
  Tensor features = model::extract_individual_features(ps.normalized, predictor);
  std::vector<std::uint8_t> all(features.rows(), 1);
  return to_original(model::predict(features, all, predictor), ps.transform);
}

EvalReport evaluate(const std::vector<data::Scene>& scenes, const model::PredictorModel& predictor,
                    const model::EstimatorModel& estimator, const select::GumbelConfig& selection) {
  if (scenes.empty()) throw data::EmptyInputError("evaluate: no scenes");
  selection.validate();
  EvalReport r;
  r.flops_ratio = 0.0;
  r.keep_rate = 0.0;
  std::size_t with_neighbors = 0, with_pairs = 0;
  double step_base_ade = 0.0, step_ade = 0.0;
  std::size_t steps = 0;
  for (const auto& scene : scenes) {
    PreparedScene ps = prepare_scene(scene, predictor.config);
    const Tensor truth = model::primary_future(scene, predictor.config);
    const Tensor features = model::extract_individual_features(ps.normalized, predictor);
    const std::size_t n = scene.size();

    SceneResult row;
    row.scene_id = scene.scene_id;
    row.n_in = n;
    const Tensor base = to_original(predict_rows(features, std::vector<std::uint8_t>(n, 1), predictor), ps.transform);
    row.scores = model::estimate_scores(features, estimator);
    const select::SelectionMask mask = select::threshold_select(row.scores, selection);
    row.n_kept = mask.kept();
    const Tensor pruned = to_original(predict_rows(features, mask.hard, predictor), ps.transform);

    row.baseline_ade = loss::ade(base, truth);
    row.baseline_fde = loss::fde(base, truth);
    row.ade = loss::ade(pruned, truth);
    row.fde = loss::fde(pruned, truth);
    row.flops_ratio = model::pipeline_flops(predictor.config, estimator.config, n, row.n_kept, true).ratio;

    for (std::size_t t = 0; t < truth.rows(); ++t) {
      step_base_ade += std::hypot(base.at(t, 0) - truth.at(t, 0), base.at(t, 1) - truth.at(t, 1));
      step_ade += std::hypot(pruned.at(t, 0) - truth.at(t, 0), pruned.at(t, 1) - truth.at(t, 1));
    }
    steps += truth.rows();

    if (n > 1) {
      const double rate = static_cast<double>(row.n_kept - 1) / static_cast<double>(n - 1);
      r.keep_rate += rate;
      ++with_neighbors;
      auto& ks = r.keep_by_n[n];
      ks.keep_rate = (ks.keep_rate * static_cast<double>(ks.scenes) + rate) / static_cast<double>(ks.scenes + 1);
      ++ks.scenes;
      double mean = 0.0;
      for (double s : row.scores) {
        mean += s;
        const auto bin = std::min<std::size_t>(9, static_cast<std::size_t>(s * 10.0));
        ++r.score_histogram[bin];
      }
      mean /= static_cast<double>(row.scores.size());
      r.score_mean += mean;
      if (row.scores.size() >= 2) {
        double var = 0.0;
        for (double s : row.scores) var += (s - mean) * (s - mean);
        r.score_std += std::sqrt(var / static_cast<double>(row.scores.size()));
        ++with_pairs;
      }
    }
    r.rows.push_back(std::move(row));
  }
  sort_by_id(r.rows);

  const double count = static_cast<double>(r.rows.size());
  for (const auto& row : r.rows) {
    r.baseline_ade += row.baseline_ade;
    r.baseline_fde += row.baseline_fde;
    r.ade += row.ade;
    r.fde += row.fde;
    r.flops_ratio += row.flops_ratio;
  }
  r.baseline_ade /= count;
  r.baseline_fde /= count;
  r.ade /= count;
  r.fde /= count;
  r.flops_ratio /= count;
  r.pooled_baseline_ade = step_base_ade / static_cast<double>(steps);
  r.pooled_ade = step_ade / static_cast<double>(steps);
  r.pooled_baseline_fde = r.baseline_fde;
  r.pooled_fde = r.fde;
  r.keep_rate = with_neighbors ? r.keep_rate / static_cast<double>(with_neighbors) : 1.0;
  r.score_mean = with_neighbors ? r.score_mean / static_cast<double>(with_neighbors) : 0.0;
  r.score_std = with_pairs ? r.score_std / static_cast<double>(with_pairs) : 0.0;
  return r;
}

OracleReport oracle_eval(const std::vector<data::Scene>& scenes, const model::PredictorModel& predictor) {
  if (scenes.empty()) throw data::EmptyInputError("oracle_eval: no scenes");
  OracleReport r;
  for (const auto& scene : scenes) {
    PreparedScene ps = prepare_scene(scene, predictor.config);
    const Tensor truth = model::primary_future(scene, predictor.config);
    const Tensor features = model::extract_individual_features(ps.normalized, predictor);
    const std::size_t n = scene.size();

    OracleRow row;
    row.scene_id = scene.scene_id;
    row.n_in = n;
    std::vector<std::uint8_t> keep(n, 1);
    const Tensor base = to_original(predict_rows(features, keep, predictor), ps.transform);
    row.baseline_ade = row.oracle_ade = loss::ade(base, truth);
    row.baseline_fde = row.oracle_fde = loss::fde(base, truth);
    for (std::size_t j = 1; j < n; ++j) {
      keep[j] = 0;
      const Tensor pred = to_original(predict_rows(features, keep, predictor), ps.transform);
      keep[j] = 1;
      const double a = loss::ade(pred, truth);
      if (a < row.oracle_ade) {
        row.oracle_ade = a;
        row.oracle_fde = loss::fde(pred, truth);
        row.removed_person_id = scene.tracks[j].person_id;
      }
    }
    r.improved_scenes += row.removed_person_id != 0;
    r.rows.push_back(std::move(row));
  }
  sort_by_id(r.rows);
  for (const auto& row : r.rows) {
    r.baseline_ade += row.baseline_ade;
    r.baseline_fde += row.baseline_fde;
    r.oracle_ade += row.oracle_ade;
    r.oracle_fde += row.oracle_fde;
  }
  const double count = static_cast<double>(r.rows.size());
  r.baseline_ade /= count;
  r.baseline_fde /= count;
  r.oracle_ade /= count;
  r.oracle_fde /= count;
  return r;
}

std::size_t kept_people(std::size_t n_people, double keep_rate) {
  if (n_people == 0) throw ContractError("kept_people: n_people must be >= 1");
  const double neighbors = static_cast<double>(n_people - 1) * std::clamp(keep_rate, 0.0, 1.0);
  return 1 + static_cast<std::size_t>(std::llround(neighbors));
}

SweepReport flops_sweep(const model::PredictorConfig& predictor, const model::EstimatorConfig& estimator,
                        std::size_t n_min, std::size_t n_max, const std::map<std::size_t, double>& keep_rates,
                        double default_keep_rate) {
  if (n_min == 0 || n_max < n_min) throw data::ConfigError("flops_sweep: need 1 <= n_min <= n_max");
  SweepReport r;
  for (std::size_t n = n_min; n <= n_max; ++n) {
    SweepRow row;
    row.n_people = n;
    auto it = keep_rates.find(n);
    row.keep_rate = it != keep_rates.end() ? it->second : default_keep_rate;
    row.n_kept = kept_people(n, row.keep_rate);
    const auto pruned = model::pipeline_flops(predictor, estimator, n, row.n_kept, true);
    row.baseline_flops = model::predictor_flops(predictor, n).total;
    row.pruned_flops = pruned.total;
    row.pruned_ratio = pruned.ratio;
    row.collapsed_ratio = model::pipeline_flops(predictor, estimator, n, n, true).ratio;
    r.rows.push_back(row);
  }
  for (std::size_t i = r.rows.size(); i-- > 0;) {
    if (r.rows[i].pruned_ratio >= 1.0) break;
    r.crossover = r.rows[i].n_people;
  }
  return r;
}

void write_metrics_csv(std::ostream& out, const EvalReport& report, bool baseline) {
  out << "scene_id,ade,fde,n_in,n_kept,flops_ratio\n";
  for (const auto& row : report.rows) {
    if (baseline) {
      out << row.scene_id << ',' << real(row.baseline_ade) << ',' << real(row.baseline_fde) << ',' << row.n_in << ','
          << row.n_in << ',' << real(1.0) << '\n';
    } else {
      out << row.scene_id << ',' << real(row.ade) << ',' << real(row.fde) << ',' << row.n_in << ',' << row.n_kept
          << ',' << real(row.flops_ratio) << '\n';
    }
  }
}

void write_eval_summary(std::ostream& out, const EvalReport& r) {
  out << "model,aggregation,ade,fde,keep_rate,flops_ratio\n";
  out << "tp,per_scene," << real(r.baseline_ade) << ',' << real(r.baseline_fde) << ',' << real(1.0) << ','
      << real(1.0) << '\n';
  out << "tp,pooled_steps," << real(r.pooled_baseline_ade) << ',' << real(r.pooled_baseline_fde) << ','
      << real(1.0) << ',' << real(1.0) << '\n';
  out << "tp+ie,per_scene," << real(r.ade) << ',' << real(r.fde) << ',' << real(r.keep_rate) << ','
      << real(r.flops_ratio) << '\n';
  out << "tp+ie,pooled_steps," << real(r.pooled_ade) << ',' << real(r.pooled_fde) << ',' << real(r.keep_rate)
      << ',' << real(r.flops_ratio) << '\n';
}

void write_oracle_csv(std::ostream& out, const OracleReport& report) {
  out << "scene_id,n_in,baseline_ade,baseline_fde,oracle_ade,oracle_fde,removed_person_id\n";
  for (const auto& row : report.rows) {
    out << row.scene_id << ',' << row.n_in << ',' << real(row.baseline_ade) << ',' << real(row.baseline_fde) << ','
        << real(row.oracle_ade) << ',' << real(row.oracle_fde) << ',' << row.removed_person_id << '\n';
  }
}

void write_oracle_summary(std::ostream& out, const OracleReport& r) {
  out << "method,ade,fde,improved_scenes,scenes\n";
  out << "baseline," << real(r.baseline_ade) << ',' << real(r.baseline_fde) << ",0," << r.rows.size() << '\n';
  out << "oracle," << real(r.oracle_ade) << ',' << real(r.oracle_fde) << ',' << r.improved_scenes << ','
      << r.rows.size() << '\n';
}

void write_sweep_csv(std::ostream& out, const SweepReport& report) {
  out << "n_people,keep_rate,n_kept,baseline_flops,pruned_flops,baseline_ratio,pruned_ratio,collapsed_ratio\n";
  for (const auto& row : report.rows) {
    out << row.n_people << ',' << real(row.keep_rate) << ',' << row.n_kept << ',' << row.baseline_flops << ','
        << row.pruned_flops << ',' << real(row.baseline_ratio) << ',' << real(row.pruned_ratio) << ','
        << real(row.collapsed_ratio) << '\n';
  }
}

void write_scores(std::ostream& out, const std::vector<data::Scene>& scenes, const model::PredictorModel& predictor,
                  const model::EstimatorModel& estimator) {
  std::vector<const data::Scene*> order;
  for (const auto& s : scenes) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->scene_id < b->scene_id; });
  for (const auto* scene : order) {
    PreparedScene ps = prepare_scene(*scene, predictor.config);
    const auto scores =
        model::estimate_scores(model::extract_individual_features(ps.normalized, predictor), estimator);
    for (std::size_t j = 0; j < scores.size(); ++j)
      out << scene->scene_id << ' ' << scene->tracks[j + 1].person_id << ' ' << real(scores[j]) << '\n';
  }
}

}  // namespace trajsel::exp
