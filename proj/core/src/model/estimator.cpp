#include "trajsel/model/estimator.hpp"

#include <cmath>
#include <string>

#include "trajsel/model/layers.hpp"

namespace trajsel::model {

void EstimatorConfig::validate() const {
  if (feature_width == 0 || d_embed == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0) {
    throw ContractError("estimator config: all widths and counts must be >= 1");
  }
  if (d_embed % n_heads != 0) throw ContractError("estimator config: d_embed not divisible by n_heads");
}

EstimatorModel EstimatorModel::initialize(const EstimatorConfig& config, std::uint64_t seed) {
  config.validate();
  EstimatorModel m{config, {}};
  Rng rng(derive_seed(seed, 0x657374ull));
  auto& s = m.params;
  init_linear(s, "input", config.feature_width, config.d_embed, rng);
  for (std::size_t l = 0; l < config.n_layers; ++l)
    init_encoder_layer(s, "block" + std::to_string(l), config.d_embed, config.d_ff, rng);
  init_layer_norm(s, "ln_f", config.d_embed);
  init_linear(s, "head.hidden", config.d_embed, config.d_embed, rng);
  init_linear(s, "head.out", config.d_embed, 1, rng);
  s.get("head.out.bias").fill(config.score_bias_init);
  return m;
}

namespace {

ad::Var feed_forward(Binding& p, const std::string& prefix, ad::Var x) {
  ad::Var h = layer_norm(p, prefix + ".ln2", x);
  return ad::add(x, linear(p, prefix + ".ff2", ad::relu(linear(p, prefix + ".ff1", h))));
}

// One layer where the primary is the only query. Each neighbor row is updated
// with its own share of the primary's attention output, so rows stay
// independent of neighbor order. The primary row is updated only when
// another layer follows.
void primary_query_layer(Binding& p, const std::string& prefix, ad::Var& primary, ad::Var& neighbors,
                         std::size_t heads, bool update_primary) {
  const std::size_t m = neighbors.value().rows();
  const std::size_t width = neighbors.value().cols();
  const std::size_t head_dim = width / heads;

  ad::Var hp = layer_norm(p, prefix + ".ln1", primary);
  ad::Var hn = layer_norm(p, prefix + ".ln1", neighbors);
  ad::Var q = ad::split_heads(linear(p, prefix + ".attn.q", hp), 1, heads);
  ad::Var k = ad::split_heads(linear(p, prefix + ".attn.k", hn), m, heads);
  ad::Var v = ad::split_heads(linear(p, prefix + ".attn.v", hn), m, heads);
  ad::Var scores = ad::scale(ad::matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  ad::Var weights = ad::reshape(ad::row_softmax(scores), {heads, m, 1});
  ad::Var shares = ad::merge_heads(ad::mul(v, weights), heads);  // (m, width)

  if (update_primary) {
    ad::Var pooled = ad::scale(ad::mean_pool(shares, m), static_cast<double>(m));
    primary = feed_forward(p, prefix, ad::add(primary, linear(p, prefix + ".attn.out", pooled)));
  }
  neighbors = feed_forward(p, prefix, ad::add(neighbors, linear(p, prefix + ".attn.out", shares)));
}

}  // namespace

ad::Var estimate_scores(Binding& p, ad::Var features, const EstimatorConfig& config) {
  const Tensor& f = features.value();
  if (f.rank() != 2 || f.cols() != config.feature_width) {
    throw ContractError("estimate_scores: features " + shape_to_string(f.shape()) + " do not have width " +
                        std::to_string(config.feature_width));
  }
  const std::size_t n = f.rows();
  if (n == 1) return {};
  const std::size_t m = n - 1;

  ad::Var x = linear(p, "input", features);
  ad::Var neighbors;
  if (config.full_self_attention) {
    for (std::size_t l = 0; l < config.n_layers; ++l)
      x = encoder_layer(p, "block" + std::to_string(l), x, n, config.n_heads);
    neighbors = ad::slice_rows(x, 1, m);
  } else {
    ad::Var primary = ad::slice_rows(x, 0, 1);
    neighbors = ad::slice_rows(x, 1, m);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
      primary_query_layer(p, "block" + std::to_string(l), primary, neighbors, config.n_heads,
                          l + 1 < config.n_layers);
    }
  }
  ad::Var h = layer_norm(p, "ln_f", neighbors);
  h = ad::relu(linear(p, "head.hidden", h));
  return ad::reshape(ad::sigmoid(linear(p, "head.out", h)), {m});
}

std::vector<double> estimate_scores(const Tensor& features, const EstimatorModel& model) {
  ad::Graph g;
  Binding p(g, model.params, false);
  ad::Var s = estimate_scores(p, g.constant(features), model.config);
  if (!s.valid()) return {};
  const auto d = s.value().data();
  return {d.begin(), d.end()};
}

}  // namespace trajsel::model
