#include "trajsel/model/flops.hpp"

#include <string>

namespace trajsel::model {

namespace {

using u64 = std::uint64_t;

u64 dense(u64 n, u64 in, u64 out) { return linear_flops(n, in, out) + n * out; }
u64 norm(u64 tokens, u64 width) { return 7 * tokens * width + 3 * tokens; }

u64 feed_forward(u64 tokens, u64 d, u64 ff) {
  return norm(tokens, d) + dense(tokens, d, ff) + tokens * ff + dense(tokens, ff, d) + tokens * d;
}

// Pre-norm layer over `seqs` sequences of length `len`.
u64 encoder_layer(u64 seqs, u64 len, u64 d, u64 heads, u64 ff) {
  const u64 tokens = seqs * len;
  u64 f = norm(tokens, d) + 4 * dense(tokens, d, d);
  f += 2 * seqs * len * len * d;          // scores
  f += seqs * heads * len * len;          // scaling
  f += 3 * seqs * heads * len * len;      // softmax
  f += 2 * seqs * len * len * d;          // weighted values
  f += tokens * d;                        // residual
  return f + feed_forward(tokens, d, ff);
}

}  // namespace

u64 linear_flops(u64 n, u64 in, u64 out) { return 2 * n * in * out; }

FlopsReport predictor_flops(const PredictorConfig& c, std::size_t n_people) {
  if (n_people == 0) throw ContractError("predictor_flops: n_people must be >= 1");
  const u64 n = n_people, t = c.t_obs, d = c.d_model, tokens = n * t;
  FlopsReport r;
  r.temporal_encoder = dense(tokens, PredictorConfig::kInputWidth, d) + tokens * d;
  for (std::size_t l = 0; l < c.n_temporal_layers; ++l) r.temporal_encoder += encoder_layer(n, t, d, c.n_heads, c.d_ff);
  r.temporal_encoder += norm(tokens, d) + tokens * d + n * d;

  r.social_encoder = n * d;
  for (std::size_t l = 0; l < c.n_social_layers; ++l) r.social_encoder += encoder_layer(1, n, d, c.n_heads, c.d_ff);
  r.social_encoder += norm(n, d);

  const u64 p = c.horizon();
  r.decoder = dense(1, d, d) + d + dense(1, d, 2 * p) + (p - 1) * 2;
  r.total = r.temporal_encoder + r.social_encoder + r.decoder;
  r.n_in = r.n_kept = n_people;
  return r;
}

u64 estimator_flops(const EstimatorConfig& c, std::size_t n_people) {
  if (n_people == 0) throw ContractError("estimator_flops: n_people must be >= 1");
  if (n_people == 1) return 0;
  const u64 n = n_people, m = n - 1, d = c.d_embed, h = c.n_heads, ff = c.d_ff;
  u64 f = dense(n, c.feature_width, d);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    if (c.full_self_attention) {
      f += encoder_layer(1, n, d, h, ff);
      continue;
    }
    f += norm(1, d) + norm(m, d);
    f += dense(1, d, d) + 2 * dense(m, d, d);
    f += 2 * m * d + h * m + 3 * h * m;  // scores, scaling, softmax
    f += m * d;                          // per-neighbor shares
    f += dense(m, d, d) + m * d + feed_forward(m, d, ff);
    if (l + 1 < c.n_layers) f += m * d + d + d + dense(1, d, d) + d + feed_forward(1, d, ff);
  }
  f += norm(m, d) + dense(m, d, d) + m * d + dense(m, d, 1) + 4 * m;
  return f;
}

FlopsReport pipeline_flops(const PredictorConfig& pc, const EstimatorConfig& ec, std::size_t n_in,
                           std::size_t n_kept, bool use_estimator) {
  if (n_kept == 0 || n_kept > n_in) {
    throw ContractError("pipeline_flops: need 1 <= n_kept <= n_in, got n_kept=" + std::to_string(n_kept) +
                        " n_in=" + std::to_string(n_in));
  }
  const FlopsReport baseline = predictor_flops(pc, n_in);
  FlopsReport r = use_estimator ? predictor_flops(pc, n_kept) : baseline;
  r.estimator = use_estimator ? estimator_flops(ec, n_in) : 0;
  r.total = r.temporal_encoder + r.social_encoder + r.decoder + r.estimator;
  r.n_in = n_in;
  r.n_kept = use_estimator ? n_kept : n_in;
  r.ratio = static_cast<double>(r.total) / static_cast<double>(baseline.total);
  return r;
}

}  // namespace trajsel::model
