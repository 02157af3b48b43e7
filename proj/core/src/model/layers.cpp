#include "trajsel/model/layers.hpp"

#include <cmath>

namespace trajsel::model {

ad::Var linear(Binding& p, const std::string& prefix, ad::Var x) {
  return ad::add(ad::matmul(x, p(prefix + ".weight")), p(prefix + ".bias"));
}

ad::Var layer_norm(Binding& p, const std::string& prefix, ad::Var x) {
  return ad::layer_norm(x, p(prefix + ".gamma"), p(prefix + ".beta"));
}

void init_encoder_layer(ParameterStore& store, const std::string& prefix, std::size_t width,
                        std::size_t ff_width, Rng& rng) {
  init_layer_norm(store, prefix + ".ln1", width);
  init_linear(store, prefix + ".attn.q", width, width, rng);
  init_linear(store, prefix + ".attn.k", width, width, rng);
  init_linear(store, prefix + ".attn.v", width, width, rng);
  init_linear(store, prefix + ".attn.out", width, width, rng);
  init_layer_norm(store, prefix + ".ln2", width);
  init_linear(store, prefix + ".ff1", width, ff_width, rng);
  init_linear(store, prefix + ".ff2", ff_width, width, rng);
}

ad::Var encoder_layer(Binding& p, const std::string& prefix, ad::Var x, std::size_t seq_len,
                      std::size_t heads, ad::Var key_gate) {
  const std::size_t width = x.value().cols();
  const std::size_t head_dim = width / heads;

  ad::Var h = layer_norm(p, prefix + ".ln1", x);
  ad::Var q = ad::split_heads(linear(p, prefix + ".attn.q", h), seq_len, heads);
  ad::Var k = ad::split_heads(linear(p, prefix + ".attn.k", h), seq_len, heads);
  ad::Var v = ad::split_heads(linear(p, prefix + ".attn.v", h), seq_len, heads);
  ad::Var scores = ad::scale(ad::matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  ad::Var weights = key_gate.valid() ? ad::gated_softmax(scores, key_gate) : ad::row_softmax(scores);
  ad::Var attended = ad::merge_heads(ad::matmul(weights, v), heads);
  x = ad::add(x, linear(p, prefix + ".attn.out", attended));

  ad::Var h2 = layer_norm(p, prefix + ".ln2", x);
  ad::Var ff = linear(p, prefix + ".ff2", ad::relu(linear(p, prefix + ".ff1", h2)));
  return ad::add(x, ff);
}

}  // namespace trajsel::model
