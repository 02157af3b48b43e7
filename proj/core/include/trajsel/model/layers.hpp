#pragma once

#include <string>

#include "trajsel/autodiff/ops.hpp"
#include "trajsel/model/params.hpp"

namespace trajsel::model {

/// x * W + b for x of shape (rows, in).
ad::Var linear(Binding& p, const std::string& prefix, ad::Var x);

ad::Var layer_norm(Binding& p, const std::string& prefix, ad::Var x);

void init_encoder_layer(ParameterStore& store, const std::string& prefix, std::size_t width,
                        std::size_t ff_width, Rng& rng);

/// Pre-norm transformer layer over `x` (S*seq_len, width): rows are grouped
/// into S independent sequences that only attend within themselves.
/// `key_gate`, when valid, gates the keys of a single sequence (S == 1).
ad::Var encoder_layer(Binding& p, const std::string& prefix, ad::Var x, std::size_t seq_len,
                      std::size_t heads, ad::Var key_gate = {});

}  // namespace trajsel::model
