#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trajsel/autodiff/graph.hpp"

namespace trajsel::ad {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kMaskFill = -1e9;

// Forward flop conventions (tallied by FlopTally, mirrored by the analytic
// cost model): matmul 2nkm, elementwise binary/scale 1 per element,
// row-softmax 3 per element, gated softmax 4 per active element,
// layer-norm 7 per element + 3 per row, sigmoid 4, relu 1, log 1, logit 3,
// sum/mean 1 per element, mean-pool 1 per input + 1 per output element,
// variance 3 per element + 2, cumsum 1 per add. Data movement is free.

/// (n,k)x(k,m) or batched (B,n,k)x(B,k,m). With `transpose_b`, b is (m,k) / (B,m,k).
Var matmul(Var a, Var b, bool transpose_b = false);

/// Elementwise a+b. `b` may also be a scalar, a row vector of length a.cols(),
/// or a column of shape (..., rows, 1) broadcast across the last axis.
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product with the same broadcasting rules as add.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var reshape(Var a, Shape shape);
Var transpose(Var a);

/// Softmax over the last axis, with row-max subtraction.
Var row_softmax(Var a);

/// Softmax over the last axis with a multiplicative column gate g >= 0:
///   y_ij = g_j exp(x_ij) / sum_k g_k exp(x_ik).
/// With a binary gate this equals a masked softmax bit-for-bit, and it is
/// differentiable in the gate.
Var gated_softmax(Var a, Var gate);

/// Normalizes each row over the last axis, then applies gamma/beta (length cols).
Var layer_norm(Var a, Var gamma, Var beta, double eps = kLayerNormEps);

Var sigmoid(Var a);
Var relu(Var a);
/// Natural log; throws DomainError on non-positive input.
Var log(Var a);

Var sum(Var a);
Var mean(Var a);
/// Averages consecutive groups of `group` rows: (S*group, d) -> (S, d).
Var mean_pool(Var a, std::size_t group);
/// Population variance over all elements (scalar).
Var variance(Var a);

/// Writes `fill` where mask != 0. Mask has a.size() entries, or a.cols()
/// entries broadcast over rows.
Var masked_fill(Var a, std::span<const std::uint8_t> mask, double fill = kMaskFill);

/// Forward value `hard`, gradient routed unchanged into `soft`.
Var straight_through(const Tensor& hard, Var soft);

/// log(c / (1 - c)) with c = clamp(x, lo, 1 - lo). Zero gradient where clamped.
Var logit(Var a, double lo = 1e-6);

/// (S*L, H*c) -> (S*H, L, c): rows grouped into S sequences of length L.
Var split_heads(Var a, std::size_t seq_len, std::size_t heads);
/// Inverse of split_heads.
Var merge_heads(Var a, std::size_t heads);

/// Cumulative sum down the rows of a matrix.
Var cumsum_rows(Var a);

}  // namespace trajsel::ad
