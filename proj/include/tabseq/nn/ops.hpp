#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tabseq/nn/tape.hpp"

namespace tabseq::nn {

// Differentiable operations. Shapes follow the leading-dims convention:
// "[..., K]" means any number of leading dimensions flattened into rows.

/// x[..., K] . w[K, O] (+ b[O]) -> [..., O].
Var linear(Tape& t, Var x, Var w, Var b);
Var matmul(Tape& t, Var x, Var w);

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
/// Elementwise product of equally shaped tensors.
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, double c);
/// x[..., *tail] + y[*tail], broadcasting y over the leading dimensions.
Var add_broadcast(Tape& t, Var x, Var y);
/// x[..., H] * w[H] per channel.
Var mul_channels(Tape& t, Var x, Var w);
/// x[R, M, H] + y[R, H] broadcast over the middle dimension.
Var add_broadcast_mid(Tape& t, Var x, Var y);

Var gelu(Tape& t, Var x);
Var relu(Tape& t, Var x);

inline constexpr double kLayerNormEps = 1e-9;
/// Normalizes the last dimension, then applies gain and bias.
Var layer_norm(Tape& t, Var x, Var gain, Var bias);

/// Row-wise softmax over the last dimension (no tape node).
std::vector<double> softmax_rows(std::span<const double> logits, std::size_t cols);

/// Scaled dot-product attention of q, k, v [B, S, H] split into `heads`
/// heads of width H / heads. Adds B * heads * S^2 to `counter`.
Var attention(Tape& t, Var q, Var k, Var v, std::size_t heads, AttentionCounter* counter);

/// Inverted dropout with keep probability 1 - p; identity when the tape is
/// not training or p == 0.
Var dropout(Tape& t, Var x, double p);

/// Mean over dimension 1 of [B, S, H] -> [B, H].
Var mean_dim1(Tape& t, Var x);
/// [B, N, M] -> [B, M, N].
Var transpose12(Tape& t, Var x);
Var reshape(Tape& t, Var x, Shape shape);

/// Rows of table[V, H] selected by ids -> [ids.size(), H].
Var embedding(Tape& t, Var table, std::span<const std::int32_t> ids);
/// Rows of x[R, H] selected by index -> [idx.size(), H].
Var gather_rows(Tape& t, Var x, std::span<const std::size_t> idx);
/// Per row r: active[r] ? values[r] * w[attr[r]] + b[attr[r]] : 0, giving
/// [R, H] from w, b [A, H].
Var value_embed(Tape& t, std::span<const double> values, std::span<const std::size_t> attr,
                std::span<const std::uint8_t> active, Var w, Var b);

/// Sum over rows of -log softmax(logits[r])[target[r]], logits [R, C].
/// Uses log-sum-exp, so +inf never appears for finite logits.
Var cross_entropy_sum(Tape& t, Var logits, std::span<const std::int32_t> targets);
/// Mean cross-entropy over the batch.
Var cross_entropy(Tape& t, Var logits, std::span<const std::int32_t> targets);
/// Sum of squared errors; pred has one element per target.
Var squared_error_sum(Tape& t, Var pred, std::span<const double> targets);
/// Mean squared error.
Var mse(Tape& t, Var pred, std::span<const double> targets);

}  // namespace tabseq::nn
