#pragma once

#include <string>

#include "tabseq/nn/ops.hpp"
#include "tabseq/rng.hpp"

namespace tabseq::nn {

// Layers store parameter indices into a ParamSet, so a model can be copied
// along with its ParamSet without dangling references.

struct Linear {
  std::size_t w = 0, b = 0;
  std::size_t in = 0, out = 0;
  /// Glorot-uniform weights, zero bias.
  static Linear make(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Var operator()(Tape& t, ParamSet& ps, Var x) const;
};

struct LayerNorm {
  std::size_t gain = 0, bias = 0;
  static LayerNorm make(ParamSet& ps, const std::string& name, std::size_t h);
  Var operator()(Tape& t, ParamSet& ps, Var x) const;
};

/// Self-attention block: LN(x + Wo . attn(x Wq + bq, x Wk, x Wv + bv) + bo).
/// The key projection has no bias because softmax ignores it.
struct MultiHeadAttention {
  std::size_t wq = 0, bq = 0, wk = 0, wv = 0, bv = 0;
  Linear out;
  LayerNorm norm;
  std::size_t heads = 1;
  static MultiHeadAttention make(ParamSet& ps, const std::string& name, std::size_t h, std::size_t heads, Rng& rng);
  Var operator()(Tape& t, ParamSet& ps, Var x, double dropout, AttentionCounter* counter) const;
};

/// LN(x + W2 gelu(W1 x)).
struct FeedForward {
  Linear up, down;
  LayerNorm norm;
  static FeedForward make(ParamSet& ps, const std::string& name, std::size_t h, std::size_t inner, Rng& rng);
  Var operator()(Tape& t, ParamSet& ps, Var x, double dropout) const;
};

/// Post-LN transformer encoder layer over [B, S, H].
struct EncoderLayer {
  MultiHeadAttention attn;
  FeedForward ffn;
  static EncoderLayer make(ParamSet& ps, const std::string& name, std::size_t h, std::size_t heads,
                           std::size_t inner, Rng& rng);
  Var operator()(Tape& t, ParamSet& ps, Var x, double dropout, AttentionCounter* counter) const;
};

struct Encoder {
  std::vector<EncoderLayer> layers;
  static Encoder make(ParamSet& ps, const std::string& name, std::size_t layers, std::size_t h, std::size_t heads,
                      std::size_t inner, Rng& rng);
  Var operator()(Tape& t, ParamSet& ps, Var x, double dropout, AttentionCounter* counter) const;
};

/// Tensor of N(0, sd^2) draws.
Tensor normal_tensor(Shape shape, double sd, Rng& rng);

/// Marks every parameter whose name starts with `prefix` frozen or trainable.
void set_frozen(ParamSet& ps, std::string_view prefix, bool frozen);

}  // namespace tabseq::nn
