#include "tabseq/nn/layers.hpp"

#include <cmath>

#include "tabseq/errors.hpp"

namespace tabseq::nn {

Tensor normal_tensor(Shape shape, double sd, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = sd * rng.normal();
  return t;
}

void set_frozen(ParamSet& ps, std::string_view prefix, bool frozen) {
  for (auto& p : ps) {
    if (std::string_view(p.name).starts_with(prefix)) p.frozen = frozen;
  }
}

namespace {

Tensor glorot(std::size_t in, std::size_t out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor t({in, out});
  for (auto& v : t.data) v = rng.uniform(-a, a);
  return t;
}

}  // namespace

Linear Linear::make(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  Linear l;
  l.in = in;
  l.out = out;
  l.w = ps.add(name + ".w", glorot(in, out, rng));
  l.b = ps.add(name + ".b", Tensor({out}));
  return l;
}

Var Linear::operator()(Tape& t, ParamSet& ps, Var x) const {
  return linear(t, x, t.param(ps[w]), t.param(ps[b]));
}

LayerNorm LayerNorm::make(ParamSet& ps, const std::string& name, std::size_t h) {
  LayerNorm n;
  n.gain = ps.add(name + ".gain", Tensor({h}, 1.0));
  n.bias = ps.add(name + ".bias", Tensor({h}));
  return n;
}

Var LayerNorm::operator()(Tape& t, ParamSet& ps, Var x) const {
  return layer_norm(t, x, t.param(ps[gain]), t.param(ps[bias]));
}

MultiHeadAttention MultiHeadAttention::make(ParamSet& ps, const std::string& name, std::size_t h, std::size_t heads,
                                            Rng& rng) {
  if (heads == 0 || h % heads != 0) {
    throw ShapeError("hidden size " + std::to_string(h) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  MultiHeadAttention m;
  m.heads = heads;
  m.wq = ps.add(name + ".wq", glorot(h, h, rng));
  m.bq = ps.add(name + ".bq", Tensor({h}));
  m.wk = ps.add(name + ".wk", glorot(h, h, rng));
  m.wv = ps.add(name + ".wv", glorot(h, h, rng));
  m.bv = ps.add(name + ".bv", Tensor({h}));
  m.out = Linear::make(ps, name + ".out", h, h, rng);
  m.norm = LayerNorm::make(ps, name + ".ln", h);
  return m;
}

Var MultiHeadAttention::operator()(Tape& t, ParamSet& ps, Var x, double dropout_p, AttentionCounter* counter) const {
  Var q = linear(t, x, t.param(ps[wq]), t.param(ps[bq]));
  Var k = matmul(t, x, t.param(ps[wk]));
  Var v = linear(t, x, t.param(ps[wv]), t.param(ps[bv]));
  Var a = attention(t, q, k, v, heads, counter);
  Var o = dropout(t, out(t, ps, a), dropout_p);
  return norm(t, ps, add(t, x, o));
}

FeedForward FeedForward::make(ParamSet& ps, const std::string& name, std::size_t h, std::size_t inner, Rng& rng) {
  FeedForward f;
  f.up = Linear::make(ps, name + ".up", h, inner, rng);
  f.down = Linear::make(ps, name + ".down", inner, h, rng);
  f.norm = LayerNorm::make(ps, name + ".ln", h);
  return f;
}

Var FeedForward::operator()(Tape& t, ParamSet& ps, Var x, double dropout_p) const {
  Var y = dropout(t, down(t, ps, gelu(t, up(t, ps, x))), dropout_p);
  return norm(t, ps, add(t, x, y));
}

EncoderLayer EncoderLayer::make(ParamSet& ps, const std::string& name, std::size_t h, std::size_t heads,
                                std::size_t inner, Rng& rng) {
  EncoderLayer e;
  e.attn = MultiHeadAttention::make(ps, name + ".attn", h, heads, rng);
  e.ffn = FeedForward::make(ps, name + ".ffn", h, inner, rng);
  return e;
}

Var EncoderLayer::operator()(Tape& t, ParamSet& ps, Var x, double dropout_p, AttentionCounter* counter) const {
  return ffn(t, ps, attn(t, ps, x, dropout_p, counter), dropout_p);
}

Encoder Encoder::make(ParamSet& ps, const std::string& name, std::size_t layers, std::size_t h, std::size_t heads,
                      std::size_t inner, Rng& rng) {
  Encoder e;
  for (std::size_t i = 0; i < layers; ++i) {
    e.layers.push_back(EncoderLayer::make(ps, name + "." + std::to_string(i), h, heads, inner, rng));
  }
  return e;
}

Var Encoder::operator()(Tape& t, ParamSet& ps, Var x, double dropout_p, AttentionCounter* counter) const {
  for (const auto& l : layers) x = l(t, ps, x, dropout_p, counter);
  return x;
}

}  // namespace tabseq::nn
