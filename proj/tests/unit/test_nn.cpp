#include <doctest.h>

#include <cmath>
#include <limits>

#include "tabseq/errors.hpp"
#include "tabseq/nn/checkpoint.hpp"
#include "tabseq/nn/layers.hpp"
#include "tabseq/nn/optim.hpp"

using namespace tabseq;
using namespace tabseq::nn;

namespace {

Tensor eye(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t[i * n + i] = 1.0;
  return t;
}

// x + softmax(x x^T / sqrt(H)) x, then layer norm, one scalar at a time.
std::vector<double> mha_identity_oracle(const std::vector<double>& x, std::size_t S, std::size_t H) {
  std::vector<double> out(S * H);
  for (std::size_t i = 0; i < S; ++i) {
    std::vector<double> sc(S);
    double mx = -1e300;
    for (std::size_t j = 0; j < S; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < H; ++c) d += x[i * H + c] * x[j * H + c];
      sc[j] = d / std::sqrt(static_cast<double>(H));
      mx = std::max(mx, sc[j]);
    }
    double z = 0.0;
    for (auto& s : sc) z += (s = std::exp(s - mx));
    std::vector<double> r(H);
    for (std::size_t c = 0; c < H; ++c) {
      double a = 0.0;
      for (std::size_t j = 0; j < S; ++j) a += sc[j] / z * x[j * H + c];
      r[c] = x[i * H + c] + a;
    }
    double m = 0.0, v = 0.0;
    for (double e : r) m += e;
    m /= static_cast<double>(H);
    for (double e : r) v += (e - m) * (e - m);
    v /= static_cast<double>(H);
    for (std::size_t c = 0; c < H; ++c) out[i * H + c] = (r[c] - m) / std::sqrt(v + kLayerNormEps);
  }
  return out;
}

MultiHeadAttention identity_mha(ParamSet& ps, std::size_t H) {
  Rng rng(1);
  auto mha = MultiHeadAttention::make(ps, "a", H, 1, rng);
  ps[mha.wq].value = eye(H);
  ps[mha.wk].value = eye(H);
  ps[mha.wv].value = eye(H);
  ps[mha.out.w].value = eye(H);
  return mha;
}

}  // namespace

TEST_CASE("softmax rows sum to one and layer norm standardizes") {
  Rng rng(2);
  for (int c = 0; c < 50; ++c) {
    const std::size_t cols = 1 + rng.below(20);
    std::vector<double> logits(cols * 4);
    for (auto& v : logits) v = 30.0 * rng.normal();
    const auto p = softmax_rows(logits, cols);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += p[r * cols + j];
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    Tape t;
    const std::size_t h = 2 + rng.below(30);
    const auto x = t.constant(normal_tensor({3, h}, 5.0, rng));
    const auto y = t.value(layer_norm(t, x, t.constant(Tensor({h}, 1.0)), t.constant(Tensor({h}, 0.0))));
    for (std::size_t r = 0; r < 3; ++r) {
      double m = 0.0, v = 0.0;
      for (std::size_t j = 0; j < h; ++j) m += y[r * h + j];
      m /= static_cast<double>(h);
      for (std::size_t j = 0; j < h; ++j) v += (y[r * h + j] - m) * (y[r * h + j] - m);
      CHECK(std::abs(m) < 1e-10);
      CHECK(std::abs(v / static_cast<double>(h) - 1.0) < 1e-8);
    }
  }
}

TEST_CASE("attention with one position passes the value through") {
  ParamSet ps;
  Rng rng(4);
  auto mha = MultiHeadAttention::make(ps, "a", 4, 2, rng);
  Tape t;
  const Tensor xin = normal_tensor({3, 1, 4}, 1.0, rng);
  const auto x = t.constant(xin);
  AttentionCounter c;
  const auto y = t.value(mha(t, ps, x, 0.0, &c));
  CHECK(c.pairs == 3 * 2 * 1);
  Tape t2;
  const auto x2 = t2.constant(xin);
  const auto v = linear(t2, x2, t2.param(ps[mha.wv]), t2.param(ps[mha.bv]));
  const auto ref = t2.value(mha.norm(t2, ps, add(t2, x2, mha.out(t2, ps, v))));
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) <= 1e-14);
}

TEST_CASE("two-position attention matches a scalar oracle") {
  Rng rng(6);
  for (std::size_t S : {2u, 3u}) {
    ParamSet ps;
    const auto mha = identity_mha(ps, 2);
    const Tensor xin = normal_tensor({1, S, 2}, 1.5, rng);
    Tape t;
    AttentionCounter c;
    const auto y = t.value(mha(t, ps, t.constant(xin), 0.0, &c));
    const auto ref = mha_identity_oracle(xin.data, S, 2);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y[i] - ref[i]) <= 1e-12);
    CHECK(c.pairs == S * S);
    CHECK(c.by_length.at(S) == S * S);
  }
}

TEST_CASE("grad_check on simple functions") {
  ParamSet ps;
  const auto th = ps.add("theta", Tensor({1}, std::vector<double>{3.0}));
  const auto sq = grad_check(ps, [&](Tape& t) {
    const auto v = t.param(ps[th]);
    return mul(t, v, v);
  }, {1e-5, 12, 0});
  CHECK(sq.analytic == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(sq.max_rel_error < 1e-9);
  const auto k = grad_check(ps, [&](Tape& t) {
    (void)t.param(ps[th]);
    return t.constant(Tensor::scalar(2.0));
  });
  CHECK(k.max_rel_error == 0.0);
  const auto nf = [&](Tape& t) {
    return scale(t, t.param(ps[th]), std::numeric_limits<double>::infinity());
  };
  CHECK_THROWS_AS(grad_check(ps, nf), NonFiniteError);
}

TEST_CASE("adam first step is lr * sign-like and zero gradient leaves values") {
  ParamSet ps;
  const auto p = ps.add("p", Tensor({3}, std::vector<double>{1.0, -2.0, 0.5}));
  ps[p].grad = Tensor({3}, std::vector<double>{0.3, -4.0, 0.0});
  AdamState st;
  st.lr = 0.01;
  adam_step(ps, st);
  const double g[] = {0.3, -4.0, 0.0};
  const double x0[] = {1.0, -2.0, 0.5};
  for (int i = 0; i < 3; ++i) {
    const double expect = x0[i] - 0.01 * g[i] / (std::abs(g[i]) + st.eps);
    CHECK(std::abs(ps[p].value[i] - expect) <= 1e-15);
  }
  CHECK(st.step == 1);
  ps[p].grad = Tensor({3});
  const auto m1 = st.m[0];
  adam_step(ps, st);
  // The moment estimates decay while values keep moving from momentum only.
  for (int i = 0; i < 3; ++i) CHECK(std::abs(st.m[0][i]) <= std::abs(m1[i]));

  ParamSet a, b;
  a.add("p", Tensor({2}, std::vector<double>{1, 2}));
  b.add("p", Tensor({2}, std::vector<double>{1, 2}));
  a[0].grad = b[0].grad = Tensor({2}, std::vector<double>{0.5, -1});
  AdamState sa, sb;
  adam_step(a, sa);
  adam_step(b, sb);
  CHECK(a[0].value == b[0].value);

  ParamSet z;
  z.add("p", Tensor({2}, std::vector<double>{1, 2}));
  z[0].grad = Tensor({2});
  AdamState sz;
  adam_step(z, sz);
  CHECK(z[0].value == Tensor({2}, std::vector<double>{1, 2}));
}

TEST_CASE("losses: uniform logits give ln C, equal preds give zero") {
  for (std::size_t C : {2u, 5u, 11u}) {
    Tape t;
    const std::vector<std::int32_t> y = {0, static_cast<std::int32_t>(C - 1)};
    const auto l = t.value(cross_entropy(t, t.constant(Tensor({2, C}, 0.7)), y))[0];
    CHECK(std::abs(l - std::log(static_cast<double>(C))) <= 1e-14);
  }
  Tape t;
  const std::vector<double> tg = {1.0, -2.0, 3.5};
  CHECK(t.value(mse(t, t.constant(Tensor({3, 1}, tg)), tg))[0] == 0.0);
  const auto big = t.constant(Tensor({1, 3}, std::vector<double>{1e6, 0.0, -3.0}));
  const std::vector<std::int32_t> zero = {0};
  CHECK(t.value(cross_entropy(t, big, zero))[0] == doctest::Approx(0.0));
  const std::vector<std::int32_t> bad = {3};
  CHECK_THROWS_AS(cross_entropy(t, big, bad), RangeError);
  CHECK_THROWS_AS(mse(t, t.constant(Tensor({2, 1})), tg), ShapeError);
}

TEST_CASE("layer gradients agree with finite differences") {
  Rng rng(21);
  for (int rep = 0; rep < 3; ++rep) {
    const std::size_t H = 2 * (1 + rng.below(4)), S = 1 + rng.below(5);
    ParamSet ps;
    const auto x = ps.add("x", normal_tensor({2, S, H}, 1.0, rng));
    const auto layer = EncoderLayer::make(ps, "l", H, 2, 2 * H, rng);
    std::vector<double> tg(2 * S * H);
    for (auto& v : tg) v = rng.normal();
    const auto r = grad_check(ps, [&](Tape& t) {
      return squared_error_sum(t, layer(t, ps, t.param(ps[x]), 0.0, nullptr), tg);
    });
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("dropout is identity at evaluation and seeded in training") {
  Rng rng(3);
  const auto xin = normal_tensor({50}, 1.0, rng);
  Tape ev;
  CHECK(ev.value(dropout(ev, ev.constant(xin), 0.5)) == xin);
  Tape a(true, 7), b(true, 7);
  CHECK(a.value(dropout(a, a.constant(xin), 0.5)) == b.value(dropout(b, b.constant(xin), 0.5)));
}

TEST_CASE("checkpoint bytes round-trip in both precisions") {
  Rng rng(10);
  Checkpoint ck;
  ck.model = {{"family", "Vanilla"}};
  ck.vocab_hash = "abc";
  ck.seed = 77;
  ck.params.add("w", normal_tensor({3, 2}, 1.0, rng));
  ck.params.add("b", normal_tensor({2}, 1.0, rng));
  const auto back = checkpoint_from_bytes(checkpoint_bytes(ck));
  CHECK(back.seed == 77);
  CHECK(back.vocab_hash == "abc");
  CHECK(back.params[0].value == ck.params[0].value);
  CHECK(checkpoint_bytes(back) == checkpoint_bytes(ck));
  ck.dtype = DType::F32;
  const auto f = checkpoint_from_bytes(checkpoint_bytes(ck));
  CHECK(f.params[1].value[0] == static_cast<double>(static_cast<float>(ck.params[1].value[0])));
  CHECK_THROWS(checkpoint_from_bytes("NOTACKPT"));
}
