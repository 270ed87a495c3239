#include "tabseq/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tabseq/errors.hpp"

namespace tabseq::nn {

namespace {

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

std::size_t last_dim(const Tensor& x) { return x.shape.empty() ? 1 : x.shape.back(); }

}  // namespace

namespace {

Var linear_impl(Tape& t, Var x, Var w, const Var* b) {
  const Tensor& X = t.value(x);
  const Tensor& W = t.value(w);
  require(W.rank() == 2 && X.rank() >= 1 && X.shape.back() == W.dim(0), "linear",
          "input " + shape_string(X.shape) + " vs weight " + shape_string(W.shape));
  const std::size_t K = W.dim(0), O = W.dim(1), R = X.size() / K;
  Shape out_shape = X.shape;
  out_shape.back() = O;
  Tensor Y(out_shape);
  if (b != nullptr) {
    const Tensor& B = t.value(*b);
    require(B.size() == O, "linear", "bias of size " + std::to_string(B.size()) + ", expected " + std::to_string(O));
    for (std::size_t r = 0; r < R; ++r) std::copy(B.data.begin(), B.data.end(), Y.data.begin() + static_cast<std::ptrdiff_t>(r * O));
  }
  const double* xp = X.data.data();
  const double* wp = W.data.data();
  double* yp = Y.data.data();
  for (std::size_t r = 0; r < R; ++r) {
    double* yr = yp + r * O;
    for (std::size_t k = 0; k < K; ++k) {
      const double xv = xp[r * K + k];
      const double* wk = wp + k * O;
      for (std::size_t o = 0; o < O; ++o) yr[o] += xv * wk[o];
    }
  }
  const bool has_b = b != nullptr;
  const Var bv = has_b ? *b : Var{};
  const bool needs = t.needs_grad(x) || t.needs_grad(w) || (has_b && t.needs_grad(bv));
  return t.record(std::move(Y), needs, [&t, x, w, bv, has_b, R, K, O](const Tensor& G) {
    const double* gp = G.data.data();
    if (t.needs_grad(x)) {
      const double* wp = t.value(w).data.data();
      double* dx = t.grad(x).data.data();
      for (std::size_t r = 0; r < R; ++r) {
        const double* gr = gp + r * O;
        for (std::size_t k = 0; k < K; ++k) {
          const double* wk = wp + k * O;
          double s = 0.0;
          for (std::size_t o = 0; o < O; ++o) s += gr[o] * wk[o];
          dx[r * K + k] += s;
        }
      }
    }
    if (t.needs_grad(w)) {
      const double* xp = t.value(x).data.data();
      double* dw = t.grad(w).data.data();
      for (std::size_t r = 0; r < R; ++r) {
        const double* gr = gp + r * O;
        for (std::size_t k = 0; k < K; ++k) {
          const double xv = xp[r * K + k];
          double* dwk = dw + k * O;
          for (std::size_t o = 0; o < O; ++o) dwk[o] += xv * gr[o];
        }
      }
    }
    if (has_b && t.needs_grad(bv)) {
      double* db = t.grad(bv).data.data();
      for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t o = 0; o < O; ++o) db[o] += gp[r * O + o];
      }
    }
  });
}

}  // namespace

Var linear(Tape& t, Var x, Var w, Var b) { return linear_impl(t, x, w, &b); }
Var matmul(Tape& t, Var x, Var w) { return linear_impl(t, x, w, nullptr); }

namespace {

Var binary_same_shape(Tape& t, Var a, Var b, double sign, const char* name) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  require(A.shape == B.shape, name, shape_string(A.shape) + " vs " + shape_string(B.shape));
  Tensor Y = A;
  for (std::size_t i = 0; i < Y.size(); ++i) Y.data[i] += sign * B.data[i];
  return t.record(std::move(Y), t.needs_grad(a) || t.needs_grad(b), [&t, a, b, sign](const Tensor& G) {
    if (t.needs_grad(a)) {
      auto& da = t.grad(a).data;
      for (std::size_t i = 0; i < G.size(); ++i) da[i] += G.data[i];
    }
    if (t.needs_grad(b)) {
      auto& db = t.grad(b).data;
      for (std::size_t i = 0; i < G.size(); ++i) db[i] += sign * G.data[i];
    }
  });
}

}  // namespace

Var add(Tape& t, Var a, Var b) { return binary_same_shape(t, a, b, 1.0, "add"); }
Var sub(Tape& t, Var a, Var b) { return binary_same_shape(t, a, b, -1.0, "sub"); }

Var mul(Tape& t, Var a, Var b) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  require(A.shape == B.shape, "mul", shape_string(A.shape) + " vs " + shape_string(B.shape));
  Tensor Y = A;
  for (std::size_t i = 0; i < Y.size(); ++i) Y.data[i] *= B.data[i];
  return t.record(std::move(Y), t.needs_grad(a) || t.needs_grad(b), [&t, a, b](const Tensor& G) {
    if (t.needs_grad(a)) {
      const auto& bv = t.value(b).data;
      auto& da = t.grad(a).data;
      for (std::size_t i = 0; i < G.size(); ++i) da[i] += G.data[i] * bv[i];
    }
    if (t.needs_grad(b)) {
      const auto& av = t.value(a).data;
      auto& db = t.grad(b).data;
      for (std::size_t i = 0; i < G.size(); ++i) db[i] += G.data[i] * av[i];
    }
  });
}

Var scale(Tape& t, Var x, double c) {
  Tensor Y = t.value(x);
  for (auto& v : Y.data) v *= c;
  return t.record(std::move(Y), t.needs_grad(x), [&t, x, c](const Tensor& G) {
    auto& dx = t.grad(x).data;
    for (std::size_t i = 0; i < G.size(); ++i) dx[i] += c * G.data[i];
  });
}

Var add_broadcast(Tape& t, Var x, Var y) {
  const Tensor& X = t.value(x);
  const Tensor& Yv = t.value(y);
  const std::size_t n = Yv.size();
  require(n > 0 && X.rank() >= Yv.rank() &&
              std::equal(Yv.shape.rbegin(), Yv.shape.rend(), X.shape.rbegin()),
          "add_broadcast", shape_string(X.shape) + " + " + shape_string(Yv.shape));
  Tensor Out = X;
  for (std::size_t i = 0; i < Out.size(); ++i) Out.data[i] += Yv.data[i % n];
  return t.record(std::move(Out), t.needs_grad(x) || t.needs_grad(y), [&t, x, y, n](const Tensor& G) {
    if (t.needs_grad(x)) {
      auto& dx = t.grad(x).data;
      for (std::size_t i = 0; i < G.size(); ++i) dx[i] += G.data[i];
    }
    if (t.needs_grad(y)) {
      auto& dy = t.grad(y).data;
      for (std::size_t i = 0; i < G.size(); ++i) dy[i % n] += G.data[i];
    }
  });
}

Var mul_channels(Tape& t, Var x, Var w) {
  const Tensor& X = t.value(x);
  const Tensor& W = t.value(w);
  const std::size_t H = W.size();
  require(last_dim(X) == H, "mul_channels", shape_string(X.shape) + " * " + shape_string(W.shape));
  Tensor Y = X;
  for (std::size_t i = 0; i < Y.size(); ++i) Y.data[i] *= W.data[i % H];
  return t.record(std::move(Y), t.needs_grad(x) || t.needs_grad(w), [&t, x, w, H](const Tensor& G) {
    if (t.needs_grad(x)) {
      const auto& wv = t.value(w).data;
      auto& dx = t.grad(x).data;
      for (std::size_t i = 0; i < G.size(); ++i) dx[i] += G.data[i] * wv[i % H];
    }
    if (t.needs_grad(w)) {
      const auto& xv = t.value(x).data;
      auto& dw = t.grad(w).data;
      for (std::size_t i = 0; i < G.size(); ++i) dw[i % H] += G.data[i] * xv[i];
    }
  });
}

Var add_broadcast_mid(Tape& t, Var x, Var y) {
  const Tensor& X = t.value(x);
  const Tensor& Yv = t.value(y);
  require(X.rank() == 3 && Yv.rank() == 2 && X.dim(0) == Yv.dim(0) && X.dim(2) == Yv.dim(1), "add_broadcast_mid",
          shape_string(X.shape) + " + " + shape_string(Yv.shape));
  const std::size_t R = X.dim(0), M = X.dim(1), H = X.dim(2);
  Tensor Out = X;
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t h = 0; h < H; ++h) Out.data[(r * M + m) * H + h] += Yv.data[r * H + h];
  return t.record(std::move(Out), t.needs_grad(x) || t.needs_grad(y), [&t, x, y, R, M, H](const Tensor& G) {
    if (t.needs_grad(x)) {
      auto& dx = t.grad(x).data;
      for (std::size_t i = 0; i < G.size(); ++i) dx[i] += G.data[i];
    }
    if (t.needs_grad(y)) {
      auto& dy = t.grad(y).data;
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t m = 0; m < M; ++m)
          for (std::size_t h = 0; h < H; ++h) dy[r * H + h] += G.data[(r * M + m) * H + h];
    }
  });
}

Var gelu(Tape& t, Var x) {
  // tanh approximation
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double a = 0.044715;
  Tensor Y = t.value(x);
  for (auto& v : Y.data) v = 0.5 * v * (1.0 + std::tanh(c * (v + a * v * v * v)));
  return t.record(std::move(Y), t.needs_grad(x), [&t, x](const Tensor& G) {
    const auto& xv = t.value(x).data;
    auto& dx = t.grad(x).data;
    for (std::size_t i = 0; i < G.size(); ++i) {
      const double v = xv[i];
      const double th = std::tanh(c * (v + a * v * v * v));
      const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * c * (1.0 + 3.0 * a * v * v);
      dx[i] += G.data[i] * d;
    }
  });
}

Var relu(Tape& t, Var x) {
  Tensor Y = t.value(x);
  for (auto& v : Y.data) v = v > 0.0 ? v : 0.0;
  return t.record(std::move(Y), t.needs_grad(x), [&t, x](const Tensor& G) {
    const auto& xv = t.value(x).data;
    auto& dx = t.grad(x).data;
    for (std::size_t i = 0; i < G.size(); ++i) dx[i] += xv[i] > 0.0 ? G.data[i] : 0.0;
  });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias) {
  const Tensor& X = t.value(x);
  const Tensor& Gn = t.value(gain);
  const Tensor& Bs = t.value(bias);
  const std::size_t H = last_dim(X);
  require(Gn.size() == H && Bs.size() == H, "layer_norm", "gain/bias must match the last dimension");
  const std::size_t R = X.size() / H;
  Tensor Y(X.shape);
  std::vector<double> xhat(X.size()), inv_std(R);
  for (std::size_t r = 0; r < R; ++r) {
    const double* xr = X.data.data() + r * H;
    double mean = 0.0;
    for (std::size_t h = 0; h < H; ++h) mean += xr[h];
    mean /= static_cast<double>(H);
    double var = 0.0;
    for (std::size_t h = 0; h < H; ++h) var += (xr[h] - mean) * (xr[h] - mean);
    var /= static_cast<double>(H);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[r] = is;
    for (std::size_t h = 0; h < H; ++h) {
      const double xh = (xr[h] - mean) * is;
      xhat[r * H + h] = xh;
      Y.data[r * H + h] = xh * Gn.data[h] + Bs.data[h];
    }
  }
  const bool needs = t.needs_grad(x) || t.needs_grad(gain) || t.needs_grad(bias);
  return t.record(std::move(Y), needs,
                  [&t, x, gain, bias, R, H, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Tensor& G) {
                    if (t.needs_grad(gain)) {
                      auto& dg = t.grad(gain).data;
                      for (std::size_t i = 0; i < G.size(); ++i) dg[i % H] += G.data[i] * xhat[i];
                    }
                    if (t.needs_grad(bias)) {
                      auto& db = t.grad(bias).data;
                      for (std::size_t i = 0; i < G.size(); ++i) db[i % H] += G.data[i];
                    }
                    if (t.needs_grad(x)) {
                      const auto& gn = t.value(gain).data;
                      auto& dx = t.grad(x).data;
                      std::vector<double> dxh(H);
                      for (std::size_t r = 0; r < R; ++r) {
                        double mean_d = 0.0, mean_dx = 0.0;
                        for (std::size_t h = 0; h < H; ++h) {
                          dxh[h] = G.data[r * H + h] * gn[h];
                          mean_d += dxh[h];
                          mean_dx += dxh[h] * xhat[r * H + h];
                        }
                        mean_d /= static_cast<double>(H);
                        mean_dx /= static_cast<double>(H);
                        for (std::size_t h = 0; h < H; ++h) {
                          dx[r * H + h] += inv_std[r] * (dxh[h] - mean_d - xhat[r * H + h] * mean_dx);
                        }
                      }
                    }
                  });
}

std::vector<double> softmax_rows(std::span<const double> logits, std::size_t cols) {
  std::vector<double> out(logits.size());
  for (std::size_t r = 0; r * cols < logits.size(); ++r) {
    const double* l = logits.data() + r * cols;
    double mx = l[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, l[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = std::exp(l[c] - mx);
      sum += out[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= sum;
  }
  return out;
}

Var attention(Tape& t, Var q, Var k, Var v, std::size_t heads, AttentionCounter* counter) {
  const Tensor& Q = t.value(q);
  const Tensor& K = t.value(k);
  const Tensor& V = t.value(v);
  require(Q.rank() == 3 && Q.shape == K.shape && Q.shape == V.shape, "attention",
          "q/k/v must share a [B, S, H] shape");
  const std::size_t B = Q.dim(0), S = Q.dim(1), H = Q.dim(2);
  require(heads >= 1 && H % heads == 0, "attention", "hidden size " + std::to_string(H) +
                                                         " is not divisible by " + std::to_string(heads) + " heads");
  require(S >= 1, "attention", "sequence length must be >= 1");
  const std::size_t d = H / heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  if (counter != nullptr) {
    const auto n = static_cast<std::uint64_t>(B * heads * S * S);
    counter->pairs += n;
    counter->by_length[S] += n;
  }

  // probs[b][h][i][j]
  std::vector<double> probs(B * heads * S * S);
  Tensor Out({B, S, H});
  std::vector<double> row(S);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      double* P = probs.data() + (b * heads + h) * S * S;
      for (std::size_t i = 0; i < S; ++i) {
        const double* qi = Q.data.data() + (b * S + i) * H + h * d;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < S; ++j) {
          const double* kj = K.data.data() + (b * S + j) * H + h * d;
          double s = 0.0;
          for (std::size_t c = 0; c < d; ++c) s += qi[c] * kj[c];
          row[j] = s * inv_sqrt_d;
          mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        double* oi = Out.data.data() + (b * S + i) * H + h * d;
        for (std::size_t j = 0; j < S; ++j) {
          const double p = row[j] / sum;
          P[i * S + j] = p;
          const double* vj = V.data.data() + (b * S + j) * H + h * d;
          for (std::size_t c = 0; c < d; ++c) oi[c] += p * vj[c];
        }
      }
    }
  }
  const bool needs = t.needs_grad(q) || t.needs_grad(k) || t.needs_grad(v);
  return t.record(std::move(Out), needs,
                  [&t, q, k, v, B, S, H, heads, d, inv_sqrt_d, probs = std::move(probs)](const Tensor& G) {
                    const auto& Qd = t.value(q).data;
                    const auto& Kd = t.value(k).data;
                    const auto& Vd = t.value(v).data;
                    const bool gq = t.needs_grad(q), gk = t.needs_grad(k), gv = t.needs_grad(v);
                    double* dQ = gq ? t.grad(q).data.data() : nullptr;
                    double* dK = gk ? t.grad(k).data.data() : nullptr;
                    double* dV = gv ? t.grad(v).data.data() : nullptr;
                    std::vector<double> dP(S);
                    for (std::size_t b = 0; b < B; ++b) {
                      for (std::size_t h = 0; h < heads; ++h) {
                        const double* P = probs.data() + (b * heads + h) * S * S;
                        for (std::size_t i = 0; i < S; ++i) {
                          const double* gi = G.data.data() + (b * S + i) * H + h * d;
                          double dot = 0.0;
                          for (std::size_t j = 0; j < S; ++j) {
                            const std::size_t vj = (b * S + j) * H + h * d;
                            double s = 0.0;
                            for (std::size_t c = 0; c < d; ++c) s += gi[c] * Vd[vj + c];
                            dP[j] = s;
                            dot += s * P[i * S + j];
                            if (gv) {
                              const double p = P[i * S + j];
                              for (std::size_t c = 0; c < d; ++c) dV[vj + c] += p * gi[c];
                            }
                          }
                          const std::size_t qi = (b * S + i) * H + h * d;
                          for (std::size_t j = 0; j < S; ++j) {
                            const double ds = P[i * S + j] * (dP[j] - dot) * inv_sqrt_d;
                            const std::size_t kj = (b * S + j) * H + h * d;
                            if (gq) {
                              for (std::size_t c = 0; c < d; ++c) dQ[qi + c] += ds * Kd[kj + c];
                            }
                            if (gk) {
                              for (std::size_t c = 0; c < d; ++c) dK[kj + c] += ds * Qd[qi + c];
                            }
                          }
                        }
                      }
                    }
                  });
}

Var dropout(Tape& t, Var x, double p) {
  if (!t.training() || p <= 0.0) return x;
  if (p >= 1.0) throw RangeError("dropout probability must be < 1");
  Tensor Y = t.value(x);
  std::vector<double> mask(Y.size());
  const double keep = 1.0 / (1.0 - p);
  auto& rng = t.dropout_rng();
  for (std::size_t i = 0; i < Y.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep;
    Y.data[i] *= mask[i];
  }
  return t.record(std::move(Y), t.needs_grad(x), [&t, x, mask = std::move(mask)](const Tensor& G) {
    auto& dx = t.grad(x).data;
    for (std::size_t i = 0; i < G.size(); ++i) dx[i] += G.data[i] * mask[i];
  });
}

Var mean_dim1(Tape& t, Var x) {
  const Tensor& X = t.value(x);
  require(X.rank() == 3, "mean_dim1", "expects [B, S, H], got " + shape_string(X.shape));
  const std::size_t B = X.dim(0), S = X.dim(1), H = X.dim(2);
  Tensor Y({B, H});
  const double inv = 1.0 / static_cast<double>(S);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t h = 0; h < H; ++h) Y.data[b * H + h] += X.data[(b * S + s) * H + h];
  for (auto& v : Y.data) v *= inv;
  return t.record(std::move(Y), t.needs_grad(x), [&t, x, B, S, H, inv](const Tensor& G) {
    auto& dx = t.grad(x).data;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t h = 0; h < H; ++h) dx[(b * S + s) * H + h] += G.data[b * H + h] * inv;
  });
}

Var transpose12(Tape& t, Var x) {
  const Tensor& X = t.value(x);
  require(X.rank() == 3, "transpose12", "expects a rank-3 tensor, got " + shape_string(X.shape));
  const std::size_t B = X.dim(0), N = X.dim(1), M = X.dim(2);
  Tensor Y({B, M, N});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < M; ++j) Y.data[(b * M + j) * N + i] = X.data[(b * N + i) * M + j];
  return t.record(std::move(Y), t.needs_grad(x), [&t, x, B, N, M](const Tensor& G) {
    auto& dx = t.grad(x).data;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < M; ++j) dx[(b * N + i) * M + j] += G.data[(b * M + j) * N + i];
  });
}

Var reshape(Tape& t, Var x, Shape shape) {
  Tensor Y = t.value(x);
  require(numel(shape) == Y.size(), "reshape", shape_string(Y.shape) + " -> " + shape_string(shape));
  Y.shape = std::move(shape);
  return t.record(std::move(Y), t.needs_grad(x), [&t, x](const Tensor& G) {
    auto& dx = t.grad(x).data;
    for (std::size_t i = 0; i < G.size(); ++i) dx[i] += G.data[i];
  });
}

Var embedding(Tape& t, Var table, std::span<const std::int32_t> ids) {
  const Tensor& T = t.value(table);
  require(T.rank() == 2, "embedding", "table must be [V, H]");
  const std::size_t V = T.dim(0), H = T.dim(1);
  Tensor Y({ids.size(), H});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= V) {
      throw RangeError("embedding id " + std::to_string(ids[r]) + " outside table of " + std::to_string(V));
    }
    std::copy_n(T.data.begin() + static_cast<std::ptrdiff_t>(ids[r] * H), H, Y.data.begin() + static_cast<std::ptrdiff_t>(r * H));
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return t.record(std::move(Y), t.needs_grad(table), [&t, table, H, saved = std::move(saved)](const Tensor& G) {
    auto& dt = t.grad(table).data;
    for (std::size_t r = 0; r < saved.size(); ++r)
      for (std::size_t h = 0; h < H; ++h) dt[static_cast<std::size_t>(saved[r]) * H + h] += G.data[r * H + h];
  });
}

Var gather_rows(Tape& t, Var x, std::span<const std::size_t> idx) {
  const Tensor& X = t.value(x);
  require(X.rank() == 2, "gather_rows", "expects [R, H], got " + shape_string(X.shape));
  const std::size_t R = X.dim(0), H = X.dim(1);
  Tensor Y({idx.size(), H});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= R) throw RangeError("gather_rows index out of range");
    std::copy_n(X.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * H), H, Y.data.begin() + static_cast<std::ptrdiff_t>(r * H));
  }
  std::vector<std::size_t> saved(idx.begin(), idx.end());
  return t.record(std::move(Y), t.needs_grad(x), [&t, x, H, saved = std::move(saved)](const Tensor& G) {
    auto& dx = t.grad(x).data;
    for (std::size_t r = 0; r < saved.size(); ++r)
      for (std::size_t h = 0; h < H; ++h) dx[saved[r] * H + h] += G.data[r * H + h];
  });
}

Var value_embed(Tape& t, std::span<const double> values, std::span<const std::size_t> attr,
                std::span<const std::uint8_t> active, Var w, Var b) {
  const Tensor& W = t.value(w);
  const Tensor& Bv = t.value(b);
  require(W.rank() == 2 && W.shape == Bv.shape, "value_embed", "w and b must share an [A, H] shape");
  require(values.size() == attr.size() && values.size() == active.size(), "value_embed", "input spans differ in length");
  const std::size_t A = W.dim(0), H = W.dim(1), R = values.size();
  Tensor Y({R, H});
  for (std::size_t r = 0; r < R; ++r) {
    if (!active[r]) continue;
    if (attr[r] >= A) throw RangeError("value_embed attribute index out of range");
    for (std::size_t h = 0; h < H; ++h) Y.data[r * H + h] = values[r] * W.data[attr[r] * H + h] + Bv.data[attr[r] * H + h];
  }
  std::vector<double> sv(values.begin(), values.end());
  std::vector<std::size_t> sa(attr.begin(), attr.end());
  std::vector<std::uint8_t> sact(active.begin(), active.end());
  return t.record(std::move(Y), t.needs_grad(w) || t.needs_grad(b),
                  [&t, w, b, H, sv = std::move(sv), sa = std::move(sa), sact = std::move(sact)](const Tensor& G) {
                    const bool gw = t.needs_grad(w), gb = t.needs_grad(b);
                    double* dw = gw ? t.grad(w).data.data() : nullptr;
                    double* db = gb ? t.grad(b).data.data() : nullptr;
                    for (std::size_t r = 0; r < sv.size(); ++r) {
                      if (!sact[r]) continue;
                      for (std::size_t h = 0; h < H; ++h) {
                        const double g = G.data[r * H + h];
                        if (gw) dw[sa[r] * H + h] += g * sv[r];
                        if (gb) db[sa[r] * H + h] += g;
                      }
                    }
                  });
}

Var cross_entropy_sum(Tape& t, Var logits, std::span<const std::int32_t> targets) {
  const Tensor& L = t.value(logits);
  require(L.rank() == 2 && L.dim(0) == targets.size(), "cross_entropy",
          "logits " + shape_string(L.shape) + " vs " + std::to_string(targets.size()) + " targets");
  const std::size_t R = L.dim(0), C = L.dim(1);
  for (auto y : targets) {
    if (y < 0 || static_cast<std::size_t>(y) >= C) throw RangeError("class index " + std::to_string(y) + " outside [0, " + std::to_string(C) + ")");
  }
  auto probs = softmax_rows(L.data, C);
  double loss = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    const double* l = L.data.data() + r * C;
    double mx = l[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, l[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(l[c] - mx);
    loss += mx + std::log(sum) - l[targets[r]];
  }
  std::vector<std::int32_t> saved(targets.begin(), targets.end());
  return t.record(Tensor::scalar(loss), t.needs_grad(logits),
                  [&t, logits, C, probs = std::move(probs), saved = std::move(saved)](const Tensor& G) {
                    auto& dl = t.grad(logits).data;
                    const double g = G.data[0];
                    for (std::size_t r = 0; r < saved.size(); ++r) {
                      for (std::size_t c = 0; c < C; ++c) {
                        const double onehot = static_cast<std::size_t>(saved[r]) == c ? 1.0 : 0.0;
                        dl[r * C + c] += g * (probs[r * C + c] - onehot);
                      }
                    }
                  });
}

Var cross_entropy(Tape& t, Var logits, std::span<const std::int32_t> targets) {
  if (targets.empty()) throw ShapeError("cross_entropy: empty batch");
  return scale(t, cross_entropy_sum(t, logits, targets), 1.0 / static_cast<double>(targets.size()));
}

Var squared_error_sum(Tape& t, Var pred, std::span<const double> targets) {
  const Tensor& P = t.value(pred);
  require(P.size() == targets.size(), "mse",
          "prediction " + shape_string(P.shape) + " vs " + std::to_string(targets.size()) + " targets");
  double loss = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) loss += (P.data[i] - targets[i]) * (P.data[i] - targets[i]);
  std::vector<double> saved(targets.begin(), targets.end());
  return t.record(Tensor::scalar(loss), t.needs_grad(pred), [&t, pred, saved = std::move(saved)](const Tensor& G) {
    const auto& p = t.value(pred).data;
    auto& dp = t.grad(pred).data;
    for (std::size_t i = 0; i < saved.size(); ++i) dp[i] += G.data[0] * 2.0 * (p[i] - saved[i]);
  });
}

Var mse(Tape& t, Var pred, std::span<const double> targets) {
  if (targets.empty()) throw ShapeError("mse: empty batch");
  return scale(t, squared_error_sum(t, pred, targets), 1.0 / static_cast<double>(targets.size()));
}

}  // namespace tabseq::nn
