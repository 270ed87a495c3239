// Acceptance suite: one line per criterion. Usage: acceptance [criterion...]
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "../support/oracles.hpp"
#include "tabseq/bench.hpp"
#include "tabseq/metrics.hpp"
#include "tabseq/model.hpp"
#include "tabseq/nn/layers.hpp"
#include "tabseq/nn/optim.hpp"
#include "tabseq/synthgen.hpp"
#include "tabseq/training.hpp"

using namespace tabseq;
using json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1: metric arithmetic ---------------------------------------------------

Outcome metric_arithmetic() {
  struct F1Row { const char* name; double p, r, f1; };
  const F1Row f1_rows[] = {{"Vanilla", 0.96, 0.74, 0.836},
                           {"Twin Tower", 0.95, 0.76, 0.844},
                           {"TabBERT", 0.97, 0.81, 0.886},
                           {"LUNA", 0.98, 0.80, 0.880}};
  struct MRow { const char* name; double m, g, d, tol; };
  const MRow m_rows[] = {{"LightGBM", 79.29, 91.87, 66.72, 0.01},
                         {"Vanilla", 79.43, 91.95, 66.91, 0.01},
                         {"Twin Tower", 79.86, 92.17, 67.56, 0.01},
                         {"TabBERT", 71.70, 88.56, 54.89, 0.03}};
  bool ok = true;
  std::string detail;
  for (const auto& r : f1_rows) {
    const double f = metrics::f1_from(r.p, r.r);
    const bool good = std::abs(f - r.f1) <= 0.001 + 1e-12 && std::abs(f - oracle::f1(r.p, r.r)) < 1e-15;
    ok &= good;
    detail += fmt("%s F1 %.4f vs %.3f%s; ", r.name, f, r.f1, good ? "" : " (MISMATCH)");
  }
  for (const auto& r : m_rows) {
    // M is computed on the unit scale, compared on the x100 scale.
    const double m = 100.0 * metrics::metric_m(r.g / 100.0, r.d / 100.0);
    const bool good = std::abs(m - r.m) <= r.tol + 1e-9;
    ok &= good;
    detail += fmt("%s M %.3f vs %.2f%s; ", r.name, m, r.m, good ? "" : " (MISMATCH)");
  }
  return {ok, detail};
}

// ---- 2: rank-metric oracles -------------------------------------------------

Outcome rank_oracles() {
  Rng rng(2024);
  std::size_t gini_cases = 0, capture_cases = 0;
  double worst_g = 0.0, worst_d = 0.0;
  for (std::size_t c = 0; c < 120; ++c) {
    const std::size_t n = 2 + rng.below(499);
    const double neg_w = c % 2 ? 20.0 : 1.0;
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    const bool coarse = c % 3 == 0;  // many ties
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? static_cast<double>(rng.below(7)) : rng.uniform();
      y[i] = rng.bernoulli(0.1 + 0.4 * rng.uniform()) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    worst_g = std::max(worst_g, std::abs(metrics::weighted_gini(s, y, neg_w) - oracle::gini_pairwise(s, y, neg_w)));
    ++gini_cases;
    if (c < 60) {
      for (double frac : {0.04, 0.2, 0.5}) {
        worst_d = std::max(worst_d, std::abs(metrics::capture_rate(s, y, neg_w, frac) - oracle::capture_walk(s, y, neg_w, frac)));
      }
      ++capture_cases;
    }
  }
  // Perfect ordering gives exactly 1.
  bool perfect_ok = true;
  for (std::size_t c = 0; c < 20; ++c) {
    const std::size_t n = 3 + rng.below(200);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = i % 3 == 0;
      s[i] = y[i] ? 2.0 + rng.uniform() : rng.uniform();
    }
    perfect_ok &= metrics::weighted_gini(s, y, 20.0) == 1.0;
  }
  // 25 rows, one positive on top: threshold 0.04 * 481 = 19.24 admits only row 1.
  std::vector<double> s25(25);
  std::vector<std::uint8_t> y25(25, 0);
  for (std::size_t i = 0; i < 25; ++i) s25[i] = 25.0 - static_cast<double>(i);
  y25[0] = 1;
  const double d25 = metrics::capture_rate(s25, y25, 20.0, 0.04);
  const bool ok = worst_g <= 1e-12 && worst_d == 0.0 && perfect_ok && d25 == 1.0;
  return {ok, fmt("%zu Gini cases max |diff| %.2e; %zu capture cases (3 fractions each) max |diff| %.2e; perfect G==1: %s; "
                  "25-row hand walk D=%.3f",
                  gini_cases, worst_g, capture_cases, worst_d, perfect_ok ? "yes" : "no", d25)};
}

// ---- 3: gradients -----------------------------------------------------------

struct GcRow {
  std::string name;
  double err;
};

nn::GradCheckOptions gc_opts() { return {1e-5, 24, 99}; }

std::vector<GcRow> layer_grad_checks() {
  std::vector<GcRow> rows;
  Rng rng(5);
  auto targets = [&](std::size_t n) {
    std::vector<double> t(n);
    for (auto& v : t) v = rng.normal();
    return t;
  };
  {
    nn::ParamSet ps;
    const auto x = ps.add("x", nn::normal_tensor({2, 3, 4}, 1.0, rng));
    const auto lin = nn::Linear::make(ps, "lin", 4, 5, rng);
    ps[lin.b].value = nn::normal_tensor({5}, 0.5, rng);
    const auto tg = targets(30);
    rows.push_back({"linear", nn::grad_check(ps, [&](nn::Tape& t) {
                                return nn::squared_error_sum(t, lin(t, ps, t.param(ps[x])), tg);
                              }, gc_opts()).max_rel_error});
  }
  {
    nn::ParamSet ps;
    const auto table = ps.add("table", nn::normal_tensor({7, 4}, 1.0, rng));
    const std::vector<std::int32_t> ids = {0, 3, 3, 6, 1};
    const auto tg = targets(20);
    rows.push_back({"embedding", nn::grad_check(ps, [&](nn::Tape& t) {
                                   return nn::squared_error_sum(t, nn::embedding(t, t.param(ps[table]), ids), tg);
                                 }, gc_opts()).max_rel_error});
  }
  {
    nn::ParamSet ps;
    const auto x = ps.add("x", nn::normal_tensor({3, 6}, 1.0, rng));
    const auto ln = nn::LayerNorm::make(ps, "ln", 6);
    ps[ln.gain].value = nn::normal_tensor({6}, 1.0, rng);
    ps[ln.bias].value = nn::normal_tensor({6}, 1.0, rng);
    const auto tg = targets(18);
    rows.push_back({"layer_norm", nn::grad_check(ps, [&](nn::Tape& t) {
                                    return nn::squared_error_sum(t, ln(t, ps, t.param(ps[x])), tg);
                                  }, gc_opts()).max_rel_error});
  }
  {
    nn::ParamSet ps;
    const auto x = ps.add("x", nn::normal_tensor({2, 5, 8}, 1.0, rng));
    const auto mha = nn::MultiHeadAttention::make(ps, "mha", 8, 2, rng);
    for (auto i : {mha.bq, mha.bv, mha.out.b}) ps[i].value = nn::normal_tensor(ps[i].value.shape, 0.3, rng);
    const auto tg = targets(80);
    rows.push_back({"multi_head_attention", nn::grad_check(ps, [&](nn::Tape& t) {
                                              return nn::squared_error_sum(t, mha(t, ps, t.param(ps[x]), 0.0, nullptr), tg);
                                            }, gc_opts()).max_rel_error});
  }
  {
    nn::ParamSet ps;
    const auto x = ps.add("x", nn::normal_tensor({2, 4, 8}, 1.0, rng));
    const auto enc = nn::Encoder::make(ps, "enc", 2, 8, 2, 16, rng);
    const auto tg = targets(64);
    rows.push_back({"encoder(attention+feed_forward)", nn::grad_check(ps, [&](nn::Tape& t) {
                                                         return nn::squared_error_sum(t, enc(t, ps, t.param(ps[x]), 0.0, nullptr), tg);
                                                       }, gc_opts()).max_rel_error});
  }
  {
    ModelSpec s;
    s.family = Family::TwinTower;
    s.n = 4;
    s.m = 5;
    s.hidden = 8;
    s.heads = 2;
    s.dropout = 0.0;
    Model model(s, 3);
    auto& ps = model.params();
    ps[model.gate_params().w1].value = nn::normal_tensor({8}, 1.0, rng);
    ps[model.gate_params().w2].value = nn::normal_tensor({8}, 1.0, rng);
    const auto o1 = ps.add("test.o1", nn::normal_tensor({3, 8}, 1.0, rng));
    const auto o2 = ps.add("test.o2", nn::normal_tensor({3, 8}, 1.0, rng));
    const auto tg = targets(24);
    // Only the gate and the injected tower outputs receive gradient here.
    nn::set_frozen(ps, "", true);
    for (auto i : {model.gate_params().w1, model.gate_params().w2, o1, o2}) ps[i].frozen = false;
    rows.push_back({"gate", nn::grad_check(ps, [&](nn::Tape& t) {
                              return nn::squared_error_sum(t, model.gate(t, t.param(ps[o1]), t.param(ps[o2])), tg);
                            }, gc_opts()).max_rel_error});
  }
  {
    nn::ParamSet ps;
    const auto logits = ps.add("logits", nn::normal_tensor({5, 3}, 2.0, rng));
    const std::vector<std::int32_t> y = {0, 2, 1, 1, 0};
    rows.push_back({"cross_entropy", nn::grad_check(ps, [&](nn::Tape& t) {
                                       return nn::cross_entropy(t, t.param(ps[logits]), y);
                                     }, gc_opts()).max_rel_error});
  }
  {
    nn::ParamSet ps;
    const auto pred = ps.add("pred", nn::normal_tensor({6, 1}, 1.0, rng));
    const auto tg = targets(6);
    rows.push_back({"mse", nn::grad_check(ps, [&](nn::Tape& t) { return nn::mse(t, t.param(ps[pred]), tg); }, gc_opts())
                               .max_rel_error});
  }
  {
    nn::ParamSet ps;
    const auto w = ps.add("w", nn::normal_tensor({3, 4}, 1.0, rng));
    const auto b = ps.add("b", nn::normal_tensor({3, 4}, 1.0, rng));
    const std::vector<double> vals = {0.5, -1.2, 2.0, 0.3, 1.1};
    const std::vector<std::size_t> attr = {0, 2, 1, 2, 0};
    const std::vector<std::uint8_t> active = {1, 1, 0, 1, 1};
    const auto tg = targets(20);
    rows.push_back({"value_embedding", nn::grad_check(ps, [&](nn::Tape& t) {
                                         return nn::squared_error_sum(
                                             t, nn::value_embed(t, vals, attr, active, t.param(ps[w]), t.param(ps[b])), tg);
                                       }, gc_opts()).max_rel_error});
  }
  return rows;
}

std::vector<GcRow> model_grad_checks() {
  std::vector<GcRow> rows;
  synth::GenConfig g;
  g.entities = 6;
  g.rows_per_entity = 8;
  g.numerical_fields = 4;
  g.categorical_cardinalities = {3};
  g.fraud_rate = 0.3;
  g.seed = 3;
  const auto d = synth::generate_fraud_dataset(g);
  PrepareOptions po;
  po.window = 4;
  po.stride = 2;
  po.bins = 4;
  po.tokens = true;
  po.val_fraction = 0.0;
  po.test_fraction = 0.0;
  auto pd = prepare_examples(d, po);
  pd.train[1].label = 1.0 - pd.train[0].label;  // both classes in the batch
  std::vector<const Example*> batch{&pd.train[0], &pd.train[1]};
  std::vector<MaskedTokens> masked;
  for (std::size_t i = 0; i < 2; ++i) masked.push_back(mask_tokens(pd.train[i].g, 0.4, 11 + i));
  std::vector<const MaskedTokens*> mb{&masked[0], &masked[1]};

  for (Family f : {Family::Vanilla, Family::TwinTower, Family::Hierarchical, Family::HierarchicalJoint}) {
    for (HeadKind hk : {HeadKind::BinaryClassifier, HeadKind::Regressor, HeadKind::MLM}) {
      ModelSpec s;
      s.family = f;
      s.n = 4;
      s.m = 5;
      s.hidden = 8;
      s.heads = 2;
      s.dropout = 0.0;
      s.head = hk;
      if (s.hierarchical()) {
        s.attach(pd.encoding.vocabulary);
      } else if (hk == HeadKind::MLM) {
        continue;
      }
      Model m(s, 7);
      const auto r = nn::grad_check(m.params(), [&](nn::Tape& t) {
        return hk == HeadKind::MLM ? m.mlm_loss(t, mb) : m.supervised_loss(t, batch);
      }, gc_opts());
      rows.push_back({std::string(to_string(f)) + "/" + std::string(to_string(hk)), r.max_rel_error});
    }
  }
  return rows;
}

Outcome gradients() {
  auto rows = layer_grad_checks();
  for (auto& r : model_grad_checks()) rows.push_back(r);
  bool ok = true;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : rows) {
    ok &= r.err < 1e-4;
    if (r.err >= worst) {
      worst = r.err;
      worst_name = r.name;
    }
  }
  return {ok, fmt("%zu checks (9 layer kinds, 4 families x heads); worst %.2e (%s)", rows.size(), worst, worst_name.c_str())};
}

// ---- 4: attention-pair accounting ------------------------------------------

Outcome complexity() {
  const std::size_t B = 2, h = 2, L = 2, L1 = 1, H = 8;
  const std::vector<std::size_t> Ns = {4, 8, 16, 32}, Ms = {3, 6, 12};
  bool exact = true;
  std::size_t forwards = 0;
  // stage counts keyed by family, attended length axis
  std::map<std::string, std::map<std::pair<std::size_t, std::size_t>, std::uint64_t>> seq_stage, field_stage, total;
  Rng rng(17);
  for (Family f : {Family::Vanilla, Family::TwinTower, Family::Hierarchical, Family::HierarchicalJoint}) {
    const std::string fam(to_string(f));
    for (auto N : Ns) {
      for (auto M : Ms) {
        ModelSpec s;
        s.family = f;
        s.n = N;
        s.m = M;
        s.hidden = H;
        s.heads = h;
        s.layers = L;
        s.field_layers = L1;
        s.dropout = 0.0;
        if (s.hierarchical()) {
          for (std::size_t j = 0; j < M; ++j) s.fields.push_back({static_cast<std::int32_t>(kSpecialTokens + 3 * j), 3, j % 2 == 0});
          s.vocab_size = kSpecialTokens + 3 * M;
        }
        Model model(s, 1);
        std::vector<Example> ex(B);
        for (auto& e : ex) {
          e.x = {N, M, std::vector<double>(N * M)};
          for (auto& v : e.x.data) v = rng.normal();
          e.g.rows = N;
          e.g.cols = M;
          for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t j = 0; j < M; ++j) {
              e.g.ids.push_back(static_cast<std::int32_t>(kSpecialTokens + 3 * j + rng.below(3)));
              e.g.values.push_back(rng.normal());
            }
          }
          e.g.masked.assign(N * M, 0);
        }
        std::vector<const Example*> batch{&ex[0], &ex[1]};
        nn::AttentionCounter c;
        nn::Tape t;
        model.forward(t, batch, &c);
        ++forwards;
        std::uint64_t expect = 0;
        switch (f) {
          case Family::Vanilla: expect = B * h * L * N * N; break;
          case Family::TwinTower: expect = B * h * L * (N * N + M * M); break;
          default: expect = B * h * (L1 * N * M * M + L * N * N); break;
        }
        exact &= c.pairs == expect;
        total[fam][{N, M}] = c.pairs;
        seq_stage[fam][{N, M}] = c.by_length[N];
        field_stage[fam][{N, M}] = c.by_length.contains(M) ? c.by_length.at(M) : 0;
      }
    }
  }
  // Slopes: sequence stage vs N at each M (all families); field stage vs M
  // at each N (feature tower and hierarchical field stage); Vanilla total vs M.
  double worst_n = 0.0, worst_m = 0.0, vanilla_m = 0.0;
  for (const auto& [fam, counts] : seq_stage) {
    for (auto M : Ms) {
      std::vector<double> x, y;
      for (auto N : Ns) {
        x.push_back(std::log(static_cast<double>(N)));
        y.push_back(std::log(static_cast<double>(counts.at({N, M}))));
      }
      worst_n = std::max(worst_n, std::abs(oracle::slope(x, y) - 2.0));
    }
    for (auto N : Ns) {
      std::vector<double> x, y, yt;
      for (auto M : Ms) {
        x.push_back(std::log(static_cast<double>(M)));
        y.push_back(std::log(static_cast<double>(std::max<std::uint64_t>(field_stage[fam].at({N, M}), 1))));
        yt.push_back(std::log(static_cast<double>(total[fam].at({N, M}))));
      }
      if (fam == "Vanilla") {
        vanilla_m = std::max(vanilla_m, std::abs(oracle::slope(x, yt)));
      } else {
        worst_m = std::max(worst_m, std::abs(oracle::slope(x, y) - 2.0));
      }
    }
  }
  const bool ok = exact && worst_n <= 0.05 && worst_m <= 0.05 && vanilla_m <= 0.05;
  return {ok, fmt("%zu forwards, closed forms exact: %s; max |slope-2| in N %.3g, in M (field/feature stage) %.3g; "
                  "Vanilla slope in M %.3g",
                  forwards, exact ? "yes" : "no", worst_n, worst_m, vanilla_m)};
}

// ---- 5-8: experiments -------------------------------------------------------

json fraud_data(std::size_t entities, double fraud_rate, double temporal = 0.9, double cross = 0.1) {
  return {{"generator",
           {{"entities", entities},
            {"rows_per_entity", 105},
            {"fraud_rate", fraud_rate},
            {"temporal_signal_strength", temporal},
            {"cross_feature_signal_strength", cross}}},
          {"task", "fraud"}};
}

double f1_of(const bench::ArmResult& a) { return a.metrics.at("f1").get<double>(); }

const bench::ArmResult& arm(const bench::RunReport& r, const std::string& name) {
  for (const auto& a : r.arms) {
    if (a.name == name) return a;
  }
  throw std::runtime_error("missing arm " + name);
}

std::size_t threads() {
  const auto hw = std::thread::hardware_concurrency();
  return hw == 0 ? 2 : hw;
}

Outcome ablation() {
  const json doc = {{"seed", 1},
                    {"data", fraud_data(1000, 0.05)},
                    {"preprocess", {{"bins", 16}}},
                    {"model", {{"family", "TwinTower"}, {"hidden", 16}, {"heads", 2}}},
                    {"train",
                     {{"lr", 1e-3}, {"batch_size", 32}, {"epochs", 8}, {"window", 10}, {"stride", 5}, {"patience", 3},
                      {"dropout", 0.1}, {"mlm_probability", nullptr}}}};
  const auto rep = bench::ablate_towers(bench::ExperimentConfig::from_json(doc), {threads(), false});
  const double both = f1_of(arm(rep, "Both")), time = f1_of(arm(rep, "TimeOnly")), feat = f1_of(arm(rep, "FeatureOnly"));
  const bool ok = time >= 2.0 * feat && both >= 0.95 * time;
  return {ok, fmt("%zu train windows; test F1 Both %.4f, TimeOnly %.4f, FeatureOnly %.4f (ratio %.2f, Both/TimeOnly %.3f)",
                  arm(rep, "Both").train_windows + 0, both, time, feat, feat > 0 ? time / feat : INFINITY, both / time)};
}

Outcome upsampling() {
  const json doc = {{"seed", 1},
                    {"data", fraud_data(1000, 0.005)},
                    {"preset", "fraud_twintower"},
                    {"model", {{"hidden", 16}, {"heads", 2}}},
                    {"train", {{"epochs", 10}, {"stride", 5}, {"patience", 100}}},
                    {"arms",
                     {{{"name", "none"}, {"overrides", {{"upsample", {{"method", "none"}}}}}},
                      {{"name", "smote"}, {"overrides", {{"upsample", {{"method", "smote"}, {"k", 5}, {"target_ratio", 1.0}}}}}}}}};
  const auto rep = bench::run_experiment(bench::ExperimentConfig::from_json(doc), {threads(), false});
  const auto& none = arm(rep, "none");
  const auto& smote = arm(rep, "smote");
  const double a = f1_of(none), b = f1_of(smote);
  const bool ok = b > a && b - a >= 0.05;
  return {ok, fmt("minority F1 without %.4f (P %.3f R %.3f), with SMOTE %.4f (P %.3f R %.3f, +%zu synthetic); gain %.4f", a,
                  none.metrics.at("precision").get<double>(), none.metrics.at("recall").get<double>(), b,
                  smote.metrics.at("precision").get<double>(), smote.metrics.at("recall").get<double>(),
                  smote.synthetic_windows, b - a)};
}

Outcome pretraining() {
  std::size_t wins = 0, mlm_drops = 0;
  std::string detail;
  const std::vector<std::uint64_t> seeds = {1, 2, 3};
  for (auto seed : seeds) {
    const json doc = {{"seed", seed},
                      {"data", fraud_data(1000, 0.05)},
                      {"preprocess", {{"bins", 16}}},
                      {"model", {{"family", "Hierarchical"}, {"hidden", 16}, {"heads", 2}}},
                      {"train",
                       {{"lr", 1e-3}, {"batch_size", 32}, {"epochs", 8}, {"window", 10}, {"stride", 5}, {"patience", 100},
                        {"dropout", 0.1}, {"mlm_probability", 0.15}}},
                      {"pretrain", {{"epochs", 3}, {"label_fraction", 0.05}}},
                      {"arms",
                       {{{"name", "pretrained"}, {"overrides", {{"pretrain", {{"enabled", true}}}}}},
                        {{"name", "scratch"}, {"overrides", {{"pretrain", {{"enabled", false}}}}}}}}};
    const auto rep = bench::run_experiment(bench::ExperimentConfig::from_json(doc), {2, false});
    const auto& pre = arm(rep, "pretrained");
    const auto& scr = arm(rep, "scratch");
    const auto& ph = pre.pretrain_history.epochs;
    const bool drop = ph.size() == 3 && ph[2].train_loss < ph[0].train_loss;
    mlm_drops += drop;
    wins += pre.val_metric >= scr.val_metric;
    detail += fmt("seed %llu: MLM loss %.4f -> %.4f, val F1 pretrained %.4f vs scratch %.4f (%zu labeled); ",
                  static_cast<unsigned long long>(seed), ph.empty() ? NAN : ph.front().train_loss,
                  ph.empty() ? NAN : ph.back().train_loss, pre.val_metric, scr.val_metric, pre.train_windows);
  }
  const bool ok = mlm_drops == seeds.size() && 2 * wins > seeds.size();
  return {ok, detail + fmt("pretrained wins %zu/%zu", wins, seeds.size())};
}

json strip_timing(json j) {
  j.erase("timing");
  return j;
}

bool metrics_close(const json& a, const json& b) {
  for (const auto& [k, v] : a.items()) {
    if (v.is_null() != b.at(k).is_null()) return false;
    if (v.is_number() && std::abs(v.get<double>() - b.at(k).get<double>()) > 1e-12) return false;
  }
  return true;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const auto tmp = std::filesystem::temp_directory_path() / ("tabseq_acceptance_" + std::to_string(::getpid()));
  std::filesystem::remove_all(tmp);
  json doc = {{"seed", 11},
              {"data", fraud_data(60, 0.1)},
              {"preprocess", {{"bins", 8}}},
              {"model", {{"hidden", 8}, {"heads", 2}}},
              {"train", {{"epochs", 2}, {"window", 6}, {"stride", 3}, {"batch_size", 16}}},
              {"arms",
               {{{"name", "vanilla"}, {"overrides", {{"model", {{"family", "Vanilla"}}}}}},
                {{"name", "twin_tower_smote"},
                 {"overrides", {{"model", {{"family", "TwinTower"}}}, {"upsample", {{"method", "smote"}}}}}},
                {{"name", "hierarchical"},
                 {"overrides", {{"model", {{"family", "Hierarchical"}}}, {"pretrain", {{"enabled", true}, {"epochs", 1}}}}}},
                {{"name", "joint"},
                 {"overrides",
                  {{"model", {{"family", "HierarchicalJoint"}}}, {"pretrain", {{"enabled", true}, {"epochs", 1}}}}}}}}};
  doc["out_dir"] = (tmp / "a").string();
  const auto r1 = bench::run_experiment(bench::ExperimentConfig::from_json(doc), {1, true});
  doc["out_dir"] = (tmp / "b").string();
  const auto r2 = bench::run_experiment(bench::ExperimentConfig::from_json(doc), {4, true});
  const bool same_json = strip_timing(r1.to_json()) == strip_timing(r2.to_json());
  bool same_files = true;
  for (const auto& a : r1.arms) {
    same_files &= file_bytes(tmp / "a" / a.checkpoint_path) == file_bytes(tmp / "b" / a.checkpoint_path);
  }
  // Rebuild each arm from the config embedded in the report.
  bool roundtrip = true;
  const json saved = json::parse(file_bytes(tmp / "a" / "report.json"));
  for (const auto& a : saved.at("arms")) {
    const auto rerun = bench::run_experiment(bench::ExperimentConfig::from_json(a.at("config")), {1, false});
    roundtrip &= metrics_close(a.at("metrics"), rerun.arms.at(0).metrics) &&
                 a.at("checkpoint_digest") == rerun.arms.at(0).checkpoint_digest;
  }
  std::filesystem::remove_all(tmp);
  const bool ok = same_json && same_files && roundtrip;
  return {ok, fmt("%zu arms (all four families); report JSON identical: %s; checkpoint files identical: %s; "
                  "rerun from embedded config matches: %s",
                  r1.arms.size(), same_json ? "yes" : "no", same_files ? "yes" : "no", roundtrip ? "yes" : "no")};
}

// ---- 9: presets ------------------------------------------------------------

Outcome presets() {
  struct Want {
    const char* name;
    double lr;
    double dropout;
    std::size_t heads, hidden, window;
    std::optional<std::size_t> stride;
    std::size_t batch;
    std::optional<double> mlm;
    std::optional<std::uint64_t> seed;
    const char* family;
  };
  const Want wants[] = {
      {"fraud_tabbert", 5e-5, 0.1, 12, 768, 10, 5, 8, 0.15, std::nullopt, "Hierarchical"},
      {"fraud_twintower", 4.35e-5, 0.134, 8, 256, 10, 1, 256, std::nullopt, std::nullopt, "TwinTower"},
      {"fraud_luna", 5e-5, 0.1, 12, 768, 10, 10, 8, 0.15, std::nullopt, "HierarchicalJoint"},
      {"default_tabbert", 0.01, 0.1, 12, 768, 12, std::nullopt, 16, 0.15, 9, "Hierarchical"},
      {"default_twintower", 1e-4, 0.1, 12, 512, 12, std::nullopt, 512, std::nullopt, 42, "TwinTower"},
  };
  bool ok = true;
  std::string bad;
  for (const auto& w : wants) {
    const Preset p = load_preset(w.name);
    const Preset back = preset_from_json(json::parse(preset_to_json(p).dump()));
    bool good = p.train.lr == w.lr && p.train.optimizer == "Adam" && p.train.dropout == w.dropout &&
                p.model.at("heads").get<std::size_t>() == w.heads && p.model.at("hidden").get<std::size_t>() == w.hidden &&
                p.model.at("family").get<std::string>() == w.family && p.train.window == w.window &&
                p.train.batch_size == w.batch && p.train.mlm_probability == w.mlm;
    if (w.stride) good &= p.train.stride == *w.stride;
    if (w.seed) good &= p.train.seed == *w.seed;
    good &= back.train == p.train && back.model == p.model && back.name == p.name;
    if (!good) bad += std::string(w.name) + " ";
    ok &= good;
  }
  const Preset gbm = load_preset("default_lightgbm");
  const json& b = gbm.baseline;
  const bool gbm_ok = b.at("num_leaves") == 100 && b.at("min_data_in_leaf") == 2 && b.at("num_boost_round") == 2000 &&
                      b.at("early_stopping_rounds") == 50 && b.at("learning_rate").get<double>() == 0.01 &&
                      b.at("seed") == 42 && b.at("max_depth") == -1 &&
                      preset_from_json(preset_to_json(gbm)).baseline == b;
  ok &= gbm_ok;
  return {ok, fmt("5 model presets + boosting baseline round-trip exactly: %s%s", ok ? "yes" : "no; failing: ",
                  (bad + (gbm_ok ? "" : "default_lightgbm")).c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"metric arithmetic", metric_arithmetic}, {"rank-metric oracles", rank_oracles},
      {"gradient correctness", gradients},      {"attention-pair accounting", complexity},
      {"tower ablation direction", ablation},   {"upsampling direction", upsampling},
      {"pretraining behaviour", pretraining},    {"determinism", determinism},
      {"preset fidelity", presets}};
  std::vector<std::size_t> pick;
  for (int i = 1; i < argc; ++i) pick.push_back(static_cast<std::size_t>(std::atoi(argv[i])));
  if (pick.empty()) {
    for (std::size_t i = 1; i <= criteria.size(); ++i) pick.push_back(i);
  }
  int failed = 0;
  for (auto k : pick) {
    if (k < 1 || k > criteria.size()) {
      std::fprintf(stderr, "no criterion %zu\n", k);
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k - 1].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %zu %s: %s (%.1fs) %s\n", k, o.pass ? "PASS" : "FAIL", criteria[k - 1].first, secs,
                o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
