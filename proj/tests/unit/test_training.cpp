#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tabseq/errors.hpp"
#include "tabseq/synthgen.hpp"
#include "tabseq/training.hpp"

using namespace tabseq;

namespace {

// Two features, label = [x0 + x1 > 0] with a margin.
std::vector<Example> separable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> out;
  while (out.size() < n) {
    const double a = rng.normal(), b = rng.normal();
    if (std::abs(a + b) < 0.3) continue;
    Example e;
    e.x = {1, 2, {a, b}};
    e.label = a + b > 0 ? 1.0 : 0.0;
    out.push_back(e);
  }
  return out;
}

ModelSpec toy_spec() {
  ModelSpec s;
  s.family = Family::Vanilla;
  s.n = 1;
  s.m = 2;
  s.hidden = 8;
  s.heads = 2;
  s.dropout = 0.0;
  return s;
}

PreparedData small_tokens(std::size_t bins, std::uint64_t seed, std::size_t entities = 30) {
  synth::GenConfig g;
  g.entities = entities;
  g.rows_per_entity = 20;
  g.fraud_rate = 0.1;
  g.seed = seed;
  PrepareOptions po;
  po.window = 5;
  po.stride = 5;
  po.bins = bins;
  po.tokens = true;
  return prepare_examples(synth::generate_fraud_dataset(g), po);
}

}  // namespace

TEST_CASE("mask fraction concentrates at p and skips specials") {
  TokenGrid g;
  g.rows = 1000;
  g.cols = 1000;
  g.ids.assign(1000000, kSpecialTokens + 1);
  const auto m = mask_tokens(g, 0.15, 1);
  const double frac = static_cast<double>(m.masked_count()) / 1e6;
  CHECK(std::abs(frac - 0.15) <= 0.005 * 0.15);
  CHECK(m.masked_count() == mask_tokens(g, 0.15, 1).masked_count());
  CHECK(m.grid.ids == mask_tokens(g, 0.15, 1).grid.ids);
  for (std::size_t c = 0; c < 1000; ++c) {
    if (m.targets[c] >= 0) CHECK(m.grid.ids[c] == kMaskToken);
  }
  TokenGrid pad;
  pad.rows = 10;
  pad.cols = 10;
  pad.ids.assign(100, kPadToken);
  pad.ids[5] = kClsToken;
  CHECK(mask_tokens(pad, 0.9, 2).masked_count() == 0);
  CHECK_THROWS_AS(mask_tokens(pad, 0.0, 2), RangeError);
}

TEST_CASE("separable toy is learned") {
  const auto train = separable(200, 1);
  Model m(toy_spec(), 1);
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.epochs = 50;
  cfg.batch_size = 16;
  cfg.patience = 50;
  cfg.mlm_probability.reset();
  cfg.seed = 1;
  train_supervised(m, train, {}, cfg);
  const auto p = m.predict(train);
  std::size_t right = 0;
  for (std::size_t i = 0; i < train.size(); ++i) right += (p[i] >= 0.5) == (train[i].label == 1.0);
  CHECK(static_cast<double>(right) / 200.0 >= 0.99);
}

TEST_CASE("zero learning rate leaves parameters and loss unchanged") {
  const auto train = separable(64, 2);
  Model m(toy_spec(), 2);
  const auto before = m.params().snapshot();
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 3;
  cfg.patience = 10;
  cfg.mlm_probability.reset();
  const auto h = train_supervised(m, train, train, cfg);
  CHECK(m.params().snapshot() == before);
  REQUIRE(h.epochs.size() == 3);
  CHECK(h.epochs[0].val_loss == h.epochs[2].val_loss);
}

TEST_CASE("training is deterministic and early stopping keeps the best epoch") {
  const auto train = separable(96, 3), val = separable(40, 4);
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.epochs = 12;
  cfg.patience = 2;
  cfg.dropout = 0.1;
  cfg.mlm_probability.reset();
  cfg.seed = 8;
  auto spec = toy_spec();
  spec.dropout = 0.1;
  Model a(spec, 3), b(spec, 3);
  const auto ha = train_supervised(a, train, val, cfg);
  const auto hb = train_supervised(b, train, val, cfg);
  CHECK(ha.same_values(hb));
  CHECK(a.params().snapshot() == b.params().snapshot());
  double best = 1e300;
  for (const auto& e : ha.epochs) best = std::min(best, e.val_loss);
  CHECK(ha.best_val_loss == best);
  CHECK(mean_loss(a, val, 16) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("pretraining lowers MLM loss; heavier masking ends higher") {
  auto pd = small_tokens(8, 5, 80);
  ModelSpec s;
  s.family = Family::Hierarchical;
  s.n = 5;
  s.m = pd.encoding.schema.attribute_count();
  s.hidden = 16;
  s.heads = 2;
  s.dropout = 0.0;
  s.head = HeadKind::MLM;
  s.attach(pd.encoding.vocabulary);
  TrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.mlm_probability = 0.15;
  cfg.seed = 2;
  Model m(s, 2);
  const auto h = pretrain_mlm(m, pd.train, pd.val, cfg);
  REQUIRE(h.epochs.size() == 3);
  CHECK(h.epochs[2].train_loss < h.epochs[0].train_loss);

  auto loss_at = [&](double p) {
    Model mm(s, 2);
    auto c = cfg;
    c.mlm_probability = p;
    c.epochs = 6;
    return pretrain_mlm(mm, pd.train, pd.val, c).epochs.back().val_loss;
  };
  CHECK(loss_at(0.15) < loss_at(0.99));
}

TEST_CASE("fine_tune checks the vocabulary fingerprint") {
  auto pd = small_tokens(8, 6);
  ModelSpec s;
  s.family = Family::Hierarchical;
  s.n = 5;
  s.m = pd.encoding.schema.attribute_count();
  s.hidden = 8;
  s.heads = 2;
  s.head = HeadKind::MLM;
  s.attach(pd.encoding.vocabulary);
  Model m(s, 1);
  const auto hash = hash_hex(pd.encoding.token_hash());
  const auto ck = make_checkpoint(m, hash, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto other = small_tokens(6, 6);
  CHECK_THROWS_AS(fine_tune(ck, hash_hex(other.encoding.token_hash()), HeadKind::BinaryClassifier, pd.train, pd.val, cfg),
                  VocabularyMismatch);
  const auto ft = fine_tune(ck, hash, HeadKind::BinaryClassifier, pd.train, pd.val, cfg);
  CHECK(ft.history.epochs.empty());
  CHECK(ft.model.spec().head == HeadKind::BinaryClassifier);
  const auto back = model_from_checkpoint(nn::checkpoint_from_bytes(nn::checkpoint_bytes(ck)));
  CHECK(back.spec() == m.spec());
}

TEST_CASE("presets load and round-trip") {
  for (const char* name : {"fraud_tabbert", "fraud_twintower", "fraud_luna", "default_tabbert", "default_twintower",
                           "default_lightgbm"}) {
    const auto p = load_preset(name);
    const auto q = preset_from_json(preset_to_json(p));
    CHECK(q.train == p.train);
    CHECK(q.model == p.model);
    CHECK(q.baseline == p.baseline);
  }
  CHECK(load_preset("fraud_twintower").train.lr == 4.35e-5);
  CHECK(load_preset("fraud_twintower").train.dropout == 0.134);
  CHECK_THROWS_AS(load_preset("no_such_preset"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"learning_rate", 1}}), ConfigError);
}

TEST_CASE("entity split keeps entities whole") {
  synth::GenConfig g;
  g.entities = 40;
  g.rows_per_entity = 12;
  g.seed = 1;
  const auto d = synth::generate_fraud_dataset(g);
  const auto parts = split_entities(d, 0.15, 0.15, 3);
  std::size_t val = 0, test = 0;
  for (const auto& [e, p] : parts) {
    val += p == Part::Val;
    test += p == Part::Test;
  }
  CHECK(parts.size() == 40);
  CHECK(val == 6);
  CHECK(test == 6);
  CHECK(parts == split_entities(d, 0.15, 0.15, 3));
}
