#include "tabseq/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>

#include "tabseq/errors.hpp"
#include "tabseq/metrics.hpp"

#ifndef TABSEQ_SOURCE_PRESET_DIR
#define TABSEQ_SOURCE_PRESET_DIR "presets"
#endif

namespace tabseq {

using nn::Tape;
using nn::Var;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be finite and >= 0");
  if (optimizer != "Adam") fail("optimizer '" + optimizer + "' is not supported (Adam only)");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (mlm_probability && !(*mlm_probability > 0.0 && *mlm_probability < 1.0)) fail("mlm_probability must be in (0, 1)");
  if (window == 0 || stride == 0) fail("window and stride must be >= 1");
  for (double f : {train_fraction, val_fraction, test_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) fail("split fractions must be in [0, 1]");
  }
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) fail("split fractions must sum to 1");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["lr"] = lr;
  j["optimizer"] = optimizer;
  j["dropout"] = dropout;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["mlm_probability"] = mlm_probability ? nlohmann::json(*mlm_probability) : nlohmann::json(nullptr);
  j["window"] = window;
  j["stride"] = stride;
  j["seed"] = seed;
  j["patience"] = patience;
  j["train_fraction"] = train_fraction;
  j["val_fraction"] = val_fraction;
  j["test_fraction"] = test_fraction;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {"lr", "optimizer", "dropout", "batch_size", "epochs",
                                                 "mlm_probability", "window", "stride", "seed", "patience",
                                                 "train_fraction", "val_fraction", "test_fraction"};
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("train config: unknown key '" + k + "'");
  }
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.optimizer = j.value("optimizer", c.optimizer);
    c.dropout = j.value("dropout", c.dropout);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    if (j.contains("mlm_probability")) {
      const auto& p = j.at("mlm_probability");
      c.mlm_probability = p.is_null() ? std::nullopt : std::optional<double>(p.get<double>());
    }
    c.window = j.value("window", c.window);
    c.stride = j.value("stride", c.stride);
    c.seed = j.value("seed", c.seed);
    c.patience = j.value("patience", c.patience);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::filesystem::path preset_dir() {
  if (const char* env = std::getenv("TABSEQ_PRESET_DIR"); env != nullptr && *env != '\0') return env;
  return TABSEQ_SOURCE_PRESET_DIR;
}

Preset preset_from_json(const nlohmann::json& j) {
  Preset p;
  try {
    p.name = j.at("name").get<std::string>();
    p.description = j.value("description", "");
    p.model = j.value("model", nlohmann::json::object());
    p.train = TrainConfig::from_json(j.value("train", nlohmann::json::object()));
    p.baseline = j.value("baseline", nlohmann::json::object());
    for (const auto& [k, v] : j.items()) {
      if (k != "name" && k != "description" && k != "model" && k != "train" && k != "baseline") {
        throw ConfigError("preset: unknown key '" + k + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("preset: ") + e.what());
  }
  return p;
}

nlohmann::json preset_to_json(const Preset& p) {
  nlohmann::json j = {{"name", p.name}, {"description", p.description}, {"model", p.model}, {"train", p.train.to_json()}};
  if (!p.baseline.empty()) j["baseline"] = p.baseline;
  return j;
}

Preset load_preset(std::string_view name_or_path) {
  std::filesystem::path path(name_or_path);
  if (path.extension() != ".json") path = preset_dir() / (std::string(name_or_path) + ".json");
  std::ifstream f(path);
  if (!f) throw ConfigError("preset '" + std::string(name_or_path) + "' not found (looked for " + path.string() + ")");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("preset " + path.string() + ": " + e.what());
  }
  return preset_from_json(j);
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_metric,seconds\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + num(e.train_loss) + "," + num(e.val_loss) + "," + num(e.val_metric) + "," +
           num(e.seconds) + "\n";
  }
  return out;
}

void TrainHistory::save_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << to_csv();
}

bool TrainHistory::same_values(const TrainHistory& o) const {
  if (epochs.size() != o.epochs.size() || best_epoch != o.best_epoch) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& a = epochs[i];
    const auto& b = o.epochs[i];
    if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.val_loss != b.val_loss || a.val_metric != b.val_metric) {
      return false;
    }
  }
  return true;
}

MaskedTokens mask_tokens(const TokenGrid& g, double p, std::uint64_t seed) {
  if (!(p > 0.0 && p < 1.0)) throw RangeError("mask probability must be in (0, 1)");
  MaskedTokens out{g, std::vector<std::int32_t>(g.ids.size(), -1)};
  out.grid.masked.assign(g.ids.size(), 0);
  Rng rng(seed);
  for (std::size_t c = 0; c < g.ids.size(); ++c) {
    // One draw per cell keeps the pattern aligned across grids with specials.
    const bool pick = rng.bernoulli(p);
    if (!pick || Vocabulary::is_special(g.ids[c])) continue;
    out.targets[c] = g.ids[c];
    out.grid.ids[c] = kMaskToken;
    out.grid.masked[c] = 1;
  }
  return out;
}

bool higher_is_better(HeadKind head) noexcept { return head == HeadKind::BinaryClassifier; }

double validation_metric(Model& model, std::span<const Example> examples) {
  if (examples.empty()) return 0.0;
  auto scores = model.predict(examples);
  if (model.spec().head == HeadKind::BinaryClassifier) {
    std::vector<std::uint8_t> preds, labels;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      preds.push_back(scores[i] >= 0.5 ? 1 : 0);
      labels.push_back(examples[i].label != 0.0 ? 1 : 0);
    }
    return metrics::f1(preds, labels).f1;
  }
  std::vector<double> targets;
  for (const auto& e : examples) targets.push_back(e.label);
  return metrics::rmse(scores, targets);
}

double mean_loss(Model& model, std::span<const Example> examples, std::size_t batch_size) {
  if (examples.empty()) return 0.0;
  batch_size = std::max<std::size_t>(batch_size, 64);
  double total = 0.0;
  for (std::size_t s = 0; s < examples.size(); s += batch_size) {
    const std::size_t e = std::min(examples.size(), s + batch_size);
    std::vector<const Example*> batch;
    for (std::size_t i = s; i < e; ++i) batch.push_back(&examples[i]);
    Tape t(false);
    total += t.value(model.supervised_loss(t, batch)).data[0] * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(examples.size());
}

namespace {

/// Tracks the divergence rule: non-finite loss, or 3 consecutive epochs
/// above 10x the first epoch's loss.
struct DivergenceGuard {
  std::optional<double> initial;
  std::size_t strikes = 0;
  void check(double loss, std::size_t epoch) {
    if (!std::isfinite(loss)) throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch));
    if (!initial) {
      initial = loss;
      return;
    }
    strikes = loss > 10.0 * *initial ? strikes + 1 : 0;
    if (strikes >= 3) throw DivergenceError("loss above 10x its initial value for 3 epochs (epoch " + std::to_string(epoch) + ")");
  }
};

std::uint64_t dropout_seed(std::uint64_t seed, std::size_t epoch, std::size_t batch) {
  return Rng(seed).split("dropout").split(epoch).split(batch).key();
}

}  // namespace

TrainHistory train_supervised(Model& model, std::span<const Example> train, std::span<const Example> val,
                              const TrainConfig& cfg) {
  cfg.validate();
  if (model.spec().head == HeadKind::MLM) throw ConfigError("train_supervised needs a task head");
  if (train.empty()) throw EmptyResult("no training windows");
  nn::AdamState adam;
  adam.lr = cfg.lr;
  TrainHistory hist;
  std::vector<nn::Tensor> best = model.params().snapshot();
  double best_loss = INFINITY;
  std::size_t since_best = 0;
  DivergenceGuard guard;
  const Rng shuffle_root = Rng(cfg.seed).split("shuffle");
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = shuffle_root.split(epoch);
    rng.shuffle(order.begin(), order.end());
    double sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size, ++batch_index) {
      const std::size_t e = std::min(order.size(), s + cfg.batch_size);
      std::vector<const Example*> batch;
      for (std::size_t i = s; i < e; ++i) batch.push_back(&train[order[i]]);
      model.params().zero_grad();
      Tape t(true, dropout_seed(cfg.seed, epoch, batch_index));
      Var loss = model.supervised_loss(t, batch);
      const double lv = t.value(loss).data[0];
      if (!std::isfinite(lv)) throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch));
      sum += lv * static_cast<double>(batch.size());
      t.backward(loss);
      nn::adam_step(model.params(), adam);
    }
    const double train_loss = sum / static_cast<double>(train.size());
    guard.check(train_loss, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_loss;
    rec.val_loss = val.empty() ? train_loss : mean_loss(model, val, cfg.batch_size);
    rec.val_metric = validation_metric(model, val.empty() ? train : val);
    rec.seconds = seconds_since(t0);
    hist.epochs.push_back(rec);
    if (rec.val_loss < best_loss) {
      best_loss = rec.val_loss;
      best = model.params().snapshot();
      hist.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience && cfg.patience > 0) {
      break;
    }
  }
  if (hist.best_epoch > 0) model.params().restore(best);
  hist.best_val_loss = hist.best_epoch > 0 ? best_loss : 0.0;
  return hist;
}

TrainHistory pretrain_mlm(Model& model, std::span<const Example> train, std::span<const Example> val,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (!cfg.mlm_probability) throw ConfigError("pretraining needs mlm_probability");
  if (model.spec().head != HeadKind::MLM) throw ConfigError("pretrain_mlm needs a hierarchical model with an MLM head");
  if (train.empty()) throw EmptyResult("no pretraining windows");
  const double p = *cfg.mlm_probability;
  nn::AdamState adam;
  adam.lr = cfg.lr;
  TrainHistory hist;
  DivergenceGuard guard;

  std::vector<MaskedTokens> val_masked;
  const Rng val_root = Rng(cfg.seed).split("val_mask");
  for (std::size_t i = 0; i < val.size(); ++i) val_masked.push_back(mask_tokens(val[i].g, p, val_root.split(i).key()));

  const Rng mask_root = Rng(cfg.seed).split("mask");
  const Rng shuffle_root = Rng(cfg.seed).split("shuffle");
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = shuffle_root.split(epoch);
    rng.shuffle(order.begin(), order.end());
    const Rng epoch_masks = mask_root.split(epoch);
    double sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size, ++batch_index) {
      const std::size_t e = std::min(order.size(), s + cfg.batch_size);
      std::vector<MaskedTokens> masked;
      masked.reserve(e - s);
      for (std::size_t i = s; i < e; ++i) masked.push_back(mask_tokens(train[order[i]].g, p, epoch_masks.split(order[i]).key()));
      std::vector<const MaskedTokens*> batch;
      for (const auto& m : masked) batch.push_back(&m);
      model.params().zero_grad();
      Tape t(true, dropout_seed(cfg.seed, epoch, batch_index));
      Var loss = model.mlm_loss(t, batch);
      const double lv = t.value(loss).data[0];
      if (!std::isfinite(lv)) throw DivergenceError("MLM loss became non-finite at epoch " + std::to_string(epoch));
      sum += lv * static_cast<double>(batch.size());
      t.backward(loss);
      nn::adam_step(model.params(), adam);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = sum / static_cast<double>(train.size());
    guard.check(rec.train_loss, epoch);
    if (!val_masked.empty()) {
      double vs = 0.0;
      for (std::size_t s = 0; s < val_masked.size(); s += 64) {
        std::vector<const MaskedTokens*> batch;
        for (std::size_t i = s; i < std::min(val_masked.size(), s + 64); ++i) batch.push_back(&val_masked[i]);
        Tape t(false);
        vs += t.value(model.mlm_loss(t, batch)).data[0] * static_cast<double>(batch.size());
      }
      rec.val_loss = vs / static_cast<double>(val_masked.size());
    } else {
      rec.val_loss = rec.train_loss;
    }
    rec.val_metric = rec.val_loss;
    rec.seconds = seconds_since(t0);
    hist.epochs.push_back(rec);
  }
  if (!hist.epochs.empty()) {
    hist.best_epoch = hist.epochs.size();
    hist.best_val_loss = hist.epochs.back().val_loss;
  }
  return hist;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nn::Checkpoint make_checkpoint(const Model& model, std::string vocab_hash, std::uint64_t seed, nn::DType dtype) {
  nn::Checkpoint ck;
  ck.model = model.spec().to_json();
  ck.vocab_hash = std::move(vocab_hash);
  ck.seed = seed;
  ck.dtype = dtype;
  ck.params = model.params();
  return ck;
}

Model model_from_checkpoint(const nn::Checkpoint& ck) {
  Model m(ModelSpec::from_json(ck.model), ck.seed);
  if (nn::copy_matching(ck.params, m.params()) != m.params().size() || ck.params.size() != m.params().size()) {
    throw IoError("checkpoint parameters do not match its model spec");
  }
  for (std::size_t i = 0; i < m.params().size(); ++i) m.params()[i].frozen = ck.params[i].frozen;
  return m;
}

FineTuneResult fine_tune(const nn::Checkpoint& pretrained, std::string_view data_vocab_hash, HeadKind head,
                         std::span<const Example> train, std::span<const Example> val, const TrainConfig& cfg) {
  if (pretrained.vocab_hash != data_vocab_hash) {
    throw VocabularyMismatch("checkpoint vocabulary " + pretrained.vocab_hash + " does not match data encoding " +
                             std::string(data_vocab_hash));
  }
  if (head == HeadKind::MLM) throw ConfigError("fine-tuning needs a task head");
  ModelSpec spec = ModelSpec::from_json(pretrained.model);
  if (!spec.hierarchical()) throw ConfigError("fine_tune expects a hierarchical checkpoint");
  spec.head = head;
  Model model(spec, cfg.seed);
  nn::copy_matching(pretrained.params, model.params());
  TrainHistory h;
  if (cfg.epochs > 0) h = train_supervised(model, train, val, cfg);
  return {std::move(model), std::move(h)};
}

std::map<std::string, Part> split_entities(const Dataset& d, double val_fraction, double test_fraction,
                                           std::uint64_t seed) {
  std::vector<std::string> entities;
  for (const auto& r : d.records()) {
    if (entities.empty() || entities.back() != r.entity) entities.push_back(r.entity);
  }
  Rng rng = Rng(seed).split("split");
  rng.shuffle(entities.begin(), entities.end());
  const auto n = static_cast<double>(entities.size());
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * n));
  const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * n));
  std::map<std::string, Part> out;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    out[entities[i]] = i < n_test ? Part::Test : i < n_test + n_val ? Part::Val : Part::Train;
  }
  return out;
}

PreparedData prepare_examples(const Dataset& raw, const PrepareOptions& opt) {
  const Dataset d = impute_missing(raw);
  const auto parts = split_entities(d, opt.val_fraction, opt.test_fraction, opt.seed);
  auto train_only = [&parts](const Record& r) { return parts.at(r.entity) == Part::Train; };
  PreparedData out{fit_encoding(d, opt.bins, train_only), {}, {}, {}};
  const auto windows = make_windows(d, opt.window, opt.stride, opt.rule);
  const Encoding& enc = out.encoding;
  for (const auto& w : windows) {
    Example e;
    if (opt.features) e.x = encode_numeric(w, enc.schema, enc.label_tables, enc.stats);
    if (opt.tokens) e.g = encode_tokens(w, enc.schema, enc.vocabulary, enc.quantizers, &enc.stats);
    e.label = w.label.value_or(0.0);
    switch (parts.at(w.entity)) {
      case Part::Train: out.train.push_back(std::move(e)); break;
      case Part::Val: out.val.push_back(std::move(e)); break;
      case Part::Test: out.test.push_back(std::move(e)); break;
    }
  }
  return out;
}

}  // namespace tabseq
