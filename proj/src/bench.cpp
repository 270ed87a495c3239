#include "tabseq/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include "tabseq/metrics.hpp"
#include "tabseq/rng.hpp"

namespace tabseq::bench {

namespace {

using json = nlohmann::json;

const std::set<std::string> kTopKeys = {"seed",    "data",     "preprocess", "preset", "model", "train",
                                        "upsample", "pretrain", "arms",       "out_dir", "name"};

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.contains(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

json section(const json& doc, const char* key) {
  if (!doc.contains(key) || doc.at(key).is_null()) return json::object();
  return doc.at(key);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) { return mix64(seed ^ fnv1a(tag)); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool valid_arm_name(const std::string& s) {
  if (s.empty() || s == "." || s == "..") return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

// Data preparation shared by arms with identical data settings.
struct DataKey {
  std::string text;
  bool operator<(const DataKey& o) const { return text < o.text; }
};

DataKey data_key(const ResolvedArm& a, bool tokens) {
  json k = {{"data", a.config.at("data")},
            {"bins", a.bins},
            {"window", a.train.window},
            {"stride", a.train.stride},
            {"val", a.train.val_fraction},
            {"test", a.train.test_fraction},
            {"seed", a.data_seed},
            {"tokens", tokens}};
  return {k.dump()};
}

Dataset load_data(const ResolvedArm& a) {
  if (a.generator) {
    return a.task == LabelRule::Binary ? synth::generate_fraud_dataset(*a.generator)
                                       : synth::generate_regression_dataset(*a.generator);
  }
  return load_csv(a.csv, Schema::load(a.schema));
}

std::shared_ptr<const PreparedData> prepare(const ResolvedArm& a) {
  auto out = std::make_shared<PreparedData>(prepare_examples(load_data(a), prepare_options(a)));
  if (out->train.empty()) throw EmptyResult("no training windows (window longer than every entity?)");
  return out;
}

json metrics_for(const std::vector<double>& scores, std::span<const Example> test, LabelRule task,
                 std::vector<std::string>& warnings) {
  json m = {{"precision", nullptr}, {"recall", nullptr},  {"f1", nullptr},  {"gini", nullptr},
            {"capture_at_4", nullptr}, {"metric_m", nullptr}, {"rmse", nullptr}};
  if (test.empty()) {
    warnings.push_back("empty test split");
    return m;
  }
  if (task == LabelRule::Regression) {
    std::vector<double> y;
    for (const auto& e : test) y.push_back(e.label);
    m["rmse"] = metrics::rmse(scores, y);
    return m;
  }
  std::vector<std::uint8_t> preds, labels;
  for (std::size_t i = 0; i < test.size(); ++i) {
    preds.push_back(scores[i] >= 0.5 ? 1 : 0);
    labels.push_back(test[i].label != 0.0 ? 1 : 0);
  }
  const auto pr = metrics::f1(preds, labels);
  m["precision"] = pr.precision;
  m["recall"] = pr.recall;
  m["f1"] = pr.f1;
  try {
    const auto rk = metrics::rank_metrics(scores, labels);
    m["gini"] = rk.gini;
    m["capture_at_4"] = rk.capture;
    m["metric_m"] = rk.m_score;
  } catch (const DegenerateLabels&) {
    warnings.push_back("test split has a single class; ranking metrics omitted");
  }
  const double ties = metrics::tie_fraction(scores);
  if (ties > 0.001) warnings.push_back("tied scores on " + fmt(100.0 * ties) + "% of test windows");
  return m;
}

std::vector<Example> labeled_subset(const std::vector<Example>& train, double fraction, std::uint64_t seed) {
  if (fraction >= 1.0) return train;
  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = Rng(seed).split("labels");
  rng.shuffle(idx.begin(), idx.end());
  auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train.size())));
  keep = std::clamp<std::size_t>(keep, 1, train.size());
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  std::vector<Example> out;
  out.reserve(keep);
  for (auto i : idx) out.push_back(train[i]);
  return out;
}

// Recursive object merge. Unlike RFC 7396, null is kept as a value, since
// "mlm_probability": null is meaningful.
void deep_merge(json& base, const json& patch) {
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (const auto& [k, v] : patch.items()) {
    if (v.is_object() && base.contains(k) && base.at(k).is_object()) {
      deep_merge(base[k], v);
    } else {
      base[k] = v;
    }
  }
}

}  // namespace

PrepareOptions prepare_options(const ResolvedArm& a) {
  PrepareOptions po;
  po.window = a.train.window;
  po.stride = a.train.stride;
  po.bins = a.bins;
  po.rule = a.task;
  po.val_fraction = a.train.val_fraction;
  po.test_fraction = a.train.test_fraction;
  po.seed = a.data_seed;
  po.tokens = a.model.hierarchical();
  po.features = !po.tokens;
  return po;
}

std::size_t upsample_examples(const ResolvedArm& a, std::vector<Example>& train, std::vector<std::string>& warnings) {
  if (a.upsample == Upsample::None) return 0;
  std::vector<Example> minority;
  for (const auto& e : train) {
    if (e.label != 0.0) minority.push_back(e);
  }
  const std::size_t majority = train.size() - minority.size();
  const std::uint64_t seed = derive_seed(a.seed, "upsample");
  std::size_t before = train.size();
  if (a.upsample == Upsample::Smote && !a.model.hierarchical()) {
    std::vector<FeatureMatrix> xs;
    xs.reserve(minority.size());
    for (const auto& e : minority) xs.push_back(e.x);
    SmoteConfig sc = a.smote;
    sc.seed = seed;
    for (auto& x : smote_upsample(xs, majority, sc)) {
      Example e;
      e.x = std::move(x);
      e.label = 1.0;
      train.push_back(std::move(e));
    }
  } else {
    if (a.upsample == Upsample::Smote) warnings.push_back("token model: smote replaced by duplication");
    for (auto& e : duplicate_upsample(minority, majority, a.smote.target_ratio, seed)) train.push_back(std::move(e));
  }
  return train.size() - before;
}

std::string_view to_string(Upsample u) noexcept {
  switch (u) {
    case Upsample::None: return "none";
    case Upsample::Smote: return "smote";
    case Upsample::Duplicate: return "duplicate";
  }
  return "none";
}

Upsample upsample_from_string(std::string_view s) {
  if (s == "none") return Upsample::None;
  if (s == "smote") return Upsample::Smote;
  if (s == "duplicate") return Upsample::Duplicate;
  throw ConfigError("unknown upsampling method '" + std::string(s) + "' (none|smote|duplicate)");
}

ExperimentConfig ExperimentConfig::from_json(json j) {
  check_keys(j, kTopKeys, "experiment config");
  ExperimentConfig c{std::move(j)};
  // Resolve every arm once so errors surface before any work starts.
  for (const auto& a : c.arms()) (void)resolve_arm(c, a);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(std::move(j));
}

std::vector<Arm> ExperimentConfig::arms() const {
  std::vector<Arm> out;
  if (!doc.contains("arms") || doc.at("arms").is_null() || doc.at("arms").empty()) {
    out.push_back({"default", json::object()});
    return out;
  }
  std::set<std::string> seen;
  for (const auto& a : doc.at("arms")) {
    Arm arm;
    if (a.is_string()) {
      arm.name = a.get<std::string>();
    } else if (a.is_object()) {
      check_keys(a, {"name", "overrides"}, "arm");
      if (!a.contains("name") || !a.at("name").is_string()) throw ConfigError("arm needs a string name");
      arm.name = a.at("name").get<std::string>();
      arm.overrides = a.value("overrides", json::object());
      if (!arm.overrides.is_object()) throw ConfigError("arm '" + arm.name + "': overrides must be an object");
    } else {
      throw ConfigError("arms must be names or {name, overrides} objects");
    }
    if (!valid_arm_name(arm.name)) throw ConfigError("invalid arm name '" + arm.name + "'");
    if (!seen.insert(arm.name).second) throw ConfigError("duplicate arm name '" + arm.name + "'");
    out.push_back(std::move(arm));
  }
  return out;
}

ResolvedArm resolve_arm(const ExperimentConfig& cfg, const Arm& arm) {
  ResolvedArm r;
  r.name = arm.name;
  json doc = cfg.doc;
  doc.erase("arms");
  doc.erase("out_dir");
  deep_merge(doc, arm.overrides);
  try {
    check_keys(doc, kTopKeys, "arm '" + arm.name + "' config");

    // Data source.
    const json data = section(doc, "data");
    check_keys(data, {"generator", "csv", "schema", "task"}, "data");
    const bool gen = data.contains("generator"), csv = data.contains("csv");
    if (gen == csv) throw ConfigError("data needs exactly one source: generator or csv");
    const std::string task = data.value("task", "fraud");
    if (task == "fraud" || task == "binary") {
      r.task = LabelRule::Binary;
    } else if (task == "regression") {
      r.task = LabelRule::Regression;
    } else {
      throw ConfigError("unknown task '" + task + "' (fraud|regression)");
    }

    // Preset, then explicit sections.
    json model = json::object();
    json train = TrainConfig{}.to_json();
    if (doc.contains("preset") && !doc.at("preset").is_null()) {
      const Preset p = load_preset(doc.at("preset").get<std::string>());
      if (p.model.empty() && !p.baseline.empty()) {
        throw ConfigError("preset '" + p.name + "' only documents a boosting baseline");
      }
      model = p.model;
      train = p.train.to_json();
    }
    deep_merge(model, section(doc, "model"));
    deep_merge(train, section(doc, "train"));
    r.train = TrainConfig::from_json(train);
    const bool top = doc.contains("seed") && !doc.at("seed").is_null();
    const bool explicit_train = section(doc, "train").contains("seed");
    r.data_seed = top ? doc.at("seed").get<std::uint64_t>() : r.train.seed;
    r.seed = explicit_train ? r.train.seed : r.data_seed;
    r.train.seed = r.seed;
    r.train.validate();

    std::size_t m = 0;
    if (gen) {
      json g = data.at("generator");
      if (!g.contains("seed")) g["seed"] = r.data_seed;
      r.generator = synth::GenConfig::from_json(g);
      m = r.generator->numerical_fields + r.generator->categorical_cardinalities.size();
    } else {
      if (!data.contains("schema")) throw ConfigError("csv source needs a schema path");
      r.csv = data.at("csv").get<std::string>();
      r.schema = data.at("schema").get<std::string>();
      m = Schema::load(r.schema).attribute_count();
    }

    const json pre = section(doc, "preprocess");
    check_keys(pre, {"bins"}, "preprocess");
    r.bins = pre.value("bins", r.bins);
    if (r.bins == 0) throw ConfigError("bins must be >= 1");

    r.model = ModelSpec::from_json(model);
    r.model.n = r.train.window;
    r.model.m = m;
    r.model.dropout = r.train.dropout;
    r.model.head = r.task == LabelRule::Binary ? HeadKind::BinaryClassifier : HeadKind::Regressor;
    {
      ModelSpec probe = r.model;
      if (probe.hierarchical()) {
        probe.fields.clear();
        for (std::size_t j = 0; j < m; ++j) probe.fields.push_back({static_cast<std::int32_t>(kSpecialTokens + j), 1, false});
        probe.vocab_size = kSpecialTokens + m;
      }
      probe.validate();
    }

    const json up = section(doc, "upsample");
    check_keys(up, {"method", "k", "target_ratio"}, "upsample");
    r.upsample = upsample_from_string(up.value("method", "none"));
    r.smote.k = up.value("k", r.smote.k);
    r.smote.target_ratio = up.value("target_ratio", r.smote.target_ratio);
    if (r.upsample != Upsample::None) {
      r.smote.validate();
      if (r.task != LabelRule::Binary) throw ConfigError("upsampling needs a binary task");
    }

    const json pt = section(doc, "pretrain");
    check_keys(pt, {"enabled", "epochs", "label_fraction"}, "pretrain");
    r.pretrain = pt.value("enabled", false);
    r.pretrain_epochs = pt.value("epochs", r.pretrain_epochs);
    r.label_fraction = pt.value("label_fraction", 1.0);
    if (!(r.label_fraction > 0.0 && r.label_fraction <= 1.0)) throw ConfigError("label_fraction must lie in (0, 1]");
    if (r.pretrain) {
      if (!r.model.hierarchical()) throw ConfigError("pretraining needs a hierarchical family");
      if (!r.train.mlm_probability) throw ConfigError("pretraining needs train.mlm_probability");
    }
  } catch (const json::exception& e) {
    throw ConfigError("arm '" + arm.name + "': " + e.what());
  }

  // Echo: the merged document with resolved sections filled in.
  doc["seed"] = r.data_seed;
  doc["model"] = r.model.to_json();
  doc["model"].erase("fields");
  doc["model"].erase("vocab_size");
  doc["train"] = r.train.to_json();
  doc["preprocess"] = {{"bins", r.bins}};
  doc["upsample"] = {{"method", to_string(r.upsample)}, {"k", r.smote.k}, {"target_ratio", r.smote.target_ratio}};
  doc["pretrain"] = {{"enabled", r.pretrain}, {"epochs", r.pretrain_epochs}, {"label_fraction", r.label_fraction}};
  if (r.generator) doc["data"]["generator"] = r.generator->to_json();
  r.config = std::move(doc);
  return r;
}

namespace {

ArmResult run_prepared(const ResolvedArm& a, const PreparedData& data, const std::filesystem::path& out_dir,
                       bool write_files) {
  const auto t0 = std::chrono::steady_clock::now();
  ArmResult res;
  res.name = a.name;
  res.config = a.config;

  const std::filesystem::path dir = out_dir / a.name;
  if (write_files) std::filesystem::create_directories(dir);

  std::vector<Example> train = labeled_subset(data.train, a.label_fraction, a.data_seed);
  res.synthetic_windows = upsample_examples(a, train, res.warnings);
  res.train_windows = train.size();
  res.test_windows = data.test.size();

  ModelSpec spec = a.model;
  if (spec.hierarchical()) spec.attach(data.encoding.vocabulary);
  const std::string vocab_hash = hash_hex(data.encoding.token_hash());

  std::optional<Model> model;
  TrainHistory history;
  if (a.pretrain) {
    ModelSpec ps = spec;
    ps.head = HeadKind::MLM;
    Model pre(ps, a.seed);
    TrainConfig pc = a.train;
    pc.epochs = a.pretrain_epochs;
    res.pretrain_history = pretrain_mlm(pre, data.train, data.val, pc);
    const TrainHistory& ph = res.pretrain_history;
    const auto ck = make_checkpoint(pre, vocab_hash, a.seed);
    if (write_files) {
      ph.save_csv(dir / "pretrain_history.csv");
      nn::save_checkpoint(ck, dir / "pretrain.ckpt");
    }
    auto ft = fine_tune(ck, vocab_hash, spec.head, train, data.val, a.train);
    model.emplace(std::move(ft.model));
    history = std::move(ft.history);
  } else {
    model.emplace(spec, a.seed);
    history = train_supervised(*model, train, data.val, a.train);
  }

  res.val_metric = validation_metric(*model, data.val);
  nn::AttentionCounter counter;
  const auto scores = model->predict(data.test, &counter);
  if (!data.test.empty()) res.attn_pairs = counter.pairs / data.test.size();
  res.expected_attn_pairs = model->expected_pairs(1);
  res.metrics = metrics_for(scores, data.test, a.task, res.warnings);
  res.history = std::move(history);
  const nn::Checkpoint ck = make_checkpoint(*model, vocab_hash, a.seed);
  res.checkpoint_digest = hash_hex(fnv1a(nn::checkpoint_bytes(ck)));

  if (write_files) {
    res.history.save_csv(dir / "history.csv");
    nn::save_checkpoint(ck, dir / "model.ckpt");
    data.encoding.save(dir / "encoding.json");
    res.history_path = a.name + "/history.csv";
    res.checkpoint_path = a.name + "/model.ckpt";
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

std::filesystem::path out_dir_of(const ExperimentConfig& cfg) {
  if (cfg.doc.contains("out_dir") && cfg.doc.at("out_dir").is_string()) return cfg.doc.at("out_dir").get<std::string>();
  return {};
}

RunReport run_arms(const ExperimentConfig& cfg, const std::vector<ResolvedArm>& arms, const RunOptions& opt) {
  const std::filesystem::path out = out_dir_of(cfg);
  const bool write = opt.write_files && !out.empty();

  // Prepare each distinct data setting once, sequentially.
  std::map<DataKey, std::shared_ptr<const PreparedData>> cache;
  std::vector<std::shared_ptr<const PreparedData>> per_arm;
  for (const auto& a : arms) {
    const DataKey k = data_key(a, a.model.hierarchical());
    auto it = cache.find(k);
    if (it == cache.end()) {
      try {
        it = cache.emplace(k, prepare(a)).first;
      } catch (const Error& e) {
        throw ArmFailure(a.name, e.what(), std::current_exception());
      }
    }
    per_arm.push_back(it->second);
  }

  std::vector<ArmResult> results(arms.size());
  std::vector<std::exception_ptr> errors(arms.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < arms.size(); i = next++) {
      try {
        results[i] = run_prepared(arms[i], *per_arm[i], out, write);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t nt = std::clamp<std::size_t>(opt.threads, 1, std::max<std::size_t>(arms.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (std::size_t i = 0; i < arms.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw ArmFailure(arms[i].name, e.what(), errors[i]);
    }
  }

  RunReport rep;
  rep.config = cfg.doc;
  rep.config.erase("out_dir");
  rep.seed = arms.empty() ? 0 : arms.front().data_seed;
  rep.arms = std::move(results);
  if (write) rep.save(out);
  return rep;
}

}  // namespace

ArmResult run_arm(const ResolvedArm& arm, const std::filesystem::path& out_dir, bool write_files) {
  const auto data = prepare(arm);
  return run_prepared(arm, *data, out_dir, write_files && !out_dir.empty());
}

RunReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
  std::vector<ResolvedArm> arms;
  for (const auto& a : cfg.arms()) arms.push_back(resolve_arm(cfg, a));
  return run_arms(cfg, arms, opt);
}

RunReport ablate_towers(const ExperimentConfig& cfg, const RunOptions& opt) {
  ExperimentConfig c = cfg;
  c.doc["arms"] = json::array();
  for (const char* mask : {"Both", "TimeOnly", "FeatureOnly"}) {
    c.doc["arms"].push_back({{"name", mask}, {"overrides", {{"model", {{"tower_mask", mask}}}}}});
  }
  std::vector<ResolvedArm> arms;
  for (const auto& a : c.arms()) arms.push_back(resolve_arm(c, a));
  if (arms.front().model.family != Family::TwinTower) throw ConfigError("tower ablation needs the TwinTower family");
  RunReport rep = run_arms(c, arms, opt);
  rep.extra["ablation"] = "towers";
  return rep;
}

SweepResult sweep(const ExperimentConfig& cfg, const json& grid, const SweepOptions& opt) {
  if (!grid.is_object() || grid.empty()) throw ConfigError("sweep grid must be a non-empty object");
  std::vector<std::pair<std::string, std::vector<json>>> axes;
  std::size_t total = 1;
  for (const auto& [key, values] : grid.items()) {
    if (!values.is_array() || values.empty()) throw ConfigError("grid entry '" + key + "' needs a non-empty list");
    axes.emplace_back(key, std::vector<json>(values.begin(), values.end()));
    total *= values.size();
  }
  auto point = [&](std::size_t idx) {
    json patch = json::object();
    for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
      const auto& [key, values] = *it;
      const json& v = values[idx % values.size()];
      idx /= values.size();
      json::json_pointer ptr("/" + [&] {
        std::string s = key;
        std::replace(s.begin(), s.end(), '.', '/');
        return s;
      }());
      patch[ptr] = v;
    }
    return patch;
  };

  ExperimentConfig base = cfg;
  base.doc.erase("arms");
  const ResolvedArm def = resolve_arm(base, {"default", json::object()});

  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  if (opt.budget) {
    if (*opt.budget == 0) throw ConfigError("sweep budget must be >= 1");
    Rng rng = Rng(def.seed).split("sweep");
    rng.shuffle(order.begin(), order.end());
  }

  std::vector<ResolvedArm> arms{def};
  std::vector<json> patches{json::object()};
  std::set<std::string> seen{def.config.dump()};
  const std::size_t limit = opt.budget ? *opt.budget : total + 1;
  for (std::size_t i = 0; i < order.size() && arms.size() < limit; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "p%04zu", order[i]);
    const json patch = point(order[i]);
    ResolvedArm a = resolve_arm(base, {name, patch});
    if (!seen.insert(a.config.dump()).second) continue;
    // Non-default points train with their own derived seed.
    json seeded = patch;
    seeded["train"]["seed"] = derive_seed(def.seed, patch.dump());
    a = resolve_arm(base, {name, seeded});
    arms.push_back(std::move(a));
    patches.push_back(patch);
  }

  RunReport rep = run_arms(base, arms, {opt.threads, opt.write_files});
  const bool higher = def.task == LabelRule::Binary;
  std::size_t best = 0;
  for (std::size_t i = 1; i < rep.arms.size(); ++i) {
    const double v = rep.arms[i].val_metric, b = rep.arms[best].val_metric;
    if (higher ? v > b : v < b) best = i;
  }
  rep.extra["sweep"] = {{"grid", grid},
                        {"points", total},
                        {"budget", opt.budget ? json(*opt.budget) : json(nullptr)},
                        {"default_arm", "default"},
                        {"best_arm", rep.arms[best].name},
                        {"default_val_metric", rep.arms[0].val_metric},
                        {"best_val_metric", rep.arms[best].val_metric},
                        {"best_overrides", patches[best]}};
  return {std::move(rep), arms[best].name, patches[best]};
}

namespace {
json epochs_json(const TrainHistory& h) {
  json out = json::array();
  for (const auto& e : h.epochs) {
    out.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_metric", e.val_metric}});
  }
  return out;
}
}  // namespace

json RunReport::to_json() const {
  json j;
  j["config"] = config;
  j["seed"] = seed;
  j["environment"] = {
#if defined(__clang__)
      {"compiler", "clang " __clang_version__},
#elif defined(__GNUC__)
      {"compiler", "gcc " __VERSION__},
#else
      {"compiler", "unknown"},
#endif
      {"cxx", static_cast<long>(__cplusplus)},
      {"float", "binary64"},
      {"pointer_bits", static_cast<int>(8 * sizeof(void*))}};
  json arms_j = json::array();
  json timing = json::object();
  double total = 0.0;
  for (const auto& a : arms) {
    json aj;
    aj["name"] = a.name;
    aj["config"] = a.config;
    aj["metrics"] = a.metrics;
    aj["val_metric"] = a.val_metric;
    aj["attention_pairs_per_window"] = a.attn_pairs;
    aj["expected_attention_pairs_per_window"] = a.expected_attn_pairs;
    aj["train_windows"] = a.train_windows;
    aj["test_windows"] = a.test_windows;
    aj["synthetic_windows"] = a.synthetic_windows;
    aj["warnings"] = a.warnings;
    aj["history"] = a.history_path.empty() ? json(nullptr) : json(a.history_path);
    aj["checkpoint"] = a.checkpoint_path.empty() ? json(nullptr) : json(a.checkpoint_path);
    aj["epochs"] = epochs_json(a.history);
    aj["checkpoint_digest"] = a.checkpoint_digest;
    if (!a.pretrain_history.epochs.empty()) aj["pretrain_epochs"] = epochs_json(a.pretrain_history);
    arms_j.push_back(std::move(aj));
    timing[a.name] = a.seconds;
    total += a.seconds;
  }
  j["arms"] = std::move(arms_j);
  for (const auto& [k, v] : extra.items()) j[k] = v;
  timing["total"] = total;
  j["timing"] = std::move(timing);
  return j;
}

std::string RunReport::metrics_csv() const {
  std::string out = "arm,precision,recall,f1,gini,capture_at_4,metric_m,rmse,attn_pairs,seconds\n";
  for (const auto& a : arms) {
    out += a.name;
    for (const char* k : {"precision", "recall", "f1", "gini", "capture_at_4", "metric_m", "rmse"}) {
      out += ",";
      if (a.metrics.contains(k) && a.metrics.at(k).is_number()) out += fmt(a.metrics.at(k).get<double>());
    }
    out += "," + std::to_string(a.attn_pairs) + "," + fmt(a.seconds) + "\n";
  }
  return out;
}

void RunReport::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream r(dir / "report.json");
  if (!r) throw IoError("cannot write " + (dir / "report.json").string());
  r << to_json().dump(2) << "\n";
  std::ofstream m(dir / "metrics.csv");
  if (!m) throw IoError("cannot write " + (dir / "metrics.csv").string());
  m << metrics_csv();
}

std::string render_table(const json& report) {
  auto cell = [](const json& m, const char* k, double scale) -> std::string {
    if (!m.contains(k) || !m.at(k).is_number()) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", scale * m.at(k).get<double>());
    return buf;
  };
  std::string out = "| arm | precision | recall | F1 | G x100 | D x100 | M x100 | RMSE | attn pairs | seconds |\n";
  out += "|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& a : report.at("arms")) {
    const auto& m = a.at("metrics");
    const std::string name = a.at("name").get<std::string>();
    char secs[32] = "-";
    if (report.contains("timing") && report.at("timing").contains(name)) {
      std::snprintf(secs, sizeof secs, "%.1f", report.at("timing").at(name).get<double>());
    }
    out += "| " + name + " | " + cell(m, "precision", 1) + " | " + cell(m, "recall", 1) + " | " + cell(m, "f1", 1) +
           " | " + cell(m, "gini", 100) + " | " + cell(m, "capture_at_4", 100) + " | " + cell(m, "metric_m", 100) +
           " | " + cell(m, "rmse", 1) + " | " + std::to_string(a.at("attention_pairs_per_window").get<std::uint64_t>()) +
           " | " + secs + " |\n";
  }
  return out;
}

}  // namespace tabseq::bench
