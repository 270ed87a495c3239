// Command-line front end: one subcommand per pipeline stage.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tabseq/bench.hpp"
#include "tabseq/errors.hpp"
#include "tabseq/metrics.hpp"
#include "tabseq/nn/checkpoint.hpp"
#include "tabseq/synthgen.hpp"
#include "tabseq/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tabseq;

namespace {

struct Common {
  std::string config, preset, out, upsample, tower_mask;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::optional<std::size_t> smote_k;
  std::optional<double> target_ratio;
};

json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw IoError("cannot read " + p.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw IoError("cannot write " + p.string());
  f << j.dump(2) << "\n";
}

fs::path require_out(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(c.out);
  return c.out;
}

// Experiment document from --config plus flag overrides.
json experiment_doc(const Common& c) {
  json doc = c.config.empty() ? json::object() : read_json(c.config);
  if (!c.preset.empty()) doc["preset"] = c.preset;
  if (c.seed) doc["seed"] = *c.seed;
  if (!c.out.empty()) doc["out_dir"] = c.out;
  if (!c.upsample.empty()) doc["upsample"]["method"] = c.upsample;
  if (c.smote_k) doc["upsample"]["k"] = *c.smote_k;
  if (c.target_ratio) doc["upsample"]["target_ratio"] = *c.target_ratio;
  if (!c.tower_mask.empty()) doc["model"]["tower_mask"] = to_string(tower_mask_from_string(c.tower_mask));
  return doc;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file");
  app->add_option("--preset", c.preset, "Preset name or .json path");
  app->add_option("--seed", c.seed, "Master seed");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--upsample", c.upsample, "none|smote|duplicate")->check(CLI::IsMember({"none", "smote", "duplicate"}));
  app->add_option("--tower-mask", c.tower_mask, "both|time|feature")->check(CLI::IsMember({"both", "time", "feature"}));
  app->add_option("--threads", c.threads, "Arms trained in parallel")->check(CLI::PositiveNumber);
  app->add_option("--smote-k", c.smote_k, "SMOTE neighbours");
  app->add_option("--target-ratio", c.target_ratio, "Minority/majority ratio after upsampling");
}

// ---- prepared data directory ---------------------------------------------

// prepared.json holds everything needed to rebuild the same windows.
struct Stage {
  bench::ResolvedArm arm;
  PreparedData data;
  std::string vocab_hash;
};

Stage load_stage(const fs::path& data_dir, json doc) {
  const json prep = read_json(data_dir / "prepared.json");
  doc["data"] = prep.at("data");
  doc["preprocess"] = prep.at("preprocess");
  for (const char* k : {"window", "stride", "train_fraction", "val_fraction", "test_fraction"}) {
    doc["train"][k] = prep.at("train").at(k);
  }
  doc.erase("arms");
  doc.erase("out_dir");
  bench::ExperimentConfig cfg = bench::ExperimentConfig::from_json(doc);
  auto arm = bench::resolve_arm(cfg, {"default", json::object()});
  PrepareOptions po = bench::prepare_options(arm);
  po.seed = prep.at("split_seed").get<std::uint64_t>();
  const Dataset d = load_csv(arm.csv, Schema::load(arm.schema));
  Stage s{std::move(arm), prepare_examples(d, po), {}};
  s.vocab_hash = hash_hex(s.data.encoding.token_hash());
  if (s.vocab_hash != prep.at("vocab_hash").get<std::string>()) {
    throw VocabularyMismatch("data in " + data_dir.string() + " no longer matches its saved encoding");
  }
  return s;
}

void print_history(const TrainHistory& h) {
  for (const auto& e : h.epochs) {
    std::printf("epoch %zu  train %.5f  val %.5f  metric %.4f  (%.1fs)\n", e.epoch, e.train_loss, e.val_loss,
                e.val_metric, e.seconds);
  }
  std::printf("best epoch %zu\n", h.best_epoch);
}

// ---- subcommands ----------------------------------------------------------

int cmd_generate(const Common& c, const std::string& task) {
  const fs::path out = require_out(c);
  json g = c.config.empty() ? json::object() : read_json(c.config);
  if (c.seed) g["seed"] = *c.seed;
  const auto cfg = synth::GenConfig::from_json(g);
  const Dataset d = task == "regression" ? synth::generate_regression_dataset(cfg) : synth::generate_fraud_dataset(cfg);
  save_csv(d, out / "data.csv");
  d.schema().save(out / "schema.json");
  write_json(out / "generator.json", {{"task", task}, {"generator", cfg.to_json()}});
  std::printf("wrote %zu rows to %s\n", d.size(), (out / "data.csv").c_str());
  return 0;
}

int cmd_preprocess(const Common& c, const std::string& csv, const std::string& schema, const std::string& task,
                   std::optional<std::size_t> window, std::optional<std::size_t> stride, std::optional<std::size_t> bins) {
  const fs::path out = require_out(c);
  json doc = experiment_doc(c);
  doc.erase("out_dir");
  doc["data"] = {{"csv", fs::absolute(csv).string()}, {"schema", fs::absolute(schema).string()}, {"task", task}};
  if (window) doc["train"]["window"] = *window;
  if (stride) doc["train"]["stride"] = *stride;
  if (bins) doc["preprocess"]["bins"] = *bins;
  const auto arm = bench::resolve_arm(bench::ExperimentConfig::from_json(doc), {"default", json::object()});

  PrepareOptions po = bench::prepare_options(arm);
  po.features = false;
  po.tokens = true;
  const Dataset d = load_csv(arm.csv, Schema::load(arm.schema));
  const PreparedData p = prepare_examples(d, po);
  p.encoding.save(out / "encoding.json");
  const json prep = {{"data", arm.config.at("data")},
                     {"preprocess", arm.config.at("preprocess")},
                     {"train", arm.config.at("train")},
                     {"split_seed", arm.data_seed},
                     {"vocab_hash", hash_hex(p.encoding.token_hash())},
                     {"windows", {{"train", p.train.size()}, {"val", p.val.size()}, {"test", p.test.size()}}}};
  write_json(out / "prepared.json", prep);
  std::printf("windows: train %zu  val %zu  test %zu  vocabulary %zu\n", p.train.size(), p.val.size(), p.test.size(),
              p.encoding.vocabulary.size());
  return 0;
}

int cmd_pretrain(const Common& c, const std::string& data_dir) {
  const fs::path out = require_out(c);
  Stage s = load_stage(data_dir, experiment_doc(c));
  if (!s.arm.model.hierarchical()) throw ConfigError("pretraining needs a hierarchical family");
  if (!s.arm.train.mlm_probability) throw ConfigError("pretraining needs train.mlm_probability");
  ModelSpec spec = s.arm.model;
  spec.attach(s.data.encoding.vocabulary);
  spec.head = HeadKind::MLM;
  Model model(spec, s.arm.seed);
  const TrainHistory h = pretrain_mlm(model, s.data.train, s.data.val, s.arm.train);
  h.save_csv(out / "pretrain_history.csv");
  nn::save_checkpoint(make_checkpoint(model, s.vocab_hash, s.arm.seed), out / "pretrain.ckpt");
  print_history(h);
  return 0;
}

std::size_t upsample(const bench::ResolvedArm& a, std::vector<Example>& train) {
  std::vector<std::string> warnings;
  const std::size_t n = bench::upsample_examples(a, train, warnings);
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return n;
}

int cmd_train(const Common& c, const std::string& data_dir) {
  const fs::path out = require_out(c);
  Stage s = load_stage(data_dir, experiment_doc(c));
  ModelSpec spec = s.arm.model;
  if (spec.hierarchical()) spec.attach(s.data.encoding.vocabulary);
  std::vector<Example> train = s.data.train;
  if (const auto extra = upsample(s.arm, train)) std::printf("upsampled: %zu synthetic windows\n", extra);
  Model model(spec, s.arm.seed);
  const TrainHistory h = train_supervised(model, train, s.data.val, s.arm.train);
  h.save_csv(out / "history.csv");
  nn::save_checkpoint(make_checkpoint(model, s.vocab_hash, s.arm.seed), out / "model.ckpt");
  print_history(h);
  return 0;
}

int cmd_finetune(const Common& c, const std::string& data_dir, const std::string& checkpoint) {
  const fs::path out = require_out(c);
  Stage s = load_stage(data_dir, experiment_doc(c));
  const nn::Checkpoint ck = nn::load_checkpoint(checkpoint);
  std::vector<Example> train = s.data.train;
  upsample(s.arm, train);
  auto res = fine_tune(ck, s.vocab_hash, s.arm.model.head, train, s.data.val, s.arm.train);
  res.history.save_csv(out / "history.csv");
  nn::save_checkpoint(make_checkpoint(res.model, s.vocab_hash, s.arm.seed), out / "model.ckpt");
  print_history(res.history);
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& data_dir, const std::string& checkpoint, const std::string& split) {
  const nn::Checkpoint ck = nn::load_checkpoint(checkpoint);
  const ModelSpec spec = ModelSpec::from_json(ck.model);
  if (spec.head == HeadKind::MLM) throw ConfigError("evaluate needs a task head; fine-tune the pretrained checkpoint first");
  json doc = experiment_doc(c);
  doc["model"]["family"] = to_string(spec.family);
  doc.erase("out_dir");
  Stage s = load_stage(data_dir, doc);
  if (ck.vocab_hash != s.vocab_hash) {
    throw VocabularyMismatch("checkpoint vocabulary " + ck.vocab_hash + " does not match data " + s.vocab_hash);
  }
  Model model = model_from_checkpoint(ck);
  const auto& examples = split == "val" ? s.data.val : s.data.test;
  nn::AttentionCounter counter;
  const auto scores = model.predict(examples, &counter);
  json m;
  if (spec.head == HeadKind::Regressor) {
    std::vector<double> y;
    for (const auto& e : examples) y.push_back(e.label);
    m["rmse"] = metrics::rmse(scores, y);
  } else {
    std::vector<std::uint8_t> p, y;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      p.push_back(scores[i] >= 0.5);
      y.push_back(examples[i].label != 0.0);
    }
    const auto pr = metrics::f1(p, y);
    m["precision"] = pr.precision;
    m["recall"] = pr.recall;
    m["f1"] = pr.f1;
    try {
      const auto rk = metrics::rank_metrics(scores, y);
      m["gini"] = rk.gini;
      m["capture_at_4"] = rk.capture;
      m["metric_m"] = rk.m_score;
    } catch (const DegenerateLabels&) {
    }
    std::printf("precision %.4f  recall %.4f  F1 %.4f", pr.precision, pr.recall, pr.f1);
    if (m.contains("gini")) {
      std::printf("  G %.2f  D %.2f  M %.2f", 100 * m["gini"].get<double>(), 100 * m["capture_at_4"].get<double>(),
                  100 * m["metric_m"].get<double>());
    }
    std::printf("\n");
  }
  if (m.contains("rmse")) std::printf("RMSE %.6f\n", m["rmse"].get<double>());
  m["split"] = split;
  m["windows"] = examples.size();
  m["attention_pairs_per_window"] = examples.empty() ? 0 : counter.pairs / examples.size();
  if (!c.out.empty()) write_json(fs::path(c.out) / "metrics.json", m);
  return 0;
}

void finish_report(const bench::RunReport& rep, const Common& c) {
  const json j = rep.to_json();
  std::cout << bench::render_table(j);
  for (const auto& a : rep.arms) {
    for (const auto& w : a.warnings) std::fprintf(stderr, "warning [%s]: %s\n", a.name.c_str(), w.c_str());
  }
  if (!c.out.empty()) std::printf("report written to %s\n", (fs::path(c.out) / "report.json").c_str());
}

int cmd_run(const Common& c) {
  const auto cfg = bench::ExperimentConfig::from_json(experiment_doc(c));
  finish_report(bench::run_experiment(cfg, {c.threads, true}), c);
  return 0;
}

int cmd_ablate(const Common& c) {
  const auto cfg = bench::ExperimentConfig::from_json(experiment_doc(c));
  finish_report(bench::ablate_towers(cfg, {c.threads, true}), c);
  return 0;
}

int cmd_sweep(const Common& c, const std::string& grid, std::optional<std::size_t> budget) {
  json doc = experiment_doc(c);
  const auto cfg = bench::ExperimentConfig::from_json(doc);
  auto res = bench::sweep(cfg, read_json(grid), {budget, c.threads, !c.out.empty()});
  if (!c.out.empty()) res.report.save(c.out);
  finish_report(res.report, c);
  std::printf("best arm: %s  overrides: %s\n", res.best_arm.c_str(), res.best_overrides.dump().c_str());
  return 0;
}

int cmd_report(const std::string& in) {
  const json j = read_json(fs::is_directory(in) ? fs::path(in) / "report.json" : fs::path(in));
  std::cout << bench::render_table(j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential tabular transformer toolkit"};
  app.require_subcommand(1);
  Common c;

  std::string task = "fraud", csv, schema, data_dir, checkpoint, split = "test", grid, in;
  std::optional<std::size_t> window, stride, bins, budget;

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset (CSV + schema)");
  add_common(gen, c);
  gen->add_option("--task", task, "fraud|regression")->check(CLI::IsMember({"fraud", "regression"}));

  auto* pre = app.add_subcommand("preprocess", "Fit encoders and record the window split");
  add_common(pre, c);
  pre->add_option("--csv", csv, "Input CSV")->required();
  pre->add_option("--schema", schema, "Schema JSON")->required();
  pre->add_option("--task", task, "fraud|regression")->check(CLI::IsMember({"fraud", "regression"}));
  pre->add_option("--window", window);
  pre->add_option("--stride", stride);
  pre->add_option("--bins", bins);

  auto* pt = app.add_subcommand("pretrain", "MLM pretraining of a hierarchical model");
  add_common(pt, c);
  pt->add_option("--data", data_dir, "Directory written by preprocess")->required();

  auto* tr = app.add_subcommand("train", "Direct supervised training");
  add_common(tr, c);
  tr->add_option("--data", data_dir, "Directory written by preprocess")->required();

  auto* ft = app.add_subcommand("finetune", "Fine-tune a pretrained checkpoint");
  add_common(ft, c);
  ft->add_option("--data", data_dir, "Directory written by preprocess")->required();
  ft->add_option("--checkpoint", checkpoint, "Pretrained checkpoint")->required();

  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on the test (or val) split");
  add_common(ev, c);
  ev->add_option("--data", data_dir, "Directory written by preprocess")->required();
  ev->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  ev->add_option("--split", split)->check(CLI::IsMember({"test", "val"}));

  auto* run = app.add_subcommand("run", "Run every arm of an experiment config");
  add_common(run, c);

  auto* abl = app.add_subcommand("ablate", "Tower ablation: Both, TimeOnly, FeatureOnly");
  add_common(abl, c);

  auto* sw = app.add_subcommand("sweep", "Grid or budgeted random search");
  add_common(sw, c);
  sw->add_option("--grid", grid, "JSON object of dotted keys to value lists")->required();
  sw->add_option("--budget", budget, "Arms to train (random search)");

  auto* rep = app.add_subcommand("report", "Print the comparison table of a report");
  rep->add_option("--in", in, "report.json or its directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_generate(c, task);
    if (*pre) return cmd_preprocess(c, csv, schema, task, window, stride, bins);
    if (*pt) return cmd_pretrain(c, data_dir);
    if (*tr) return cmd_train(c, data_dir);
    if (*ft) return cmd_finetune(c, data_dir, checkpoint);
    if (*ev) return cmd_evaluate(c, data_dir, checkpoint, split);
    if (*run) return cmd_run(c);
    if (*abl) return cmd_ablate(c);
    if (*sw) return cmd_sweep(c, grid, budget);
    if (*rep) return cmd_report(in);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
