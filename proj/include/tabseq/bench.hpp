#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabseq/errors.hpp"
#include "tabseq/synthgen.hpp"
#include "tabseq/training.hpp"
#include "tabseq/upsample.hpp"

namespace tabseq::bench {

enum class Upsample { None, Smote, Duplicate };
std::string_view to_string(Upsample u) noexcept;
Upsample upsample_from_string(std::string_view s);

/// Error raised while running one arm; what() carries the arm name.
class ArmFailure : public Error {
 public:
  ArmFailure(std::string arm, const std::string& message, std::exception_ptr cause)
      : Error("arm '" + arm + "': " + message), arm_(std::move(arm)), cause_(std::move(cause)) {}
  [[nodiscard]] const std::string& arm() const noexcept { return arm_; }
  /// The original module error.
  [[nodiscard]] std::exception_ptr cause() const noexcept { return cause_; }

 private:
  std::string arm_;
  std::exception_ptr cause_;
};

/// One arm of an experiment: a recursive JSON merge applied to the base config.
struct Arm {
  std::string name;
  nlohmann::json overrides = nlohmann::json::object();
};

/// Experiment document. Layout:
///   seed, data {generator | csv + schema, task}, preprocess {bins},
///   preset, model, train, upsample {method, k, target_ratio},
///   pretrain {enabled, epochs, label_fraction}, arms [{name, overrides}], out_dir
struct ExperimentConfig {
  nlohmann::json doc;
  static ExperimentConfig from_json(nlohmann::json j);
  static ExperimentConfig load(const std::filesystem::path& path);
  [[nodiscard]] std::vector<Arm> arms() const;
};

/// Fully resolved settings of one arm.
struct ResolvedArm {
  std::string name;
  nlohmann::json config;  // merged document, echoed into the report
  std::uint64_t data_seed = 0;  // generator, entity split, label subset
  std::uint64_t seed = 0;       // model init, shuffling, dropout, upsampling
  LabelRule task = LabelRule::Binary;
  std::optional<synth::GenConfig> generator;
  std::filesystem::path csv, schema;
  std::size_t bins = 32;
  ModelSpec model;
  TrainConfig train;
  Upsample upsample = Upsample::None;
  SmoteConfig smote;
  bool pretrain = false;
  std::size_t pretrain_epochs = 3;
  double label_fraction = 1.0;
};

/// Applies preset, model/train sections and arm overrides in that order.
/// Seeds: top-level "seed" drives the data; train.seed, when given explicitly
/// in the config, drives training, otherwise the top-level seed does. With
/// no top-level seed the preset's training seed serves both.
/// Throws ConfigError for anything invalid, before any training happens.
ResolvedArm resolve_arm(const ExperimentConfig& cfg, const Arm& arm);

/// Window/split options implied by an arm (tokens for hierarchical families).
PrepareOptions prepare_options(const ResolvedArm& arm);

/// Appends upsampled minority windows to `train` per the arm's method;
/// returns how many were added. Token models always duplicate.
std::size_t upsample_examples(const ResolvedArm& arm, std::vector<Example>& train, std::vector<std::string>& warnings);

struct ArmResult {
  std::string name;
  nlohmann::json config;
  nlohmann::json metrics;  // precision, recall, f1, gini, capture_at_4, metric_m, rmse
  double val_metric = 0.0;
  std::uint64_t attn_pairs = 0;           // measured per window at evaluation
  std::uint64_t expected_attn_pairs = 0;  // closed form per window
  std::size_t train_windows = 0, test_windows = 0, synthetic_windows = 0;
  std::vector<std::string> warnings;
  TrainHistory history, pretrain_history;
  std::string checkpoint_digest;  // FNV-1a of the serialized final checkpoint
  std::string history_path, checkpoint_path;  // relative to the output directory
  double seconds = 0.0;
};

struct RunReport {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<ArmResult> arms;
  nlohmann::json extra = nlohmann::json::object();  // e.g. sweep summary
  /// Deterministic content; wall-clock lives under "timing" only.
  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] std::string metrics_csv() const;
  /// Writes report.json and metrics.csv into `dir`.
  void save(const std::filesystem::path& dir) const;
};

struct RunOptions {
  std::size_t threads = 1;
  bool write_files = true;  // per-arm history, checkpoint and encoding
};

RunReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {});
ArmResult run_arm(const ResolvedArm& arm, const std::filesystem::path& out_dir, bool write_files);

/// Three arms (Both, TimeOnly, FeatureOnly) over the same data and seed.
RunReport ablate_towers(const ExperimentConfig& cfg, const RunOptions& opt = {});

struct SweepOptions {
  std::optional<std::size_t> budget;  // random search over the grid when set
  std::size_t threads = 1;
  bool write_files = false;
};
struct SweepResult {
  RunReport report;
  std::string best_arm;
  nlohmann::json best_overrides;
};
/// grid: {"section.key": [values...], ...}. The base config is always arm
/// "default"; grid points that equal it are not trained twice. With a budget,
/// exactly `budget` arms run: default plus budget-1 sampled points.
SweepResult sweep(const ExperimentConfig& cfg, const nlohmann::json& grid, const SweepOptions& opt = {});

/// Human-readable comparison table (percent scale for rank metrics).
std::string render_table(const nlohmann::json& report);

}  // namespace tabseq::bench
