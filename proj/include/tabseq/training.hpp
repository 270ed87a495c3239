#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabseq/model.hpp"
#include "tabseq/nn/checkpoint.hpp"
#include "tabseq/nn/optim.hpp"
#include "tabseq/schema.hpp"

namespace tabseq {

struct TrainConfig {
  double lr = 1e-3;
  std::string optimizer = "Adam";
  double dropout = 0.1;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::optional<double> mlm_probability = 0.15;  // empty for models trained without MLM
  std::size_t window = 10;
  std::size_t stride = 5;
  std::uint64_t seed = 0;
  std::size_t patience = 3;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  double test_fraction = 0.15;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// A shipped hyperparameter set: architecture sizes plus training values.
struct Preset {
  std::string name;
  std::string description;
  nlohmann::json model;  // partial ModelSpec (family, heads, hidden)
  TrainConfig train;
  /// Gradient-boosting baseline settings, kept for reference only; nothing
  /// in this library trains them.
  nlohmann::json baseline = nlohmann::json::object();
};

/// Directory searched for `<name>.json` presets: $TABSEQ_PRESET_DIR, else
/// the presets/ folder of the source tree.
std::filesystem::path preset_dir();
/// Loads a preset by name or by path to a .json file. ConfigError when missing.
Preset load_preset(std::string_view name_or_path);
Preset preset_from_json(const nlohmann::json& j);
nlohmann::json preset_to_json(const Preset& p);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
  double best_val_loss = 0.0;
  [[nodiscard]] std::string to_csv() const;
  void save_csv(const std::filesystem::path& path) const;
  /// Same losses and metrics, ignoring wall-clock.
  [[nodiscard]] bool same_values(const TrainHistory& o) const;
};

/// Selects each non-special cell with probability p, replaces it by MASK and
/// records the original token.
MaskedTokens mask_tokens(const TokenGrid& g, double p, std::uint64_t seed);

/// Validation metric: F1 at threshold 0.5 for binary heads, RMSE for
/// regression heads.
double validation_metric(Model& model, std::span<const Example> examples);
[[nodiscard]] bool higher_is_better(HeadKind head) noexcept;
double mean_loss(Model& model, std::span<const Example> examples, std::size_t batch_size);

/// Mini-batch Adam with seeded shuffling and early stopping on validation
/// loss (training loss when `val` is empty). The model ends at its best epoch.
TrainHistory train_supervised(Model& model, std::span<const Example> train, std::span<const Example> val,
                              const TrainConfig& cfg);

/// MLM pretraining for a hierarchical model with an MLM head. Runs every
/// epoch; val_loss uses a fixed mask per window.
TrainHistory pretrain_mlm(Model& model, std::span<const Example> train, std::span<const Example> val,
                          const TrainConfig& cfg);

nn::Checkpoint make_checkpoint(const Model& model, std::string vocab_hash, std::uint64_t seed,
                               nn::DType dtype = nn::DType::F64);
Model model_from_checkpoint(const nn::Checkpoint& ck);

/// Replaces the MLM head of a pretrained hierarchical model with a two-layer
/// task head and trains everything. VocabularyMismatch when the data was
/// encoded with a different vocabulary.
struct FineTuneResult {
  Model model;
  TrainHistory history;
};
FineTuneResult fine_tune(const nn::Checkpoint& pretrained, std::string_view data_vocab_hash, HeadKind head,
                         std::span<const Example> train, std::span<const Example> val, const TrainConfig& cfg);

/// Hex form of Encoding::token_hash().
std::string hash_hex(std::uint64_t h);

// ---- data preparation -------------------------------------------------------

enum class Part { Train, Val, Test };

/// Assigns whole entities to train/val/test by seeded shuffle; counts are
/// floor(fraction * entities) for val and test, remainder to train.
std::map<std::string, Part> split_entities(const Dataset& d, double val_fraction, double test_fraction,
                                           std::uint64_t seed);

struct PrepareOptions {
  std::size_t window = 10;
  std::size_t stride = 5;
  std::size_t bins = 32;
  LabelRule rule = LabelRule::Binary;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 0;
  bool features = true;  // fill Example::x
  bool tokens = false;   // fill Example::g
};

struct PreparedData {
  Encoding encoding;
  std::vector<Example> train, val, test;
};

/// Imputes missing cells, splits by entity, fits encoders on the training
/// entities and encodes every window.
PreparedData prepare_examples(const Dataset& d, const PrepareOptions& opt);

}  // namespace tabseq
