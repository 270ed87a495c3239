#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tabseq/nn/layers.hpp"
#include "tabseq/preprocess.hpp"

namespace tabseq {

enum class Family { Vanilla, TwinTower, Hierarchical, HierarchicalJoint };
enum class HeadKind { BinaryClassifier, Regressor, MLM };
enum class TowerMask { Both, TimeOnly, FeatureOnly };

std::string_view to_string(Family f) noexcept;
std::string_view to_string(HeadKind h) noexcept;
std::string_view to_string(TowerMask m) noexcept;
Family family_from_string(std::string_view s);
HeadKind head_from_string(std::string_view s);
TowerMask tower_mask_from_string(std::string_view s);

/// Token range of one attribute as seen by the hierarchical models.
struct FieldRange {
  std::int32_t begin = 0;
  std::int32_t size = 0;
  bool numerical = false;
  friend bool operator==(const FieldRange&, const FieldRange&) = default;
};

struct ModelSpec {
  Family family = Family::TwinTower;
  std::size_t n = 10;             // rows per window
  std::size_t m = 12;             // attributes per row
  std::size_t hidden = 16;
  std::size_t heads = 2;
  std::size_t layers = 1;         // time/sequence encoder depth
  std::size_t field_layers = 1;   // hierarchical field-stage depth
  std::size_t ffn_inner = 0;      // 0 means 2 * hidden
  double dropout = 0.1;
  HeadKind head = HeadKind::BinaryClassifier;
  TowerMask tower_mask = TowerMask::Both;
  double joint_lambda = 1.0;
  std::size_t vocab_size = 0;     // hierarchical families only
  std::vector<FieldRange> fields;

  [[nodiscard]] bool hierarchical() const noexcept {
    return family == Family::Hierarchical || family == Family::HierarchicalJoint;
  }
  [[nodiscard]] std::size_t inner() const noexcept { return ffn_inner ? ffn_inner : 2 * hidden; }
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  /// Copies token ranges from a vocabulary (hierarchical families).
  void attach(const Vocabulary& vocab);
  [[nodiscard]] nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// One encoded window. Direct models read `x`, hierarchical models read `g`.
struct Example {
  FeatureMatrix x;
  TokenGrid g;
  double label = 0.0;
};

/// A token grid with MASK substituted at selected cells. targets holds the
/// original token per cell, or -1 where the cell was not selected. Numerical
/// cell values stay in grid.values so the joint model can regress them.
struct MaskedTokens {
  TokenGrid grid;
  std::vector<std::int32_t> targets;
  [[nodiscard]] std::size_t masked_count() const;
};

/// Per-channel Twin Tower gate weights over the pooled tower outputs.
struct GateParams {
  std::size_t w1 = 0, w2 = 0;
};

using Batch = std::span<const Example* const>;
using MaskedBatch = std::span<const MaskedTokens* const>;

class Model {
 public:
  Model(ModelSpec spec, std::uint64_t seed);

  [[nodiscard]] const ModelSpec& spec() const noexcept { return spec_; }
  nn::ParamSet& params() noexcept { return params_; }
  [[nodiscard]] const nn::ParamSet& params() const noexcept { return params_; }

  /// Width of the task head: 2 logits for binary, 1 for regression.
  [[nodiscard]] std::size_t outputs() const noexcept;

  /// Task-head output [B, outputs()].
  nn::Var forward(nn::Tape& t, Batch batch, nn::AttentionCounter* counter = nullptr);
  /// Mean cross-entropy (binary) or mean squared error (regression).
  nn::Var supervised_loss(nn::Tape& t, Batch batch, nn::AttentionCounter* counter = nullptr);
  /// MLM objective over masked cells; hierarchical families with an MLM head.
  nn::Var mlm_loss(nn::Tape& t, MaskedBatch batch, nn::AttentionCounter* counter = nullptr);

  /// Probability of class 1, or the regression value, per example.
  std::vector<double> predict(std::span<const Example> examples, nn::AttentionCounter* counter = nullptr,
                              std::size_t chunk = 256);

  /// W1 . O1 + W2 . O2 with the tower mask applied (TwinTower only).
  nn::Var gate(nn::Tape& t, std::optional<nn::Var> o1, std::optional<nn::Var> o2);
  [[nodiscard]] const GateParams& gate_params() const noexcept { return gate_; }

  /// Pooled tower outputs O1 (time) and O2 (feature) for a batch.
  std::pair<std::optional<nn::Var>, std::optional<nn::Var>> towers(nn::Tape& t, Batch batch,
                                                                   nn::AttentionCounter* counter);

  /// Closed-form attention-pair count for one forward pass over `batch` windows.
  [[nodiscard]] std::uint64_t expected_pairs(std::size_t batch) const noexcept;

 private:
  struct Tower {
    nn::Linear proj;
    std::size_t pos = 0;  // learned positional table, absent for the feature tower
    bool has_pos = false;
    nn::Encoder enc;
  };
  nn::Var run_tower(nn::Tape& t, const Tower& tw, nn::Var x, nn::AttentionCounter* counter);
  nn::Var features(nn::Tape& t, Batch batch) const;
  nn::Var head_out(nn::Tape& t, nn::Var pooled);

  // Field-stage output [B*N, M, H] and sequence-stage output [B, N, H].
  std::pair<nn::Var, nn::Var> encode_grids(nn::Tape& t, std::span<const TokenGrid* const> grids,
                                           nn::AttentionCounter* counter);

  ModelSpec spec_;
  nn::ParamSet params_;

  Tower time_, feat_;
  GateParams gate_;

  std::size_t tok_embed_ = 0, field_pos_ = 0, time_pos_ = 0, num_w_ = 0, num_b_ = 0;
  nn::Encoder field_enc_, seq_enc_;
  std::vector<nn::Linear> mlm_heads_;   // one per attribute
  std::vector<std::size_t> numeric_slot_;  // attribute -> index among numerical attributes

  nn::Linear head_, cls_hidden_;
};

}  // namespace tabseq
