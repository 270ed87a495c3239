#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabseq/schema.hpp"

namespace tabseq {

/// Equal-frequency bins for one numerical field. Bins are half-open
/// (-inf, e1], (e1, e2], ..., (e_{B-1}, +inf).
struct Quantizer {
  std::string field;
  std::vector<double> edges;  // strictly increasing, B-1 entries

  [[nodiscard]] std::size_t bins() const noexcept { return edges.size() + 1; }
  friend bool operator==(const Quantizer&, const Quantizer&) = default;
};

/// Empirical quantile of sorted data at probability q in (0, 1), averaging
/// the two adjacent order statistics when q*n is an integer.
double midpoint_quantile(const std::vector<double>& sorted, double q);

using RecordFilter = std::function<bool(const Record&)>;

/// Fits B equal-frequency bins over the non-missing values of `field`.
/// Duplicate cut points collapse, so the effective bin count may be lower.
Quantizer fit_quantizer(const Dataset& d, std::string_view field, std::size_t bins,
                        const RecordFilter& include = {});
/// Bin id in [0, q.bins()): the number of edges strictly below v.
std::size_t apply_quantizer(const Quantizer& q, double v);

/// One quantizer per numerical attribute of the schema.
std::vector<Quantizer> fit_quantizers(const Dataset& d, std::size_t bins, const RecordFilter& include = {});

inline constexpr std::int32_t kPadToken = 0;
inline constexpr std::int32_t kMaskToken = 1;
inline constexpr std::int32_t kUnkToken = 2;
inline constexpr std::int32_t kClsToken = 3;
inline constexpr std::int32_t kSpecialTokens = 4;

/// Token range owned by one attribute column. Categorical ranges hold the
/// missing token first, then observed categories in sorted order; numerical
/// ranges hold one token per bin.
struct FieldTokens {
  std::string field;
  FieldKind kind = FieldKind::Numerical;
  std::int32_t begin = 0;
  std::int32_t size = 0;
  std::vector<std::string> categories;

  friend bool operator==(const FieldTokens&, const FieldTokens&) = default;
};

/// What a non-special token stands for.
struct DecodedToken {
  std::size_t attribute = 0;  // position in Schema::attributes()
  std::string category;       // categorical fields
  std::size_t bin = 0;        // numerical fields
};

/// Field-aware vocabulary: every attribute owns a disjoint range of token
/// ids after the four reserved specials.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<FieldTokens> fields);

  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(total_); }
  [[nodiscard]] const std::vector<FieldTokens>& fields() const noexcept { return fields_; }
  [[nodiscard]] const FieldTokens& field(std::size_t attribute) const { return fields_.at(attribute); }

  /// Token for a category of a categorical attribute; UNK when unseen.
  [[nodiscard]] std::int32_t category_token(std::size_t attribute, std::string_view category) const;
  [[nodiscard]] std::int32_t bin_token(std::size_t attribute, std::size_t bin) const;
  /// Inverse of category_token/bin_token; throws RangeError for specials.
  [[nodiscard]] DecodedToken decode(std::int32_t token) const;
  [[nodiscard]] static bool is_special(std::int32_t token) noexcept { return token >= 0 && token < kSpecialTokens; }

  [[nodiscard]] nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::vector<FieldTokens> fields_;
  std::vector<std::map<std::string, std::int32_t, std::less<>>> lookup_;
  std::int32_t total_ = kSpecialTokens;
};

/// Builds a vocabulary from observed categories; `quantizers` must cover
/// every numerical attribute.
Vocabulary build_vocabulary(const Dataset& d, const std::vector<Quantizer>& quantizers);

/// N x M token ids for one window, plus per-cell MLM mask flags and the
/// numerical cell values used by the joint-loss model.
struct TokenGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> masked;
  std::vector<double> values;  // numerical cells only; 0 elsewhere

  [[nodiscard]] std::int32_t at(std::size_t i, std::size_t j) const { return ids[i * cols + j]; }
};

/// Per-numerical-attribute standardization statistics.
struct FeatureStats {
  std::map<std::string, std::pair<double, double>> mean_std;  // field -> (mean, std)
  static constexpr double kStdFloor = 1e-8;

  [[nodiscard]] double standardize(const std::string& field, double v) const;
  friend bool operator==(const FeatureStats&, const FeatureStats&) = default;
};

FeatureStats fit_feature_stats(const Dataset& d, const RecordFilter& include = {});

/// Category -> integer per categorical attribute; unseen categories map to
/// the table size.
struct LabelTables {
  std::map<std::string, std::map<std::string, std::int32_t, std::less<>>> tables;

  [[nodiscard]] std::int32_t encode(const std::string& field, std::string_view category) const;
  friend bool operator==(const LabelTables&, const LabelTables&) = default;
};

LabelTables fit_label_tables(const Dataset& d, const RecordFilter& include = {});

/// N x M real features: standardized numerical values and label-encoded
/// categorical values.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  [[nodiscard]] double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// `stats`, when given, fills TokenGrid::values with standardized numbers.
TokenGrid encode_tokens(const SequenceWindow& w, const Schema& schema, const Vocabulary& vocab,
                        const std::vector<Quantizer>& quantizers, const FeatureStats* stats = nullptr);
/// Per-cell decoded tokens, row-major; specials decode with attribute set
/// but an empty category.
std::vector<DecodedToken> decode_tokens(const TokenGrid& g, const Vocabulary& vocab);

FeatureMatrix encode_numeric(const SequenceWindow& w, const Schema& schema, const LabelTables& tables,
                             const FeatureStats& stats);

/// Everything needed to encode windows identically across runs. Serialized
/// as one versioned JSON document.
struct Encoding {
  static constexpr int kVersion = 1;

  Schema schema;
  std::vector<Quantizer> quantizers;
  Vocabulary vocabulary;
  LabelTables label_tables;
  FeatureStats stats;

  /// Fingerprint of the token side (quantizer edges and vocabulary).
  [[nodiscard]] std::uint64_t token_hash() const;

  [[nodiscard]] nlohmann::json to_json() const;
  static Encoding from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Encoding load(const std::filesystem::path& path);
};

/// Fits all encoders. Quantizers and vocabulary use every record;
/// standardization stats and label tables only use records passing
/// `train_only`.
Encoding fit_encoding(const Dataset& d, std::size_t bins, const RecordFilter& train_only = {});

}  // namespace tabseq
