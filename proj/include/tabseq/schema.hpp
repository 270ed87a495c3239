#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace tabseq {

enum class FieldKind { Categorical, Numerical };

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::Numerical;
  bool nullable = false;
};

/// Ordered column declarations. Key columns (entity, time, optional label)
/// are declared like any other field; the remaining M columns are the
/// attributes a model sees.
class Schema {
 public:
  Schema(std::vector<FieldSpec> fields, std::string entity_key, std::string time_key,
         std::optional<std::string> label_key = std::nullopt);

  [[nodiscard]] const std::vector<FieldSpec>& fields() const noexcept { return fields_; }
  [[nodiscard]] std::size_t size() const noexcept { return fields_.size(); }
  [[nodiscard]] const FieldSpec& field(std::size_t i) const { return fields_.at(i); }
  [[nodiscard]] std::optional<std::size_t> index_of(std::string_view name) const;
  [[nodiscard]] std::size_t require_index(std::string_view name) const;

  [[nodiscard]] const std::string& entity_key() const noexcept { return entity_key_; }
  [[nodiscard]] const std::string& time_key() const noexcept { return time_key_; }
  [[nodiscard]] const std::optional<std::string>& label_key() const noexcept { return label_key_; }
  [[nodiscard]] std::size_t entity_index() const noexcept { return entity_index_; }
  [[nodiscard]] std::size_t time_index() const noexcept { return time_index_; }
  [[nodiscard]] std::optional<std::size_t> label_index() const noexcept { return label_index_; }

  /// Schema positions of the attribute (non-key) columns, in schema order.
  [[nodiscard]] const std::vector<std::size_t>& attributes() const noexcept { return attributes_; }
  /// Attribute count per row.
  [[nodiscard]] std::size_t attribute_count() const noexcept { return attributes_.size(); }

  [[nodiscard]] nlohmann::json to_json() const;
  static Schema from_json(const nlohmann::json& j);
  static Schema load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  friend bool operator==(const Schema& a, const Schema& b);

 private:
  std::vector<FieldSpec> fields_;
  std::string entity_key_;
  std::string time_key_;
  std::optional<std::string> label_key_;
  std::size_t entity_index_ = 0;
  std::size_t time_index_ = 0;
  std::optional<std::size_t> label_index_;
  std::vector<std::size_t> attributes_;
};

bool operator==(const FieldSpec& a, const FieldSpec& b);

struct Missing {
  friend bool operator==(Missing, Missing) noexcept { return true; }
};

/// A single cell: categorical string, finite number, or missing.
using Value = std::variant<Missing, std::string, double>;

[[nodiscard]] inline bool is_missing(const Value& v) noexcept { return std::holds_alternative<Missing>(v); }

struct Record {
  std::vector<Value> values;  // aligned to schema order, keys included
  std::string entity;
  std::int64_t time_index = 0;

  friend bool operator==(const Record&, const Record&) = default;
};

/// Records sorted by (entity, time_index) with no duplicate keys.
class Dataset {
 public:
  /// Validates every record against the schema, then sorts.
  Dataset(Schema schema, std::vector<Record> records);

  [[nodiscard]] const Schema& schema() const noexcept { return schema_; }
  [[nodiscard]] const std::vector<Record>& records() const noexcept { return records_; }
  [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }

  /// Fraction of Missing cells per schema field.
  [[nodiscard]] std::vector<double> missing_rates() const;

 private:
  Schema schema_;
  std::vector<Record> records_;
};

/// Throws ValidationError when a record does not match the schema.
void validate_record(const Schema& schema, const Record& r);

/// Builds a record from cells aligned to the schema; entity/time are
/// extracted from the key columns.
Record make_record(const Schema& schema, std::vector<Value> values);

Dataset load_csv(const std::filesystem::path& path, const Schema& schema);
/// Parses CSV text; `source` only labels error messages.
Dataset parse_csv(std::string_view text, const Schema& schema, std::string_view source = "<memory>");
void save_csv(const Dataset& d, const std::filesystem::path& path);
[[nodiscard]] std::string to_csv(const Dataset& d);

enum class ImputePolicy { Zero };

inline constexpr std::string_view kMissingCategory = "__MISSING__";

/// Replaces Missing cells: numerical -> 0.0, categorical -> "__MISSING__".
Dataset impute_missing(const Dataset& d, ImputePolicy policy = ImputePolicy::Zero);

enum class LabelRule { Binary, Regression };

/// N consecutive records of one entity. Rows view the source Dataset, which
/// must outlive the window.
struct SequenceWindow {
  std::string entity;
  std::span<const Record> rows;
  std::optional<double> label;
};

/// Fixed-length windows per entity at offsets 0, stride, 2*stride, ...
/// Binary: label is 1 iff any row label is 1. Regression: label of the
/// last row. Without a label column, windows are unlabeled.
std::vector<SequenceWindow> make_windows(const Dataset& d, std::size_t n, std::size_t stride,
                                         LabelRule rule = LabelRule::Binary);

[[nodiscard]] std::string_view to_string(FieldKind k) noexcept;
FieldKind field_kind_from_string(std::string_view s);

}  // namespace tabseq
