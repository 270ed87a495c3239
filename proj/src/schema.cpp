#include "tabseq/schema.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "tabseq/csv.hpp"
#include "tabseq/errors.hpp"

namespace tabseq {

std::string_view to_string(FieldKind k) noexcept {
  return k == FieldKind::Categorical ? "categorical" : "numerical";
}

FieldKind field_kind_from_string(std::string_view s) {
  if (s == "categorical") return FieldKind::Categorical;
  if (s == "numerical") return FieldKind::Numerical;
  throw SchemaMismatch("unknown field kind '" + std::string(s) + "'");
}

bool operator==(const FieldSpec& a, const FieldSpec& b) {
  return a.name == b.name && a.kind == b.kind && a.nullable == b.nullable;
}

Schema::Schema(std::vector<FieldSpec> fields, std::string entity_key, std::string time_key,
               std::optional<std::string> label_key)
    : fields_(std::move(fields)),
      entity_key_(std::move(entity_key)),
      time_key_(std::move(time_key)),
      label_key_(std::move(label_key)) {
  std::set<std::string_view> seen;
  for (const auto& f : fields_) {
    if (f.name.empty()) throw SchemaMismatch("field with empty name");
    if (!seen.insert(f.name).second) throw SchemaMismatch("duplicate field name '" + f.name + "'");
  }
  auto resolve = [&](const std::string& key, const char* role) {
    auto idx = index_of(key);
    if (!idx) throw SchemaMismatch(std::string(role) + " '" + key + "' is not a declared field");
    return *idx;
  };
  entity_index_ = resolve(entity_key_, "entity_key");
  time_index_ = resolve(time_key_, "time_key");
  if (entity_index_ == time_index_) throw SchemaMismatch("entity_key and time_key must differ");
  if (fields_[time_index_].kind != FieldKind::Numerical) {
    throw SchemaMismatch("time_key '" + time_key_ + "' must be numerical");
  }
  if (fields_[entity_index_].nullable || fields_[time_index_].nullable) {
    throw SchemaMismatch("key fields cannot be nullable");
  }
  if (label_key_) {
    label_index_ = resolve(*label_key_, "label_key");
    if (*label_index_ == entity_index_ || *label_index_ == time_index_) {
      throw SchemaMismatch("label_key must not be a key field");
    }
    if (fields_[*label_index_].kind != FieldKind::Numerical) {
      throw SchemaMismatch("label_key '" + *label_key_ + "' must be numerical");
    }
  }
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    if (i == entity_index_ || i == time_index_ || (label_index_ && i == *label_index_)) continue;
    attributes_.push_back(i);
  }
  if (attributes_.empty()) throw SchemaMismatch("schema needs at least one non-key field");
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    if (fields_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Schema::require_index(std::string_view name) const {
  auto idx = index_of(name);
  if (!idx) throw SchemaMismatch("unknown field '" + std::string(name) + "'");
  return *idx;
}

nlohmann::json Schema::to_json() const {
  nlohmann::json fields = nlohmann::json::array();
  for (const auto& f : fields_) {
    fields.push_back({{"name", f.name}, {"kind", to_string(f.kind)}, {"nullable", f.nullable}});
  }
  nlohmann::json j = {{"fields", fields}, {"entity_key", entity_key_}, {"time_key", time_key_}};
  j["label_key"] = label_key_ ? nlohmann::json(*label_key_) : nlohmann::json(nullptr);
  return j;
}

Schema Schema::from_json(const nlohmann::json& j) {
  try {
    std::vector<FieldSpec> fields;
    for (const auto& f : j.at("fields")) {
      fields.push_back({f.at("name").get<std::string>(),
                        field_kind_from_string(f.at("kind").get<std::string>()),
                        f.value("nullable", false)});
    }
    std::optional<std::string> label;
    if (j.contains("label_key") && !j["label_key"].is_null()) label = j["label_key"].get<std::string>();
    return Schema(std::move(fields), j.at("entity_key").get<std::string>(), j.at("time_key").get<std::string>(),
                  std::move(label));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("malformed schema JSON: ") + e.what());
  }
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaMismatch("schema " + path.string() + ": " + e.what());
  }
}

void Schema::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

bool operator==(const Schema& a, const Schema& b) {
  return a.fields_ == b.fields_ && a.entity_key_ == b.entity_key_ && a.time_key_ == b.time_key_ &&
         a.label_key_ == b.label_key_;
}

void validate_record(const Schema& schema, const Record& r) {
  if (r.values.size() != schema.size()) {
    throw ValidationError("record has " + std::to_string(r.values.size()) + " values, schema has " +
                          std::to_string(schema.size()));
  }
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& f = schema.field(i);
    const auto& v = r.values[i];
    if (is_missing(v)) {
      if (!f.nullable) throw ValidationError("field '" + f.name + "' is not nullable");
      continue;
    }
    if (f.kind == FieldKind::Categorical && !std::holds_alternative<std::string>(v)) {
      throw ValidationError("field '" + f.name + "' expects a categorical value");
    }
    if (f.kind == FieldKind::Numerical) {
      const double* d = std::get_if<double>(&v);
      if (d == nullptr) throw ValidationError("field '" + f.name + "' expects a numerical value");
      if (!std::isfinite(*d)) throw ValidationError("field '" + f.name + "' holds a non-finite number");
    }
  }
}

namespace {

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string entity_of(const Schema& schema, const std::vector<Value>& values) {
  const auto& v = values.at(schema.entity_index());
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  if (const auto* d = std::get_if<double>(&v)) return format_number(*d);
  throw ValidationError("entity key is missing");
}

std::int64_t time_of(const Schema& schema, const std::vector<Value>& values) {
  const auto* d = std::get_if<double>(&values.at(schema.time_index()));
  if (d == nullptr) throw ValidationError("time key is missing");
  if (*d != std::floor(*d) || std::abs(*d) > 9.0e15) throw ValidationError("time key must be an integer");
  return static_cast<std::int64_t>(*d);
}

}  // namespace

Record make_record(const Schema& schema, std::vector<Value> values) {
  if (values.size() != schema.size()) {
    throw ValidationError("record has " + std::to_string(values.size()) + " values, schema has " +
                          std::to_string(schema.size()));
  }
  Record r;
  r.entity = entity_of(schema, values);
  r.time_index = time_of(schema, values);
  r.values = std::move(values);
  return r;
}

Dataset::Dataset(Schema schema, std::vector<Record> records)
    : schema_(std::move(schema)), records_(std::move(records)) {
  for (const auto& r : records_) validate_record(schema_, r);
  std::stable_sort(records_.begin(), records_.end(), [](const Record& a, const Record& b) {
    if (a.entity != b.entity) return a.entity < b.entity;
    return a.time_index < b.time_index;
  });
  for (std::size_t i = 1; i < records_.size(); ++i) {
    if (records_[i].entity == records_[i - 1].entity && records_[i].time_index == records_[i - 1].time_index) {
      throw ValidationError("duplicate (entity, time_index) = (" + records_[i].entity + ", " +
                            std::to_string(records_[i].time_index) + ")");
    }
  }
}

std::vector<double> Dataset::missing_rates() const {
  std::vector<double> rates(schema_.size(), 0.0);
  if (records_.empty()) return rates;
  for (const auto& r : records_) {
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      if (is_missing(r.values[i])) rates[i] += 1.0;
    }
  }
  for (auto& x : rates) x /= static_cast<double>(records_.size());
  return rates;
}

Dataset parse_csv(std::string_view text, const Schema& schema, std::string_view source) {
  csv::Reader reader(text);
  std::vector<std::string> header;
  if (!reader.next(header)) throw SchemaMismatch(std::string(source) + ": empty file, header row required");
  if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);

  // column position -> schema position
  std::vector<std::size_t> column_to_field(header.size());
  std::vector<bool> covered(schema.size(), false);
  for (std::size_t c = 0; c < header.size(); ++c) {
    auto idx = schema.index_of(header[c]);
    if (!idx) throw SchemaMismatch(std::string(source) + ": column '" + header[c] + "' is not in the schema");
    if (covered[*idx]) throw SchemaMismatch(std::string(source) + ": duplicate column '" + header[c] + "'");
    covered[*idx] = true;
    column_to_field[c] = *idx;
  }
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (!covered[i]) throw SchemaMismatch(std::string(source) + ": schema field '" + schema.field(i).name + "' has no column");
  }

  std::vector<Record> records;
  std::vector<std::string> row;
  std::size_t row_number = 0;
  while (reader.next(row)) {
    ++row_number;
    if (row.size() == 1 && row[0].empty()) continue;  // blank line
    auto where = [&] { return std::string(source) + ": row " + std::to_string(row_number) + " (line " + std::to_string(reader.line()) + ")"; };
    if (row.size() != header.size()) {
      throw ParseError(where() + ": expected " + std::to_string(header.size()) + " cells, got " + std::to_string(row.size()));
    }
    std::vector<Value> values(schema.size());
    for (std::size_t c = 0; c < row.size(); ++c) {
      const auto fi = column_to_field[c];
      const auto& f = schema.field(fi);
      const std::string& cell = row[c];
      if (cell.empty()) {
        if (!f.nullable) throw ParseError(where() + ": empty cell in non-nullable field '" + f.name + "'");
        values[fi] = Missing{};
      } else if (f.kind == FieldKind::Categorical) {
        values[fi] = cell;
      } else {
        double v = 0.0;
        const char* first = cell.data();
        const char* last = cell.data() + cell.size();
        if (*first == '+') ++first;
        auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
          throw ParseError(where() + ": field '" + f.name + "' expects a number, got '" + cell + "'");
        }
        values[fi] = v;
      }
    }
    try {
      records.push_back(make_record(schema, std::move(values)));
    } catch (const ValidationError& e) {
      throw ParseError(where() + ": " + e.what());
    }
  }
  return Dataset(schema, std::move(records));
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), schema, path.string());
}

std::string to_csv(const Dataset& d) {
  std::string out;
  const auto& fields = d.schema().fields();
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv::escape(fields[i].name);
  }
  out += '\n';
  for (const auto& r : d.records()) {
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      if (i) out += ',';
      const auto& v = r.values[i];
      if (const auto* s = std::get_if<std::string>(&v)) {
        out += csv::escape(*s);
      } else if (const auto* x = std::get_if<double>(&v)) {
        out += format_number(*x);
      }
    }
    out += '\n';
  }
  return out;
}

void save_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_csv(d);
}

Dataset impute_missing(const Dataset& d, ImputePolicy /*policy*/) {
  const Schema& schema = d.schema();
  std::vector<Record> records = d.records();
  for (auto& r : records) {
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      if (!is_missing(r.values[i])) continue;
      if (schema.field(i).kind == FieldKind::Numerical) {
        r.values[i] = 0.0;
      } else {
        r.values[i] = std::string(kMissingCategory);
      }
    }
  }
  return Dataset(schema, std::move(records));
}

std::vector<SequenceWindow> make_windows(const Dataset& d, std::size_t n, std::size_t stride, LabelRule rule) {
  if (n == 0) throw ConfigError("window length must be >= 1");
  if (stride == 0) throw ConfigError("stride must be >= 1");
  const auto& records = d.records();
  const auto label_idx = d.schema().label_index();

  auto row_label = [&](const Record& r) -> double {
    const auto* v = std::get_if<double>(&r.values[*label_idx]);
    if (v == nullptr) throw ValidationError("record of entity '" + r.entity + "' has no label");
    return *v;
  };

  std::vector<SequenceWindow> windows;
  std::size_t begin = 0;
  while (begin < records.size()) {
    std::size_t end = begin;
    while (end < records.size() && records[end].entity == records[begin].entity) ++end;
    const std::size_t count = end - begin;
    for (std::size_t off = 0; off + n <= count; off += stride) {
      SequenceWindow w;
      w.entity = records[begin].entity;
      w.rows = std::span<const Record>(records.data() + begin + off, n);
      if (label_idx) {
        if (rule == LabelRule::Binary) {
          bool any = false;
          for (const auto& r : w.rows) {
            const double y = row_label(r);
            if (y != 0.0 && y != 1.0) throw ValidationError("binary label rule needs 0/1 row labels");
            any = any || y == 1.0;
          }
          w.label = any ? 1.0 : 0.0;
        } else {
          w.label = row_label(w.rows.back());
        }
      }
      windows.push_back(std::move(w));
    }
    begin = end;
  }
  if (windows.empty()) throw EmptyResult("no entity has at least " + std::to_string(n) + " records");
  return windows;
}

}  // namespace tabseq
