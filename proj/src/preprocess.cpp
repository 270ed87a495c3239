#include "tabseq/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "tabseq/errors.hpp"
#include "tabseq/rng.hpp"

namespace tabseq {

double midpoint_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw RangeError("quantile of empty sample");
  if (!(q > 0.0 && q < 1.0)) throw RangeError("quantile probability must lie in (0, 1)");
  const double k = q * static_cast<double>(sorted.size());
  const double rk = std::round(k);
  if (std::abs(k - rk) < 1e-9 && rk >= 1.0) {
    const auto i = static_cast<std::size_t>(rk);
    return 0.5 * (sorted[i - 1] + sorted[i]);
  }
  return sorted[static_cast<std::size_t>(std::ceil(k)) - 1];
}

Quantizer fit_quantizer(const Dataset& d, std::string_view field, std::size_t bins, const RecordFilter& include) {
  if (bins == 0) throw ConfigError("bin count must be >= 1");
  const auto idx = d.schema().require_index(field);
  if (d.schema().field(idx).kind != FieldKind::Numerical) {
    throw FieldKindError("cannot quantize categorical field '" + std::string(field) + "'");
  }
  std::vector<double> values;
  values.reserve(d.size());
  for (const auto& r : d.records()) {
    if (include && !include(r)) continue;
    if (const auto* v = std::get_if<double>(&r.values[idx])) values.push_back(*v);
  }
  std::sort(values.begin(), values.end());

  Quantizer q{std::string(field), {}};
  const std::size_t n = values.size();
  if (n == 0) return q;
  for (std::size_t j = 1; j < bins; ++j) {
    // Exact integer form of midpoint_quantile at q = j / bins.
    const std::size_t num = j * n;
    const double edge = (num % bins == 0) ? 0.5 * (values[num / bins - 1] + values[num / bins]) : values[num / bins];
    if (edge >= values.back()) break;  // nothing would fall above it
    if (q.edges.empty() || edge > q.edges.back()) q.edges.push_back(edge);
  }
  return q;
}

std::size_t apply_quantizer(const Quantizer& q, double v) {
  return static_cast<std::size_t>(std::lower_bound(q.edges.begin(), q.edges.end(), v) - q.edges.begin());
}

std::vector<Quantizer> fit_quantizers(const Dataset& d, std::size_t bins, const RecordFilter& include) {
  std::vector<Quantizer> out;
  for (auto idx : d.schema().attributes()) {
    const auto& f = d.schema().field(idx);
    if (f.kind == FieldKind::Numerical) out.push_back(fit_quantizer(d, f.name, bins, include));
  }
  return out;
}

namespace {

const Quantizer& find_quantizer(const std::vector<Quantizer>& qs, const std::string& field) {
  for (const auto& q : qs) {
    if (q.field == field) return q;
  }
  throw ConfigError("no quantizer for numerical field '" + field + "'");
}

}  // namespace

Vocabulary::Vocabulary(std::vector<FieldTokens> fields) : fields_(std::move(fields)) {
  lookup_.resize(fields_.size());
  for (std::size_t a = 0; a < fields_.size(); ++a) {
    auto& f = fields_[a];
    if (f.begin != total_) throw ConfigError("vocabulary ranges must be dense and ordered");
    if (f.kind == FieldKind::Categorical) {
      if (static_cast<std::size_t>(f.size) != f.categories.size()) {
        throw ConfigError("categorical range size must equal its category count");
      }
      for (std::size_t c = 0; c < f.categories.size(); ++c) {
        if (!lookup_[a].emplace(f.categories[c], f.begin + static_cast<std::int32_t>(c)).second) {
          throw ConfigError("duplicate category '" + f.categories[c] + "' in field '" + f.field + "'");
        }
      }
    } else if (f.size < 1) {
      throw ConfigError("numerical field needs at least one bin token");
    }
    total_ += f.size;
  }
}

std::int32_t Vocabulary::category_token(std::size_t attribute, std::string_view category) const {
  const auto& table = lookup_.at(attribute);
  auto it = table.find(category);
  return it == table.end() ? kUnkToken : it->second;
}

std::int32_t Vocabulary::bin_token(std::size_t attribute, std::size_t bin) const {
  const auto& f = fields_.at(attribute);
  if (f.kind != FieldKind::Numerical) throw FieldKindError("bin token requested for categorical field '" + f.field + "'");
  if (bin >= static_cast<std::size_t>(f.size)) throw RangeError("bin id out of range for field '" + f.field + "'");
  return f.begin + static_cast<std::int32_t>(bin);
}

DecodedToken Vocabulary::decode(std::int32_t token) const {
  if (token < kSpecialTokens || token >= total_) throw RangeError("token " + std::to_string(token) + " has no field");
  auto it = std::upper_bound(fields_.begin(), fields_.end(), token,
                             [](std::int32_t t, const FieldTokens& f) { return t < f.begin; });
  const auto a = static_cast<std::size_t>(std::distance(fields_.begin(), it) - 1);
  const auto& f = fields_[a];
  DecodedToken out;
  out.attribute = a;
  const auto offset = static_cast<std::size_t>(token - f.begin);
  if (f.kind == FieldKind::Categorical) {
    out.category = f.categories[offset];
  } else {
    out.bin = offset;
  }
  return out;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json fields = nlohmann::json::array();
  for (const auto& f : fields_) {
    fields.push_back({{"field", f.field},
                      {"kind", to_string(f.kind)},
                      {"begin", f.begin},
                      {"size", f.size},
                      {"categories", f.categories}});
  }
  return {{"specials", {{"PAD", kPadToken}, {"MASK", kMaskToken}, {"UNK", kUnkToken}, {"CLS", kClsToken}}},
          {"fields", fields},
          {"size", total_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  std::vector<FieldTokens> fields;
  for (const auto& f : j.at("fields")) {
    fields.push_back({f.at("field").get<std::string>(), field_kind_from_string(f.at("kind").get<std::string>()),
                      f.at("begin").get<std::int32_t>(), f.at("size").get<std::int32_t>(),
                      f.at("categories").get<std::vector<std::string>>()});
  }
  Vocabulary v(std::move(fields));
  if (j.contains("size") && j["size"].get<std::size_t>() != v.size()) throw ConfigError("vocabulary size mismatch");
  return v;
}

Vocabulary build_vocabulary(const Dataset& d, const std::vector<Quantizer>& quantizers) {
  const auto& schema = d.schema();
  std::vector<FieldTokens> fields;
  std::int32_t next = kSpecialTokens;
  for (auto idx : schema.attributes()) {
    const auto& spec = schema.field(idx);
    FieldTokens f;
    f.field = spec.name;
    f.kind = spec.kind;
    f.begin = next;
    if (spec.kind == FieldKind::Categorical) {
      std::set<std::string, std::less<>> seen;
      for (const auto& r : d.records()) {
        if (const auto* s = std::get_if<std::string>(&r.values[idx]); s != nullptr && *s != kMissingCategory) {
          seen.insert(*s);
        }
      }
      f.categories.emplace_back(kMissingCategory);
      f.categories.insert(f.categories.end(), seen.begin(), seen.end());
      f.size = static_cast<std::int32_t>(f.categories.size());
    } else {
      f.size = static_cast<std::int32_t>(find_quantizer(quantizers, spec.name).bins());
    }
    next += f.size;
    fields.push_back(std::move(f));
  }
  return Vocabulary(std::move(fields));
}

double FeatureStats::standardize(const std::string& field, double v) const {
  auto it = mean_std.find(field);
  if (it == mean_std.end()) throw ConfigError("no standardization stats for field '" + field + "'");
  return (v - it->second.first) / std::max(it->second.second, kStdFloor);
}

FeatureStats fit_feature_stats(const Dataset& d, const RecordFilter& include) {
  FeatureStats stats;
  for (auto idx : d.schema().attributes()) {
    const auto& f = d.schema().field(idx);
    if (f.kind != FieldKind::Numerical) continue;
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : d.records()) {
      if (include && !include(r)) continue;
      if (const auto* v = std::get_if<double>(&r.values[idx])) {
        sum += *v;
        ++n;
      }
    }
    const double mean = n ? sum / static_cast<double>(n) : 0.0;
    double ss = 0.0;
    for (const auto& r : d.records()) {
      if (include && !include(r)) continue;
      if (const auto* v = std::get_if<double>(&r.values[idx])) ss += (*v - mean) * (*v - mean);
    }
    stats.mean_std[f.name] = {mean, n ? std::sqrt(ss / static_cast<double>(n)) : 0.0};
  }
  return stats;
}

std::int32_t LabelTables::encode(const std::string& field, std::string_view category) const {
  auto t = tables.find(field);
  if (t == tables.end()) throw ConfigError("no label table for field '" + field + "'");
  auto it = t->second.find(category);
  return it == t->second.end() ? static_cast<std::int32_t>(t->second.size()) : it->second;
}

LabelTables fit_label_tables(const Dataset& d, const RecordFilter& include) {
  LabelTables out;
  for (auto idx : d.schema().attributes()) {
    const auto& f = d.schema().field(idx);
    if (f.kind != FieldKind::Categorical) continue;
    std::set<std::string, std::less<>> seen;
    for (const auto& r : d.records()) {
      if (include && !include(r)) continue;
      if (const auto* s = std::get_if<std::string>(&r.values[idx])) seen.insert(*s);
    }
    auto& table = out.tables[f.name];
    std::int32_t next = 0;
    for (const auto& s : seen) table.emplace(s, next++);
  }
  return out;
}

namespace {

void check_window_shape(const SequenceWindow& w, const Schema& schema) {
  for (const auto& r : w.rows) {
    if (r.values.size() != schema.size()) throw ShapeError("window rows do not match the schema width");
  }
}

}  // namespace

TokenGrid encode_tokens(const SequenceWindow& w, const Schema& schema, const Vocabulary& vocab,
                        const std::vector<Quantizer>& quantizers, const FeatureStats* stats) {
  check_window_shape(w, schema);
  const auto& attrs = schema.attributes();
  if (vocab.fields().size() != attrs.size()) throw ShapeError("vocabulary does not match the schema's attributes");
  for (std::size_t a = 0; a < attrs.size(); ++a) {
    const auto& spec = schema.field(attrs[a]);
    if (vocab.field(a).field != spec.name || vocab.field(a).kind != spec.kind) {
      throw ShapeError("vocabulary field '" + vocab.field(a).field + "' does not match schema field '" + spec.name + "'");
    }
  }
  std::vector<const Quantizer*> qs(attrs.size(), nullptr);
  for (std::size_t a = 0; a < attrs.size(); ++a) {
    if (schema.field(attrs[a]).kind == FieldKind::Numerical) qs[a] = &find_quantizer(quantizers, schema.field(attrs[a]).name);
  }

  TokenGrid g;
  g.rows = w.rows.size();
  g.cols = attrs.size();
  g.ids.resize(g.rows * g.cols);
  g.masked.assign(g.rows * g.cols, 0);
  g.values.assign(g.rows * g.cols, 0.0);
  for (std::size_t i = 0; i < g.rows; ++i) {
    const auto& r = w.rows[i];
    for (std::size_t a = 0; a < g.cols; ++a) {
      const auto& v = r.values[attrs[a]];
      auto& cell = g.ids[i * g.cols + a];
      if (qs[a] == nullptr) {
        const auto* s = std::get_if<std::string>(&v);
        cell = vocab.category_token(a, s ? std::string_view(*s) : kMissingCategory);
      } else {
        const auto* x = std::get_if<double>(&v);
        const double num = x ? *x : 0.0;
        cell = vocab.bin_token(a, apply_quantizer(*qs[a], num));
        g.values[i * g.cols + a] = stats ? stats->standardize(schema.field(attrs[a]).name, num) : num;
      }
    }
  }
  return g;
}

std::vector<DecodedToken> decode_tokens(const TokenGrid& g, const Vocabulary& vocab) {
  std::vector<DecodedToken> out(g.ids.size());
  for (std::size_t c = 0; c < g.ids.size(); ++c) {
    if (Vocabulary::is_special(g.ids[c])) {
      out[c].attribute = c % g.cols;
    } else {
      out[c] = vocab.decode(g.ids[c]);
    }
  }
  return out;
}

FeatureMatrix encode_numeric(const SequenceWindow& w, const Schema& schema, const LabelTables& tables,
                             const FeatureStats& stats) {
  check_window_shape(w, schema);
  const auto& attrs = schema.attributes();
  FeatureMatrix fm;
  fm.rows = w.rows.size();
  fm.cols = attrs.size();
  fm.data.resize(fm.rows * fm.cols);
  for (std::size_t i = 0; i < fm.rows; ++i) {
    const auto& r = w.rows[i];
    for (std::size_t a = 0; a < fm.cols; ++a) {
      const auto& spec = schema.field(attrs[a]);
      const auto& v = r.values[attrs[a]];
      double out = 0.0;
      if (spec.kind == FieldKind::Categorical) {
        const auto* s = std::get_if<std::string>(&v);
        out = static_cast<double>(tables.encode(spec.name, s ? std::string_view(*s) : kMissingCategory));
      } else {
        const auto* x = std::get_if<double>(&v);
        out = stats.standardize(spec.name, x ? *x : 0.0);
      }
      fm.data[i * fm.cols + a] = out;
    }
  }
  return fm;
}

std::uint64_t Encoding::token_hash() const {
  nlohmann::json qs = nlohmann::json::array();
  for (const auto& q : quantizers) qs.push_back({{"field", q.field}, {"edges", q.edges}});
  const nlohmann::json j = {{"quantizers", qs}, {"vocabulary", vocabulary.to_json()}};
  return fnv1a(j.dump());
}

nlohmann::json Encoding::to_json() const {
  nlohmann::json qs = nlohmann::json::array();
  for (const auto& q : quantizers) qs.push_back({{"field", q.field}, {"edges", q.edges}});
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& [field, table] : label_tables.tables) {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [cat, id] : table) t[cat] = id;
    labels[field] = t;
  }
  nlohmann::json st = nlohmann::json::object();
  for (const auto& [field, ms] : stats.mean_std) st[field] = {{"mean", ms.first}, {"std", ms.second}};
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(token_hash()));
  return {{"version", kVersion}, {"schema", schema.to_json()},   {"quantizers", qs},
          {"vocabulary", vocabulary.to_json()}, {"label_tables", labels}, {"stats", st},
          {"token_hash", hash}};
}

Encoding Encoding::from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kVersion) throw ConfigError("unsupported encoding version");
    Encoding e{Schema::from_json(j.at("schema")), {}, Vocabulary::from_json(j.at("vocabulary")), {}, {}};
    for (const auto& q : j.at("quantizers")) {
      e.quantizers.push_back({q.at("field").get<std::string>(), q.at("edges").get<std::vector<double>>()});
    }
    for (const auto& [field, table] : j.at("label_tables").items()) {
      auto& t = e.label_tables.tables[field];
      for (const auto& [cat, id] : table.items()) t.emplace(cat, id.get<std::int32_t>());
    }
    for (const auto& [field, ms] : j.at("stats").items()) {
      e.stats.mean_std[field] = {ms.at("mean").get<double>(), ms.at("std").get<double>()};
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed encoding JSON: ") + ex.what());
  }
}

void Encoding::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

Encoding Encoding::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return from_json(nlohmann::json::parse(in));
}

Encoding fit_encoding(const Dataset& d, std::size_t bins, const RecordFilter& train_only) {
  auto quantizers = fit_quantizers(d, bins);
  auto vocab = build_vocabulary(d, quantizers);
  return Encoding{d.schema(), std::move(quantizers), std::move(vocab), fit_label_tables(d, train_only),
                  fit_feature_stats(d, train_only)};
}

}  // namespace tabseq
