#include "tabseq/synthgen.hpp"

#include <cmath>
#include <cstdio>

#include "tabseq/errors.hpp"
#include "tabseq/rng.hpp"

namespace tabseq::synth {

namespace {

constexpr double kAutoCorrelation = 0.6;
constexpr double kFactorCorrelation = 0.8;
constexpr double kFactorLoading = 0.7;
constexpr double kEntitySpread = 0.5;
constexpr double kPreferredCategory = 0.6;
constexpr double kLagWeights[kTemporalLag] = {0.5, 0.3, 0.2};

double sigmoid(double z) noexcept { return 1.0 / (1.0 + std::exp(-z)); }

std::string entity_name(std::size_t e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "u%06zu", e);
  return buf;
}

double lag(std::span<const double> u, std::size_t t, std::size_t l) noexcept { return t >= l ? u[t - l] : 0.0; }

// Raw per-row features before labeling.
struct Panel {
  std::size_t rows = 0;
  std::size_t num = 0;
  std::vector<double> x;        // [entity*rows + t][num]
  std::vector<std::size_t> cat;  // [entity*rows + t][cats]
  std::vector<double> latent;    // [entity*rows + t]
};

Panel simulate(const GenConfig& cfg, const Rng& root) {
  Panel p;
  p.rows = cfg.rows_per_entity;
  p.num = cfg.numerical_fields;
  const std::size_t cats = cfg.categorical_cardinalities.size();
  const std::size_t total = cfg.entities * p.rows;
  p.x.resize(total * p.num);
  p.cat.resize(total * cats);
  p.latent.resize(total);
  const auto w = row_weights(p.num);
  const double innovation = std::sqrt(1.0 - kAutoCorrelation * kAutoCorrelation);
  const double factor_innovation = std::sqrt(1.0 - kFactorCorrelation * kFactorCorrelation);
  const double own = std::sqrt(1.0 - kFactorLoading * kFactorLoading);

  for (std::size_t e = 0; e < cfg.entities; ++e) {
    Rng rng = root.split("entity").split(e);
    std::vector<double> offset(p.num), state(p.num);
    for (auto& m : offset) m = kEntitySpread * rng.normal();
    for (auto& s : state) s = rng.normal();
    double factor = rng.normal();
    std::vector<std::size_t> preferred(cats);
    for (std::size_t k = 0; k < cats; ++k) preferred[k] = rng.below(cfg.categorical_cardinalities[k]);

    for (std::size_t t = 0; t < p.rows; ++t) {
      const std::size_t row = e * p.rows + t;
      double u = 0.0;
      if (t > 0) factor = kFactorCorrelation * factor + factor_innovation * rng.normal();
      for (std::size_t j = 0; j < p.num; ++j) {
        if (t > 0) state[j] = kAutoCorrelation * state[j] + innovation * rng.normal();
        // Fields load on the shared factor with the sign of their weight.
        const double v = offset[j] + (w[j] > 0.0 ? kFactorLoading : -kFactorLoading) * factor + own * state[j];
        p.x[row * p.num + j] = v;
        u += w[j] * v;
      }
      p.latent[row] = u;
      for (std::size_t k = 0; k < cats; ++k) {
        const auto card = cfg.categorical_cardinalities[k];
        p.cat[row * cats + k] = rng.bernoulli(kPreferredCategory) ? preferred[k] : rng.below(card);
      }
    }
  }
  return p;
}

std::vector<FieldSpec> attribute_fields(const GenConfig& cfg) {
  std::vector<FieldSpec> fields = {{"entity", FieldKind::Categorical, false}, {"t", FieldKind::Numerical, false}};
  for (std::size_t j = 0; j < cfg.numerical_fields; ++j) {
    fields.push_back({"num_" + std::to_string(j), FieldKind::Numerical, cfg.missing_rate > 0.0});
  }
  for (std::size_t k = 0; k < cfg.categorical_cardinalities.size(); ++k) {
    fields.push_back({"cat_" + std::to_string(k), FieldKind::Categorical, false});
  }
  return fields;
}

Dataset assemble(const GenConfig& cfg, const Schema& schema, const Panel& p, const std::vector<double>& labels,
                 const Rng& root) {
  const std::size_t cats = cfg.categorical_cardinalities.size();
  std::vector<Record> records;
  records.reserve(labels.size());
  for (std::size_t e = 0; e < cfg.entities; ++e) {
    Rng holes = root.split("missing").split(e);
    const std::string name = entity_name(e);
    for (std::size_t t = 0; t < p.rows; ++t) {
      const std::size_t row = e * p.rows + t;
      std::vector<Value> values;
      values.reserve(schema.size());
      values.emplace_back(name);
      values.emplace_back(static_cast<double>(t));
      for (std::size_t j = 0; j < p.num; ++j) {
        if (cfg.missing_rate > 0.0 && holes.bernoulli(cfg.missing_rate)) {
          values.emplace_back(Missing{});
        } else {
          values.emplace_back(p.x[row * p.num + j]);
        }
      }
      for (std::size_t k = 0; k < cats; ++k) values.emplace_back("c" + std::to_string(p.cat[row * cats + k]));
      values.emplace_back(labels[row]);
      records.push_back(Record{std::move(values), name, static_cast<std::int64_t>(t)});
    }
  }
  return Dataset(schema, std::move(records));
}

void standardize(std::vector<double>& v) {
  if (v.empty()) return;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.size()));
  for (double& x : v) x = sd > 0.0 ? (x - mean) / sd : 0.0;
}

// Bias b with mean(sigmoid(b + s_i)) == rate; the mean is monotone in b.
double calibrate_bias(const std::vector<double>& logits, double rate) {
  double lo = -60.0, hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (double s : logits) mean += sigmoid(mid + s);
    mean /= static_cast<double>(logits.size());
    (mean < rate ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

void GenConfig::validate() const {
  if (entities < 1 || rows_per_entity < 1 || numerical_fields < 1) throw ConfigError("generator counts must be >= 1");
  if (numerical_fields < 4) throw ConfigError("the generator needs at least 4 numerical fields");
  for (auto c : categorical_cardinalities) {
    if (c < 1) throw ConfigError("categorical cardinalities must be >= 1");
  }
  if (!(fraud_rate > 0.0 && fraud_rate < 1.0)) throw ConfigError("fraud_rate must lie in (0, 1)");
  auto unit = [](double s) { return s >= 0.0 && s <= 1.0; };
  if (!unit(temporal_signal_strength) || !unit(cross_feature_signal_strength)) {
    throw ConfigError("signal strengths must lie in [0, 1]");
  }
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) throw ConfigError("noise_scale must be >= 0");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ConfigError("missing_rate must lie in [0, 1)");
}

nlohmann::json GenConfig::to_json() const {
  return {{"entities", entities},
          {"rows_per_entity", rows_per_entity},
          {"numerical_fields", numerical_fields},
          {"categorical_cardinalities", categorical_cardinalities},
          {"fraud_rate", fraud_rate},
          {"temporal_signal_strength", temporal_signal_strength},
          {"cross_feature_signal_strength", cross_feature_signal_strength},
          {"noise_scale", noise_scale},
          {"missing_rate", missing_rate},
          {"seed", seed}};
}

GenConfig GenConfig::from_json(const nlohmann::json& j) {
  GenConfig c;
  try {
    c.entities = j.value("entities", c.entities);
    c.rows_per_entity = j.value("rows_per_entity", c.rows_per_entity);
    c.numerical_fields = j.value("numerical_fields", c.numerical_fields);
    c.categorical_cardinalities = j.value("categorical_cardinalities", c.categorical_cardinalities);
    c.fraud_rate = j.value("fraud_rate", c.fraud_rate);
    c.temporal_signal_strength = j.value("temporal_signal_strength", c.temporal_signal_strength);
    c.cross_feature_signal_strength = j.value("cross_feature_signal_strength", c.cross_feature_signal_strength);
    c.noise_scale = j.value("noise_scale", c.noise_scale);
    c.missing_rate = j.value("missing_rate", c.missing_rate);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed generator config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<double> row_weights(std::size_t numerical_fields) {
  std::vector<double> w(numerical_fields);
  const double norm = 1.0 / std::sqrt(static_cast<double>(numerical_fields));
  for (std::size_t j = 0; j < numerical_fields; ++j) w[j] = (j % 2 == 0 ? 1.0 : -1.0) * norm;
  return w;
}

double ramp(double u) noexcept { return std::log1p(std::exp(3.0 * (u - 1.0))) / 3.0; }

double temporal_term(std::span<const double> latents, std::size_t t) noexcept {
  double s = 0.0;
  for (std::size_t l = 1; l <= kTemporalLag; ++l) s += kLagWeights[l - 1] * ramp(lag(latents, t, l));
  return s;
}

double cross_term(std::span<const double> row) noexcept {
  return (row[0] * row[1] + row[2] * row[3]) / std::sqrt(2.0);
}

double regression_signal(std::span<const double> latents, std::size_t t, double x0) noexcept {
  return std::sin(lag(latents, t, 1)) + 0.5 * std::tanh(lag(latents, t, 2)) + 0.25 * lag(latents, t, 3) + 0.5 * x0;
}

Schema fraud_schema(const GenConfig& cfg) {
  auto fields = attribute_fields(cfg);
  fields.push_back({"is_fraud", FieldKind::Numerical, false});
  return Schema(std::move(fields), "entity", "t", "is_fraud");
}

Schema regression_schema(const GenConfig& cfg) {
  auto fields = attribute_fields(cfg);
  fields.push_back({"target", FieldKind::Numerical, false});
  return Schema(std::move(fields), "entity", "t", "target");
}

Dataset generate_fraud_dataset(const GenConfig& cfg) {
  cfg.validate();
  const Rng root(cfg.seed);
  const Panel p = simulate(cfg, root);
  const std::size_t total = p.latent.size();

  std::vector<double> temporal(total), cross(total);
  for (std::size_t e = 0; e < cfg.entities; ++e) {
    const std::span<const double> u(p.latent.data() + e * p.rows, p.rows);
    for (std::size_t t = 0; t < p.rows; ++t) {
      const std::size_t row = e * p.rows + t;
      temporal[row] = temporal_term(u, t);
      cross[row] = cross_term(std::span<const double>(p.x.data() + row * p.num, p.num));
    }
  }
  standardize(temporal);
  standardize(cross);
  std::vector<double> logits(total);
  for (std::size_t i = 0; i < total; ++i) {
    logits[i] = kLogitScale * (cfg.temporal_signal_strength * temporal[i] +
                               cfg.cross_feature_signal_strength * cross[i]);
  }
  const double bias = calibrate_bias(logits, cfg.fraud_rate);

  std::vector<double> labels(total);
  for (std::size_t e = 0; e < cfg.entities; ++e) {
    Rng draw = root.split("label").split(e);
    for (std::size_t t = 0; t < p.rows; ++t) {
      const std::size_t row = e * p.rows + t;
      labels[row] = draw.bernoulli(sigmoid(bias + logits[row])) ? 1.0 : 0.0;
    }
  }
  return assemble(cfg, fraud_schema(cfg), p, labels, root);
}

Dataset generate_regression_dataset(const GenConfig& cfg) {
  cfg.validate();
  const Rng root(cfg.seed);
  const Panel p = simulate(cfg, root);
  std::vector<double> targets(p.latent.size());
  for (std::size_t e = 0; e < cfg.entities; ++e) {
    Rng noise = root.split("noise").split(e);
    const std::span<const double> u(p.latent.data() + e * p.rows, p.rows);
    for (std::size_t t = 0; t < p.rows; ++t) {
      const std::size_t row = e * p.rows + t;
      targets[row] = regression_signal(u, t, p.x[row * p.num]) + cfg.noise_scale * noise.normal();
    }
  }
  return assemble(cfg, regression_schema(cfg), p, targets, root);
}

}  // namespace tabseq::synth
