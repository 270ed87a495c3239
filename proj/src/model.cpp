#include "tabseq/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "tabseq/errors.hpp"

namespace tabseq {

using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

template <typename E, std::size_t K>
E parse_enum(std::string_view s, const std::array<std::pair<E, std::string_view>, K>& table, const char* what) {
  for (const auto& [e, name] : table) {
    if (name == s) return e;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::array<std::pair<Family, std::string_view>, 4> kFamilies{{
    {Family::Vanilla, "Vanilla"},
    {Family::TwinTower, "TwinTower"},
    {Family::Hierarchical, "Hierarchical"},
    {Family::HierarchicalJoint, "HierarchicalJoint"},
}};
constexpr std::array<std::pair<HeadKind, std::string_view>, 3> kHeads{{
    {HeadKind::BinaryClassifier, "BinaryClassifier"},
    {HeadKind::Regressor, "Regressor"},
    {HeadKind::MLM, "MLM"},
}};
constexpr std::array<std::pair<TowerMask, std::string_view>, 3> kMasks{{
    {TowerMask::Both, "Both"},
    {TowerMask::TimeOnly, "TimeOnly"},
    {TowerMask::FeatureOnly, "FeatureOnly"},
}};

template <typename E, std::size_t K>
std::string_view name_of(E e, const std::array<std::pair<E, std::string_view>, K>& table) noexcept {
  for (const auto& [v, name] : table) {
    if (v == e) return name;
  }
  return "?";
}

}  // namespace

std::string_view to_string(Family f) noexcept { return name_of(f, kFamilies); }
std::string_view to_string(HeadKind h) noexcept { return name_of(h, kHeads); }
std::string_view to_string(TowerMask m) noexcept { return name_of(m, kMasks); }
Family family_from_string(std::string_view s) { return parse_enum(s, kFamilies, "model family"); }
HeadKind head_from_string(std::string_view s) { return parse_enum(s, kHeads, "head kind"); }
TowerMask tower_mask_from_string(std::string_view s) {
  if (s == "both") return TowerMask::Both;
  if (s == "time") return TowerMask::TimeOnly;
  if (s == "feature") return TowerMask::FeatureOnly;
  return parse_enum(s, kMasks, "tower mask");
}

void ModelSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model spec: " + m); };
  if (n == 0 || m == 0) fail("n and m must be >= 1");
  if (hidden == 0 || heads == 0 || hidden % heads != 0) {
    fail("hidden size " + std::to_string(hidden) + " must be a positive multiple of heads " + std::to_string(heads));
  }
  if (layers == 0) fail("layers must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!(joint_lambda >= 0.0)) fail("joint_lambda must be >= 0");
  if (hierarchical()) {
    if (field_layers == 0) fail("field_layers must be >= 1");
    if (fields.size() != m) fail("hierarchical models need one token range per attribute (attach a vocabulary)");
    if (vocab_size < static_cast<std::size_t>(kSpecialTokens)) fail("vocabulary size missing");
    for (const auto& f : fields) {
      if (f.begin < kSpecialTokens || f.size <= 0 || static_cast<std::size_t>(f.begin + f.size) > vocab_size) {
        fail("token range outside vocabulary");
      }
    }
  } else if (head == HeadKind::MLM) {
    fail("MLM head requires a hierarchical family");
  }
  if (family != Family::TwinTower && tower_mask != TowerMask::Both) fail("tower mask applies to TwinTower only");
}

void ModelSpec::attach(const Vocabulary& vocab) {
  fields.clear();
  for (const auto& f : vocab.fields()) fields.push_back({f.begin, f.size, f.kind == FieldKind::Numerical});
  vocab_size = vocab.size();
}

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json j;
  j["family"] = to_string(family);
  j["n"] = n;
  j["m"] = m;
  j["hidden"] = hidden;
  j["heads"] = heads;
  j["layers"] = layers;
  j["field_layers"] = field_layers;
  j["ffn_inner"] = ffn_inner;
  j["dropout"] = dropout;
  j["head"] = to_string(head);
  j["tower_mask"] = to_string(tower_mask);
  j["joint_lambda"] = joint_lambda;
  j["vocab_size"] = vocab_size;
  auto fs = nlohmann::json::array();
  for (const auto& f : fields) fs.push_back({{"begin", f.begin}, {"size", f.size}, {"numerical", f.numerical}});
  j["fields"] = fs;
  return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  try {
    if (j.contains("family")) s.family = family_from_string(j.at("family").get<std::string>());
    s.n = j.value("n", s.n);
    s.m = j.value("m", s.m);
    s.hidden = j.value("hidden", s.hidden);
    s.heads = j.value("heads", s.heads);
    s.layers = j.value("layers", s.layers);
    s.field_layers = j.value("field_layers", s.field_layers);
    s.ffn_inner = j.value("ffn_inner", s.ffn_inner);
    s.dropout = j.value("dropout", s.dropout);
    if (j.contains("head")) s.head = head_from_string(j.at("head").get<std::string>());
    if (j.contains("tower_mask")) s.tower_mask = tower_mask_from_string(j.at("tower_mask").get<std::string>());
    s.joint_lambda = j.value("joint_lambda", s.joint_lambda);
    s.vocab_size = j.value("vocab_size", s.vocab_size);
    if (j.contains("fields")) {
      for (const auto& f : j.at("fields")) {
        s.fields.push_back({f.at("begin").get<std::int32_t>(), f.at("size").get<std::int32_t>(), f.at("numerical").get<bool>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
  return s;
}

std::size_t MaskedTokens::masked_count() const {
  return static_cast<std::size_t>(std::count_if(targets.begin(), targets.end(), [](std::int32_t v) { return v >= 0; }));
}

Model::Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng = Rng(seed).split("init");
  const std::size_t H = spec_.hidden, h = spec_.heads, I = spec_.inner();
  const std::size_t C = outputs();

  if (!spec_.hierarchical()) {
    time_.proj = nn::Linear::make(params_, "time.proj", spec_.m, H, rng);
    time_.pos = params_.add("time.pos", nn::normal_tensor({spec_.n, H}, 0.1, rng));
    time_.has_pos = true;
    time_.enc = nn::Encoder::make(params_, "time.enc", spec_.layers, H, h, I, rng);
    if (spec_.family == Family::TwinTower) {
      feat_.proj = nn::Linear::make(params_, "feat.proj", spec_.n, H, rng);
      feat_.enc = nn::Encoder::make(params_, "feat.enc", spec_.layers, H, h, I, rng);
      gate_.w1 = params_.add("gate.w1", Tensor({H}, 1.0));
      gate_.w2 = params_.add("gate.w2", Tensor({H}, 1.0));
      if (spec_.tower_mask == TowerMask::TimeOnly) {
        nn::set_frozen(params_, "feat.", true);
        params_[gate_.w2].frozen = true;
      } else if (spec_.tower_mask == TowerMask::FeatureOnly) {
        nn::set_frozen(params_, "time.", true);
        params_[gate_.w1].frozen = true;
      }
    }
    head_ = nn::Linear::make(params_, "head", H, C, rng);
    return;
  }

  const std::size_t M = spec_.m;
  tok_embed_ = params_.add("tok_embed", nn::normal_tensor({spec_.vocab_size, H}, 0.5, rng));
  field_pos_ = params_.add("field_pos", nn::normal_tensor({M, H}, 0.1, rng));
  time_pos_ = params_.add("time_pos", nn::normal_tensor({spec_.n, H}, 0.1, rng));
  field_enc_ = nn::Encoder::make(params_, "field_enc", spec_.field_layers, H, h, I, rng);
  seq_enc_ = nn::Encoder::make(params_, "seq_enc", spec_.layers, H, h, I, rng);
  std::size_t numeric = 0;
  numeric_slot_.assign(M, 0);
  for (std::size_t j = 0; j < M; ++j) {
    if (spec_.fields[j].numerical) numeric_slot_[j] = numeric++;
  }
  const bool joint = spec_.family == Family::HierarchicalJoint;
  if (joint && numeric > 0) {
    num_w_ = params_.add("num_w", nn::normal_tensor({numeric, H}, 0.5, rng));
    num_b_ = params_.add("num_b", Tensor({numeric, H}));
  }
  if (spec_.head == HeadKind::MLM) {
    for (std::size_t j = 0; j < M; ++j) {
      const std::size_t width = joint && spec_.fields[j].numerical ? 1 : static_cast<std::size_t>(spec_.fields[j].size);
      mlm_heads_.push_back(nn::Linear::make(params_, "mlm." + std::to_string(j), H, width, rng));
    }
  } else {
    cls_hidden_ = nn::Linear::make(params_, "cls.0", H, H, rng);
    head_ = nn::Linear::make(params_, "cls.1", H, C, rng);
  }
}

std::size_t Model::outputs() const noexcept {
  switch (spec_.head) {
    case HeadKind::BinaryClassifier: return 2;
    case HeadKind::Regressor: return 1;
    case HeadKind::MLM: return 0;
  }
  return 0;
}

std::uint64_t Model::expected_pairs(std::size_t batch) const noexcept {
  const std::uint64_t B = batch, h = spec_.heads, L = spec_.layers, N = spec_.n, M = spec_.m;
  switch (spec_.family) {
    case Family::Vanilla: return B * h * L * N * N;
    case Family::TwinTower: {
      const std::uint64_t time = spec_.tower_mask == TowerMask::FeatureOnly ? 0 : N * N;
      const std::uint64_t feat = spec_.tower_mask == TowerMask::TimeOnly ? 0 : M * M;
      return B * h * L * (time + feat);
    }
    case Family::Hierarchical:
    case Family::HierarchicalJoint: return B * h * (spec_.field_layers * N * M * M + L * N * N);
  }
  return 0;
}

Var Model::features(Tape& t, Batch batch) const {
  if (batch.empty()) throw ShapeError("empty batch");
  const std::size_t N = spec_.n, M = spec_.m;
  Tensor x({batch.size(), N, M});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const FeatureMatrix& f = batch[b]->x;
    if (f.rows != N || f.cols != M || f.data.size() != N * M) {
      throw ShapeError("feature matrix " + std::to_string(f.rows) + "x" + std::to_string(f.cols) + ", model expects " +
                       std::to_string(N) + "x" + std::to_string(M));
    }
    std::copy(f.data.begin(), f.data.end(), x.data.begin() + static_cast<std::ptrdiff_t>(b * N * M));
  }
  return t.constant(std::move(x));
}

Var Model::run_tower(Tape& t, const Tower& tw, Var x, nn::AttentionCounter* counter) {
  Var h = tw.proj(t, params_, x);
  if (tw.has_pos) h = nn::add_broadcast(t, h, t.param(params_[tw.pos]));
  h = nn::dropout(t, h, spec_.dropout);
  h = tw.enc(t, params_, h, spec_.dropout, counter);
  return nn::mean_dim1(t, h);
}

std::pair<std::optional<Var>, std::optional<Var>> Model::towers(Tape& t, Batch batch, nn::AttentionCounter* counter) {
  if (spec_.hierarchical()) throw ConfigError("towers() needs a Vanilla or TwinTower model");
  Var x = features(t, batch);
  std::optional<Var> o1, o2;
  if (spec_.tower_mask != TowerMask::FeatureOnly) o1 = run_tower(t, time_, x, counter);
  if (spec_.family == Family::TwinTower && spec_.tower_mask != TowerMask::TimeOnly) {
    o2 = run_tower(t, feat_, nn::transpose12(t, x), counter);
  }
  return {o1, o2};
}

Var Model::gate(Tape& t, std::optional<Var> o1, std::optional<Var> o2) {
  if (spec_.family != Family::TwinTower) throw ConfigError("gate() needs a TwinTower model");
  std::optional<Var> out;
  if (o1 && spec_.tower_mask != TowerMask::FeatureOnly) out = nn::mul_channels(t, *o1, t.param(params_[gate_.w1]));
  if (o2 && spec_.tower_mask != TowerMask::TimeOnly) {
    Var g2 = nn::mul_channels(t, *o2, t.param(params_[gate_.w2]));
    out = out ? nn::add(t, *out, g2) : g2;
  }
  if (!out) throw ShapeError("gate needs at least one tower output");
  return *out;
}

Var Model::head_out(Tape& t, Var pooled) {
  if (spec_.hierarchical()) {
    if (spec_.head == HeadKind::MLM) throw ConfigError("model has an MLM head; fine-tune it to get a task head");
    return head_(t, params_, nn::gelu(t, cls_hidden_(t, params_, pooled)));
  }
  return head_(t, params_, pooled);
}

std::pair<Var, Var> Model::encode_grids(Tape& t, std::span<const TokenGrid* const> grids,
                                        nn::AttentionCounter* counter) {
  if (grids.empty()) throw ShapeError("empty batch");
  const std::size_t B = grids.size(), N = spec_.n, M = spec_.m, H = spec_.hidden;
  const bool joint = spec_.family == Family::HierarchicalJoint;
  std::vector<std::int32_t> ids(B * N * M);
  std::vector<double> values;
  std::vector<std::size_t> slots;
  std::vector<std::uint8_t> active;
  if (joint) {
    values.assign(ids.size(), 0.0);
    slots.assign(ids.size(), 0);
    active.assign(ids.size(), 0);
  }
  for (std::size_t b = 0; b < B; ++b) {
    const TokenGrid& g = *grids[b];
    if (g.rows != N || g.cols != M || g.ids.size() != N * M) {
      throw ShapeError("token grid " + std::to_string(g.rows) + "x" + std::to_string(g.cols) + ", model expects " +
                       std::to_string(N) + "x" + std::to_string(M));
    }
    for (std::size_t c = 0; c < N * M; ++c) {
      const std::size_t j = c % M;
      const std::int32_t id = g.ids[c];
      const FieldRange& f = spec_.fields[j];
      if (id < 0 || static_cast<std::size_t>(id) >= spec_.vocab_size ||
          (!Vocabulary::is_special(id) && (id < f.begin || id >= f.begin + f.size))) {
        throw VocabularyMismatch("token " + std::to_string(id) + " is outside the range of attribute " +
                                 std::to_string(j));
      }
      const std::size_t at = b * N * M + c;
      ids[at] = id;
      if (joint && f.numerical) {
        const bool masked = id == kMaskToken;
        ids[at] = masked ? kMaskToken : kPadToken;
        if (!masked) {
          values[at] = g.values.empty() ? 0.0 : g.values[c];
          slots[at] = numeric_slot_[j];
          active[at] = 1;
        }
      }
    }
  }
  Var e = nn::embedding(t, t.param(params_[tok_embed_]), ids);
  if (joint && std::any_of(active.begin(), active.end(), [](std::uint8_t a) { return a != 0; })) {
    e = nn::add(t, e, nn::value_embed(t, values, slots, active, t.param(params_[num_w_]), t.param(params_[num_b_])));
  }
  Var cells = nn::reshape(t, e, {B * N, M, H});
  cells = nn::add_broadcast(t, cells, t.param(params_[field_pos_]));
  cells = nn::dropout(t, cells, spec_.dropout);
  Var fields = field_enc_(t, params_, cells, spec_.dropout, counter);
  Var rows = nn::reshape(t, nn::mean_dim1(t, fields), {B, N, H});
  rows = nn::add_broadcast(t, rows, t.param(params_[time_pos_]));
  Var seq = seq_enc_(t, params_, rows, spec_.dropout, counter);
  return {fields, seq};
}

Var Model::forward(Tape& t, Batch batch, nn::AttentionCounter* counter) {
  if (spec_.hierarchical()) {
    std::vector<const TokenGrid*> grids;
    grids.reserve(batch.size());
    for (const Example* e : batch) grids.push_back(&e->g);
    auto [fields, seq] = encode_grids(t, grids, counter);
    (void)fields;
    return head_out(t, nn::mean_dim1(t, seq));
  }
  auto [o1, o2] = towers(t, batch, counter);
  if (spec_.family == Family::Vanilla) return head_out(t, *o1);
  return head_out(t, gate(t, o1, o2));
}

Var Model::supervised_loss(Tape& t, Batch batch, nn::AttentionCounter* counter) {
  Var out = forward(t, batch, counter);
  if (spec_.head == HeadKind::BinaryClassifier) {
    std::vector<std::int32_t> y;
    y.reserve(batch.size());
    for (const Example* e : batch) {
      if (e->label != 0.0 && e->label != 1.0) throw RangeError("binary label must be 0 or 1");
      y.push_back(static_cast<std::int32_t>(e->label));
    }
    return nn::cross_entropy(t, out, y);
  }
  std::vector<double> y;
  y.reserve(batch.size());
  for (const Example* e : batch) y.push_back(e->label);
  return nn::mse(t, out, y);
}

Var Model::mlm_loss(Tape& t, MaskedBatch batch, nn::AttentionCounter* counter) {
  if (!spec_.hierarchical() || spec_.head != HeadKind::MLM) throw ConfigError("mlm_loss needs a hierarchical model with an MLM head");
  const std::size_t N = spec_.n, M = spec_.m, H = spec_.hidden;
  std::vector<const TokenGrid*> grids;
  for (const MaskedTokens* mt : batch) {
    if (mt->targets.size() != mt->grid.ids.size()) throw ShapeError("mask targets do not match grid");
    grids.push_back(&mt->grid);
  }
  auto [fields, seq] = encode_grids(t, grids, counter);
  const std::size_t B = batch.size();
  Var ctx = nn::add_broadcast_mid(t, fields, nn::reshape(t, seq, {B * N, H}));
  ctx = nn::reshape(t, ctx, {B * N * M, H});

  const bool joint = spec_.family == Family::HierarchicalJoint;
  std::optional<Var> ce, se;
  std::size_t n_cat = 0, n_num = 0;
  for (std::size_t j = 0; j < M; ++j) {
    const FieldRange& f = spec_.fields[j];
    const bool regress = joint && f.numerical;
    std::vector<std::size_t> rows;
    std::vector<std::int32_t> cls;
    std::vector<double> vals;
    for (std::size_t b = 0; b < B; ++b) {
      const MaskedTokens& mt = *batch[b];
      for (std::size_t i = 0; i < N; ++i) {
        const std::size_t c = i * M + j;
        const std::int32_t target = mt.targets[c];
        if (target < 0) continue;
        rows.push_back((b * N + i) * M + j);
        if (regress) {
          vals.push_back(mt.grid.values.empty() ? 0.0 : mt.grid.values[c]);
        } else {
          if (target < f.begin || target >= f.begin + f.size) {
            throw VocabularyMismatch("masked target " + std::to_string(target) + " outside attribute " + std::to_string(j));
          }
          cls.push_back(target - f.begin);
        }
      }
    }
    if (rows.empty()) continue;
    Var logits = mlm_heads_[j](t, params_, nn::gather_rows(t, ctx, rows));
    if (regress) {
      Var term = nn::squared_error_sum(t, logits, vals);
      se = se ? nn::add(t, *se, term) : term;
      n_num += rows.size();
    } else {
      Var term = nn::cross_entropy_sum(t, logits, cls);
      ce = ce ? nn::add(t, *ce, term) : term;
      n_cat += rows.size();
    }
  }
  if (!joint) {
    if (!ce) return t.constant(Tensor::scalar(0.0));
    return nn::scale(t, *ce, 1.0 / static_cast<double>(n_cat));
  }
  std::optional<Var> loss;
  if (ce) loss = nn::scale(t, *ce, 1.0 / static_cast<double>(n_cat));
  if (se) {
    Var r = nn::scale(t, *se, spec_.joint_lambda / static_cast<double>(n_num));
    loss = loss ? nn::add(t, *loss, r) : r;
  }
  return loss ? *loss : t.constant(Tensor::scalar(0.0));
}

std::vector<double> Model::predict(std::span<const Example> examples, nn::AttentionCounter* counter, std::size_t chunk) {
  std::vector<double> out;
  out.reserve(examples.size());
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t s = 0; s < examples.size(); s += chunk) {
    const std::size_t e = std::min(examples.size(), s + chunk);
    std::vector<const Example*> batch;
    for (std::size_t i = s; i < e; ++i) batch.push_back(&examples[i]);
    Tape t(false);
    const Tensor& y = t.value(forward(t, batch, counter));
    if (spec_.head == HeadKind::BinaryClassifier) {
      auto p = nn::softmax_rows(y.data, 2);
      for (std::size_t r = 0; r < batch.size(); ++r) out.push_back(p[r * 2 + 1]);
    } else {
      out.insert(out.end(), y.data.begin(), y.data.end());
    }
  }
  return out;
}

}  // namespace tabseq
