#include "leaffed/model.hpp"

#include <array>
#include <cmath>
#include <nlohmann/json.hpp>

#include "leaffed/random.hpp"

namespace leaffed {

namespace {

constexpr std::array<std::string_view, 5> kBackbones{"mlp-s", "mlp-m", "cnn-s", "cnn-m", "dense-s"};

std::string registry_list() {
  std::string out;
  for (auto id : kBackbones) {
    if (!out.empty()) out += ", ";
    out += id;
  }
  return out;
}

// Shape-level pass: records layers and creates initialized parameters.
class BuildContext {
 public:
  using Value = Shape;  // per-sample shape

  BuildContext(std::uint64_t seed, std::vector<LayerInfo>& layers, std::vector<std::string>& names,
               std::vector<Tensor>& params)
      : seed_(seed), layers_(layers), names_(names), params_(params) {}

  Value input(const Shape& s) { return s; }

  Value dense(const std::string& name, const Value& x, std::size_t units) {
    const std::size_t fan_in = x.back();
    add_param(name + ".weight", {fan_in, units}, fan_in);
    add_param(name + ".bias", {units}, 0);
    return record(name, "dense", replace_last(x, units));
  }
  Value conv(const std::string& name, const Value& x, std::size_t filters) {
    const std::size_t fan_in = 9 * x[2];
    add_param(name + ".kernel", {fan_in, filters}, fan_in);
    add_param(name + ".bias", {filters}, 0);
    return record(name, "conv3x3", {x[0], x[1], filters});
  }
  Value relu(const std::string& name, const Value& x) { return record(name, "relu", x); }
  Value pool(const std::string& name, const Value& x) {
    return record(name, "avg_pool2", {x[0] / 2, x[1] / 2, x[2]});
  }
  Value flatten(const std::string& name, const Value& x) { return record(name, "flatten", {shape_size(x)}); }
  Value concat(const std::string& name, const Value& a, const Value& b) {
    return record(name, "concat", {a[0] + b[0]});
  }
  Value repeat(const std::string& name, const Value& x, std::size_t r) {
    return record(name, "repeat_vector", {r, x[0]});
  }
  // Folds timesteps into the batch axis so one dense is shared across them.
  Value to_steps(const Value& x) { return {x[1]}; }
  Value from_steps(const std::string& name, const Value& x, std::size_t r) {
    return record(name, "flatten", {r * x[0]});
  }

 private:
  static Shape replace_last(Shape s, std::size_t v) {
    s.back() = v;
    return s;
  }
  Value record(const std::string& name, const char* kind, Shape out) {
    layers_.push_back({name, kind, out});
    return out;
  }
  void add_param(std::string name, Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape), 0.0f);
    if (fan_in > 0) {
      Rng rng(derive_seed(seed_, params_.size()));
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-limit, limit));
    }
    names_.push_back(std::move(name));
    params_.push_back(std::move(t));
  }

  std::uint64_t seed_;
  std::vector<LayerInfo>& layers_;
  std::vector<std::string>& names_;
  std::vector<Tensor>& params_;
};

// Tape-level pass: consumes parameters in creation order.
template <typename T>
class TapeContext {
 public:
  using Value = Var;

  TapeContext(Tape<T>& tape, std::span<const Var> params) : tape_(tape), params_(params) {}

  Value input(Var x) { return x; }
  Value dense(const std::string&, Var x, std::size_t) {
    const Var w = next(), b = next();
    return ops::dense(tape_, x, w, b);
  }
  Value conv(const std::string&, Var x, std::size_t) {
    const Var k = next(), b = next();
    return ops::conv3x3(tape_, x, k, b);
  }
  Value relu(const std::string&, Var x) { return ops::relu(tape_, x); }
  Value pool(const std::string&, Var x) { return ops::avg_pool2(tape_, x); }
  Value flatten(const std::string&, Var x) {
    const auto& s = tape_.value(x).shape();
    return ops::reshape(tape_, x, {s[0], tape_.value(x).size() / s[0]});
  }
  Value concat(const std::string&, Var a, Var b) { return ops::concat(tape_, a, b); }
  Value repeat(const std::string&, Var x, std::size_t r) { return ops::repeat_vector(tape_, x, r); }
  Value to_steps(Var x) {
    const auto& s = tape_.value(x).shape();
    return ops::reshape(tape_, x, {s[0] * s[1], s[2]});
  }
  Value from_steps(const std::string&, Var x, std::size_t r) {
    const auto& s = tape_.value(x).shape();
    return ops::reshape(tape_, x, {s[0] / r, r * s[1]});
  }

  std::size_t consumed() const noexcept { return next_; }

 private:
  Var next() {
    if (next_ >= params_.size()) throw ValidationError("model parameter list is too short");
    return params_[next_++];
  }

  Tape<T>& tape_;
  std::span<const Var> params_;
  std::size_t next_ = 0;
};

// The network, written once for both contexts.
template <typename Ctx>
typename Ctx::Value architecture(const ModelSpec& spec, Ctx& ctx, typename Ctx::Value x,
                                 std::size_t* feature_width = nullptr) {
  using V = typename Ctx::Value;
  const std::size_t hidden = spec.hidden;
  const std::string& id = spec.backbone;
  V v;
  if (id == "mlp-s" || id == "mlp-m") {
    v = ctx.flatten("flatten", x);
    const int depth = id == "mlp-s" ? 1 : 2;
    for (int i = 0; i < depth; ++i) {
      const std::string name = "dense" + std::to_string(i);
      v = ctx.relu(name + ".relu", ctx.dense(name, v, hidden));
    }
  } else if (id == "cnn-s" || id == "cnn-m") {
    v = x;
    const std::array<std::size_t, 2> filters{8, 16};
    const int stages = id == "cnn-s" ? 1 : 2;
    for (int i = 0; i < stages; ++i) {
      const std::string name = "conv" + std::to_string(i);
      v = ctx.pool(name + ".pool", ctx.relu(name + ".relu", ctx.conv(name, v, filters[i])));
    }
    v = ctx.flatten("flatten", v);
    v = ctx.relu("dense0.relu", ctx.dense("dense0", v, hidden));
  } else if (id == "dense-s") {
    // Each hidden layer sees the concatenation of all earlier activations.
    const std::size_t growth = std::max<std::size_t>(1, hidden / 2);
    v = ctx.flatten("flatten", x);
    v = ctx.relu("dense0.relu", ctx.dense("dense0", v, hidden));
    for (int i = 1; i <= 2; ++i) {
      const std::string name = "dense" + std::to_string(i);
      const V h = ctx.relu(name + ".relu", ctx.dense(name, v, growth));
      v = ctx.concat(name + ".concat", v, h);
    }
  } else {
    throw ValidationError("model.backbone: unknown backbone '" + id + "' (registered: " + registry_list() + ")");
  }
  if constexpr (std::is_same_v<V, Shape>) {
    if (feature_width) *feature_width = v[0];
  }

  if (spec.deep_block) {
    const DeepBlockSpec& db = *spec.deep_block;
    for (std::size_t i = 0; i < db.loops; ++i) {
      const std::string name = "deep.loop" + std::to_string(i);
      const V h = ctx.relu(name + ".relu", ctx.dense(name, v, db.width));
      v = ctx.concat(name + ".concat", v, h);
    }
    v = ctx.repeat("deep.repeat", v, db.repeats);
    V steps = ctx.to_steps(v);
    steps = ctx.relu("deep.step.relu", ctx.dense("deep.step", steps, db.seq_width));
    v = ctx.from_steps("deep.flatten", steps, db.repeats);
  }
  return ctx.dense("head", v, spec.classes);
}

}  // namespace

void DeepBlockSpec::validate() const {
  if (width < 1) throw ValidationError("model.deep_block.width must be at least 1");
  if (loops < 1) throw ValidationError("model.deep_block.loops must be at least 1");
  if (repeats < 1) throw ValidationError("model.deep_block.repeats must be at least 1");
  if (seq_width < 1) throw ValidationError("model.deep_block.seq_width must be at least 1");
}

void ModelSpec::validate() const {
  if (!is_backbone(backbone)) {
    throw ValidationError("model.backbone: unknown backbone '" + backbone + "' (registered: " + registry_list() +
                          ")");
  }
  if (height < 8 || width < 8) throw ValidationError("model.input: height and width must be at least 8");
  if (channels < 1) throw ValidationError("model.input: channels must be at least 1");
  if (classes < 2) throw ValidationError("model.classes must be at least 2");
  if (hidden < 1) throw ValidationError("model.hidden must be at least 1");
  if (deep_block) deep_block->validate();
}

std::string ModelSpec::to_json() const {
  nlohmann::ordered_json j;
  j["backbone"] = backbone;
  j["input"] = {height, width, channels};
  j["classes"] = classes;
  j["hidden"] = hidden;
  if (deep_block) {
    j["deep_block"] = {{"width", deep_block->width},
                       {"loops", deep_block->loops},
                       {"repeats", deep_block->repeats},
                       {"seq_width", deep_block->seq_width}};
  } else {
    j["deep_block"] = nullptr;
  }
  j["seed"] = seed;
  return j.dump();
}

ModelSpec ModelSpec::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelSpec s;
    s.backbone = j.at("backbone").get<std::string>();
    const auto& in = j.at("input");
    if (!in.is_array() || in.size() != 3) throw ValidationError("model spec input must list 3 dimensions");
    s.height = in[0].get<std::size_t>();
    s.width = in[1].get<std::size_t>();
    s.channels = in[2].get<std::size_t>();
    s.classes = j.at("classes").get<std::size_t>();
    s.hidden = j.at("hidden").get<std::size_t>();
    if (const auto& db = j.at("deep_block"); !db.is_null()) {
      s.deep_block = DeepBlockSpec{db.at("width").get<std::size_t>(), db.at("loops").get<std::size_t>(),
                                   db.at("repeats").get<std::size_t>(), db.at("seq_width").get<std::size_t>()};
    }
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model spec: ") + e.what());
  }
}

std::span<const std::string_view> backbone_registry() { return kBackbones; }

bool is_backbone(std::string_view id) {
  for (auto k : kBackbones) {
    if (k == id) return true;
  }
  return false;
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  BuildContext ctx(spec_.seed, layers_, names_, params_);
  const Shape out = architecture(spec_, ctx, ctx.input(spec_.input_shape()), &feature_width_);
  if (out != Shape{spec_.classes}) throw ShapeError("model output " + shape_string(out) + " is not (classes)");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

Tensor& Model::parameter(std::string_view name) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return params_[i];
  }
  throw ValidationError("model has no parameter '" + std::string(name) + "'");
}

const Tensor& Model::parameter(std::string_view name) const {
  return const_cast<Model*>(this)->parameter(name);
}

void Model::check_batch(const Tensor& batch) const {
  const Shape& s = batch.shape();
  if (s.size() != 4 || s[0] == 0 || s[1] != spec_.height || s[2] != spec_.width || s[3] != spec_.channels) {
    throw ShapeError("model input " + shape_string(s) + " does not match (n, " + std::to_string(spec_.height) +
                     ", " + std::to_string(spec_.width) + ", " + std::to_string(spec_.channels) + ")");
  }
}

template <typename T>
Var Model::forward_on_tape(Tape<T>& tape, Var input, std::span<const Var> params) const {
  if (params.size() != params_.size()) throw ValidationError("parameter list does not match the model");
  TapeContext<T> ctx(tape, params);
  return architecture(spec_, ctx, ctx.input(input));
}

Tensor Model::forward(const Tensor& batch) const {
  check_batch(batch);
  Tape<float> tape;
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(tape.constant(p));
  const Var out = forward_on_tape(tape, tape.constant(batch), vars);
  return tape.value(out);
}

template Var Model::forward_on_tape<float>(Tape<float>&, Var, std::span<const Var>) const;
template Var Model::forward_on_tape<double>(Tape<double>&, Var, std::span<const Var>) const;

}  // namespace leaffed
