#include "leaffed/config.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace leaffed {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// A JSON object being read; remembers which keys were consumed so that
// leftovers can be reported as unknown fields.
class Section {
 public:
  Section(const json* node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && node_->is_null()) node_ = nullptr;
    if (node_ && !node_->is_object()) throw ConfigError(path_, "expected an object");
  }

  bool present() const { return node_ != nullptr; }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const char* key) {
    used_.insert(key);
    if (!node_) return nullptr;
    const auto it = node_->find(key);
    return it == node_->end() ? nullptr : &*it;
  }

  std::uint64_t count(const char* key, std::uint64_t fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_unsigned()) throw ConfigError(at(key), "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  double number(const char* key, double fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError(at(key), "expected a number");
    return v->get<double>();
  }

  bool flag(const char* key, bool fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
    return v->get<bool>();
  }

  std::string text(const char* key, const std::string& fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(at(key), "expected a string");
    return v->get<std::string>();
  }

  template <typename Parse>
  auto choice(const char* key, const std::string& fallback, Parse parse) {
    const std::string name = text(key, fallback);
    try {
      return parse(name);
    } catch (const ValidationError& e) {
      throw ConfigError(at(key), e.what());
    }
  }

  // Present-but-null children count as absent.
  Section child(const char* key) { return Section(find(key), at(key)); }
  bool is_null(const char* key) {
    const json* v = find(key);
    return v && v->is_null();
  }

  void finish() const {
    if (!node_) return;
    for (const auto& item : node_->items()) {
      if (used_.count(item.key()) == 0) throw ConfigError(at(item.key()), "unknown field");
    }
  }

 private:
  const json* node_;
  std::string path_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& path, const std::string& message) {
  if (!ok) throw ConfigError(path, message);
}

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

// Re-raises a module's ValidationError as a ConfigError under `section`.
// Messages of the form "a.b: text" keep their own field path.
template <typename Fn>
void within(const std::string& section, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    const std::string m = e.what();
    const auto colon = m.find(": ");
    if (m.rfind(section, 0) == 0 && colon != std::string::npos && m.find(' ') > colon) {
      throw ConfigError(m.substr(0, colon), m.substr(colon + 2));
    }
    throw ConfigError(section, m);
  }
}

SyntheticSpec read_synthetic(Section s, std::uint64_t seed) {
  SyntheticSpec out;
  out.classes = s.count("classes", out.classes);
  out.per_class = s.count("per_class", out.per_class);
  out.height = s.count("height", out.height);
  out.width = s.count("width", out.width);
  out.channels = s.count("channels", out.channels);
  out.seed = s.count("seed", seed);
  out.noise = s.number("noise", out.noise);
  out.jitter = s.number("jitter", out.jitter);
  s.finish();
  return out;
}

SplitSpec read_split(Section s, std::uint64_t seed) {
  SplitSpec out;
  out.train = s.number("train", out.train);
  out.val = s.number("val", out.val);
  out.test = s.number("test", out.test);
  out.seed = s.count("seed", seed);
  out.stratified = s.flag("stratified", out.stratified);
  s.finish();
  return out;
}

AugmentSpec read_augment(Section s, std::uint64_t seed) {
  AugmentSpec out;
  if (const json* t = s.find("transforms")) {
    const std::string path = s.at("transforms");
    if (!t->is_array()) throw ConfigError(path, "expected a list of transform names");
    out.transforms.clear();
    for (std::size_t i = 0; i < t->size(); ++i) {
      const std::string item = path + "[" + std::to_string(i) + "]";
      if (!(*t)[i].is_string()) throw ConfigError(item, "expected a transform name");
      try {
        out.transforms.push_back(parse_transform((*t)[i].get<std::string>()));
      } catch (const ValidationError& e) {
        throw ConfigError(item, e.what());
      }
    }
  }
  out.target_per_class = s.count("target_per_class", out.target_per_class);
  out.seed = s.count("seed", seed);
  out.max_rotation_degrees = s.number("max_rotation_degrees", out.max_rotation_degrees);
  out.max_translation_fraction = s.number("max_translation_fraction", out.max_translation_fraction);
  s.finish();
  return out;
}

DataConfig read_data(Section s, std::uint64_t seed) {
  DataConfig out;
  out.source = s.choice("source", "synthetic", [](const std::string& n) {
    if (n == "synthetic") return DataSource::synthetic;
    if (n == "directory") return DataSource::directory;
    throw ValidationError("unknown data source '" + n + "' (expected synthetic or directory)");
  });
  out.synthetic = read_synthetic(s.child("synthetic"), seed);
  out.directory = s.text("directory", "");
  out.height = s.count("height", out.height);
  out.width = s.count("width", out.width);
  out.split = read_split(s.child("split"), seed);
  if (Section a = s.child("augment"); a.present()) out.augment = read_augment(std::move(a), seed);
  s.finish();
  return out;
}

ModelSpec read_model(Section s, std::uint64_t seed) {
  ModelSpec out = default_experiment_model();
  out.backbone = s.text("backbone", out.backbone);
  out.hidden = s.count("hidden", out.hidden);
  out.seed = s.count("seed", seed);
  if (s.is_null("deep_block")) {
    out.deep_block.reset();
  } else if (Section d = s.child("deep_block"); d.present()) {
    DeepBlockSpec block;
    block.width = d.count("width", block.width);
    block.loops = d.count("loops", block.loops);
    block.repeats = d.count("repeats", block.repeats);
    block.seq_width = d.count("seq_width", block.seq_width);
    d.finish();
    out.deep_block = block;
  }
  s.finish();
  return out;
}

OptimizerConfig read_optimizer(Section s) {
  OptimizerConfig out;
  out.kind = s.choice("kind", "adam", [](const std::string& n) { return parse_optimizer(n); });
  out.learning_rate = s.number("learning_rate", out.learning_rate);
  out.beta1 = s.number("beta1", out.beta1);
  out.beta2 = s.number("beta2", out.beta2);
  out.epsilon = s.number("epsilon", out.epsilon);
  s.finish();
  return out;
}

FederationConfig read_federation(Section s, std::uint64_t seed) {
  FederationConfig out;
  out.clients = s.count("clients", out.clients);
  out.rounds = s.count("rounds", out.rounds);
  out.local_epochs = s.count("local_epochs", out.local_epochs);
  out.batch_size = s.count("batch_size", out.batch_size);
  out.clients_per_round = s.count("clients_per_round", out.clients_per_round);
  out.aggregation = s.choice("aggregation", "weights", [](const std::string& n) { return parse_aggregation(n); });
  out.batch_count_weights = s.flag("batch_count_weights", out.batch_count_weights);
  out.parallel = s.flag("parallel", out.parallel);
  out.threads = s.count("threads", out.threads);
  out.seed = s.count("seed", seed);
  Section sh = s.child("shards");
  out.shards.strategy =
      sh.choice("strategy", "iid", [](const std::string& n) { return parse_shard_strategy(n); });
  out.shards.alpha = sh.number("alpha", out.shards.alpha);
  out.shards.classes_per_client = sh.count("classes_per_client", out.shards.classes_per_client);
  out.shards.seed = sh.count("seed", seed);
  out.shards.max_attempts = sh.count("max_attempts", out.shards.max_attempts);
  sh.finish();
  s.finish();
  return out;
}

MaoConfig read_mao(Section s, std::uint64_t seed) {
  MaoConfig out;
  out.population = s.count("population", out.population);
  out.generations = s.count("generations", out.generations);
  out.tournament = s.count("tournament", out.tournament);
  out.mutation_probability = s.number("mutation_probability", out.mutation_probability);
  out.mutation_scale = s.number("mutation_scale", out.mutation_scale);
  out.finetune_epochs = s.count("finetune_epochs", out.finetune_epochs);
  out.local_search_budget = s.count("local_search_budget", out.local_search_budget);
  out.batch_size = s.count("batch_size", out.batch_size);
  out.seed = s.count("seed", seed);
  out.parallel = s.flag("parallel", out.parallel);
  out.threads = s.count("threads", out.threads);
  s.finish();
  return out;
}

}  // namespace

ModelSpec default_experiment_model() {
  ModelSpec spec;
  spec.backbone = "cnn-s";
  spec.deep_block = DeepBlockSpec{};
  return spec;
}

void ExperimentConfig::validate() const {
  require(!output_dir.empty(), "output_dir", "must not be empty");

  const auto& d = data;
  if (d.source == DataSource::synthetic) {
    const auto& s = d.synthetic;
    require(s.classes >= 2, "data.synthetic.classes", "must be at least 2");
    require(s.per_class >= 1, "data.synthetic.per_class", "must be at least 1");
    require(s.height >= 8, "data.synthetic.height", "must be at least 8");
    require(s.width >= 8, "data.synthetic.width", "must be at least 8");
    require(s.channels == 1 || s.channels == 3, "data.synthetic.channels", "must be 1 or 3");
    require(s.noise >= 0.0 && s.noise <= 1.0, "data.synthetic.noise", "must lie in [0, 1]");
    require(s.jitter >= 0.0 && s.jitter <= 0.25, "data.synthetic.jitter", "must lie in [0, 0.25]");
  } else {
    require(!d.directory.empty(), "data.directory", "is required when data.source is directory");
    require(d.height >= 8, "data.height", "must be at least 8");
    require(d.width >= 8, "data.width", "must be at least 8");
  }
  require(finite_positive(d.split.train), "data.split.train", "must be positive");
  require(finite_positive(d.split.val), "data.split.val", "must be positive");
  require(finite_positive(d.split.test), "data.split.test", "must be positive");
  within("data.split", [&] { d.split.validate(); });
  if (d.augment) within("data.augment", [&] { d.augment->validate(); });

  within("model", [&] {
    ModelSpec probe = model;
    probe.height = d.source == DataSource::synthetic ? d.synthetic.height : d.height;
    probe.width = d.source == DataSource::synthetic ? d.synthetic.width : d.width;
    probe.channels = 1;
    probe.classes = d.source == DataSource::synthetic ? d.synthetic.classes : 2;
    probe.validate();
  });

  const auto& opt = federation.optimizer;
  require(finite_positive(opt.learning_rate), "optimizer.learning_rate", "must be positive and finite");
  require(opt.beta1 >= 0.0 && opt.beta1 < 1.0, "optimizer.beta1", "must lie in [0, 1)");
  require(opt.beta2 >= 0.0 && opt.beta2 < 1.0, "optimizer.beta2", "must lie in [0, 1)");
  require(finite_positive(opt.epsilon), "optimizer.epsilon", "must be positive");

  within("federation", [&] { federation.validate(); });
  require(finite_positive(federation.shards.alpha), "federation.shards.alpha", "must be positive and finite");
  require(federation.shards.classes_per_client >= 1, "federation.shards.classes_per_client", "must be at least 1");
  require(federation.shards.max_attempts >= 1, "federation.shards.max_attempts", "must be at least 1");

  if (mao) within("mao", [&] { mao->validate(); });
}

ExperimentConfig parse_experiment_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("(document)", std::string("malformed JSON: ") + e.what());
  }
  Section root(&doc, "");
  if (!root.present()) throw ConfigError("(document)", "expected an object");
  ExperimentConfig out;
  out.seed = root.count("seed", out.seed);
  out.output_dir = root.text("output_dir", out.output_dir.string());
  out.data = read_data(root.child("data"), out.seed);
  out.model = read_model(root.child("model"), out.seed);
  out.federation = read_federation(root.child("federation"), out.seed);
  out.federation.optimizer = read_optimizer(root.child("optimizer"));
  if (Section m = root.child("mao"); m.present()) out.mao = read_mao(std::move(m), out.seed);
  out.averaging = root.choice("averaging", "macro", [](const std::string& n) { return parse_averaging(n); });
  out.export_test_split = root.flag("export_test_split", out.export_test_split);
  root.finish();
  out.validate();
  return out;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("(document)", "cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_experiment_config(text.str());
}

std::string experiment_config_json(const ExperimentConfig& c) {
  ojson j;
  j["output_dir"] = c.output_dir.generic_string();
  j["seed"] = c.seed;

  ojson data;
  data["source"] = c.data.source == DataSource::synthetic ? "synthetic" : "directory";
  const auto& s = c.data.synthetic;
  data["synthetic"] = {{"classes", s.classes}, {"per_class", s.per_class}, {"height", s.height},
                       {"width", s.width},     {"channels", s.channels},   {"seed", s.seed},
                       {"noise", s.noise},     {"jitter", s.jitter}};
  data["directory"] = c.data.directory.generic_string();
  data["height"] = c.data.height;
  data["width"] = c.data.width;
  const auto& sp = c.data.split;
  data["split"] = {{"train", sp.train}, {"val", sp.val}, {"test", sp.test}, {"seed", sp.seed},
                   {"stratified", sp.stratified}};
  if (c.data.augment) {
    const auto& a = *c.data.augment;
    ojson names = ojson::array();
    for (Transform t : a.transforms) names.push_back(transform_name(t));
    data["augment"] = {{"transforms", names},
                       {"target_per_class", a.target_per_class},
                       {"seed", a.seed},
                       {"max_rotation_degrees", a.max_rotation_degrees},
                       {"max_translation_fraction", a.max_translation_fraction}};
  } else {
    data["augment"] = nullptr;
  }
  j["data"] = data;

  ojson model;
  model["backbone"] = c.model.backbone;
  model["hidden"] = c.model.hidden;
  model["seed"] = c.model.seed;
  if (c.model.deep_block) {
    const auto& b = *c.model.deep_block;
    model["deep_block"] = {{"width", b.width}, {"loops", b.loops}, {"repeats", b.repeats}, {"seq_width", b.seq_width}};
  } else {
    model["deep_block"] = nullptr;
  }
  j["model"] = model;

  const auto& o = c.federation.optimizer;
  j["optimizer"] = {{"kind", optimizer_name(o.kind)}, {"learning_rate", o.learning_rate}, {"beta1", o.beta1},
                    {"beta2", o.beta2},                 {"epsilon", o.epsilon}};

  const auto& f = c.federation;
  ojson fed;
  fed["clients"] = f.clients;
  fed["rounds"] = f.rounds;
  fed["local_epochs"] = f.local_epochs;
  fed["batch_size"] = f.batch_size;
  fed["clients_per_round"] = f.clients_per_round;
  fed["aggregation"] = aggregation_name(f.aggregation);
  fed["batch_count_weights"] = f.batch_count_weights;
  fed["parallel"] = f.parallel;
  fed["threads"] = f.threads;
  fed["seed"] = f.seed;
  fed["shards"] = {{"strategy", shard_strategy_name(f.shards.strategy)},
                   {"alpha", f.shards.alpha},
                   {"classes_per_client", f.shards.classes_per_client},
                   {"seed", f.shards.seed},
                   {"max_attempts", f.shards.max_attempts}};
  j["federation"] = fed;

  if (c.mao) {
    const auto& m = *c.mao;
    ojson mao;
    mao["population"] = m.population;
    mao["generations"] = m.generations;
    mao["tournament"] = m.tournament;
    mao["mutation_probability"] = m.mutation_probability;
    mao["mutation_scale"] = m.mutation_scale;
    mao["finetune_epochs"] = m.finetune_epochs;
    mao["local_search_budget"] = m.local_search_budget;
    mao["batch_size"] = m.batch_size;
    mao["seed"] = m.seed;
    mao["parallel"] = m.parallel;
    mao["threads"] = m.threads;
    j["mao"] = mao;
  } else {
    j["mao"] = nullptr;
  }
  j["averaging"] = averaging_name(c.averaging);
  j["export_test_split"] = c.export_test_split;
  return j.dump(2) + "\n";
}

}  // namespace leaffed
