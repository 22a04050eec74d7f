#include "funcnet/config.hpp"

#include <fstream>
#include <set>

#include "funcnet/errors.hpp"

namespace funcnet {

std::string_view to_string(ModelKind kind) { return kind == ModelKind::FuncNet ? "funcnet" : "plain"; }

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "funcnet") return ModelKind::FuncNet;
  if (name == "plain") return ModelKind::Plain;
  throw ConfigError("unknown model '" + std::string(name) + "' (expected funcnet or plain)");
}

std::filesystem::path default_manifest() { return std::filesystem::path(FUNCNET_DATA_DIR) / "corpus" / "manifest.csv"; }

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("train." + what); };
  if (!(lr0 > 0.0)) fail("lr0 must be positive");
  if (!(beta1 > 0.0 && beta1 < beta2 && beta2 < 1.0)) fail("betas must satisfy 0 < beta1 < beta2 < 1");
  if (!(eps > 0.0)) fail("eps must be positive");
  if (batch_n == 0) fail("batch_n must be positive");
  if (levels_per_batch == 0 || batch_n % levels_per_batch != 0) {
    fail("batch_n (" + std::to_string(batch_n) + ") must be divisible by levels_per_batch (" +
         std::to_string(levels_per_batch) + ")");
  }
  if (patch == 0) fail("patch must be positive");
  if (align8() && patch % 8 != 0) fail("patch must be a multiple of 8 for deblocking");
  if (decay_every == 0) fail("decay_every must be positive");
  if (!(divergence_factor > 1.0)) fail("divergence_factor must exceed 1");
  if (divergence_patience == 0) fail("divergence_patience must be positive");
}

NetworkConfig RunConfig::network() const {
  return default_backbone(task_channels(train.task), task_domain(train.task), effective_map(), width, blocks);
}

void RunConfig::validate() const {
  train.validate();
  if (width == 0) throw ConfigError("network.width must be positive");
  if (model == ModelKind::Plain && map) throw ConfigError("network.map does not apply to plain models");
  if (output.checkpoint_every == 0) throw ConfigError("output.checkpoint_every must be positive");
  if (output.validate_every == 0) throw ConfigError("output.validate_every must be positive");
}

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      if constexpr (std::is_unsigned_v<T>) {
        if (!it->is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where(key) + " has the wrong type (" + it->dump() + ")");
    }
  }

  const Json* child(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown key " + where(key));
    }
  }

  [[nodiscard]] std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "document" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
auto with_context(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

void read_train(ObjectReader& r, TrainConfig& t) {
  std::string task(to_string(t.task));
  r.read("task", task);
  t.task = with_context(r.where("task"), [&] { return task_from_string(task); });
  r.read("lr0", t.lr0);
  r.read("beta1", t.beta1);
  r.read("beta2", t.beta2);
  r.read("eps", t.eps);
  r.read("batch_n", t.batch_n);
  r.read("patch", t.patch);
  r.read("total_iters", t.total_iters);
  r.read("decay_every", t.decay_every);
  r.read("seed", t.seed);
  r.read("levels_per_batch", t.levels_per_batch);
  r.read("divergence_factor", t.divergence_factor);
  r.read("divergence_patience", t.divergence_patience);
}

}  // namespace

Json to_json(const TrainConfig& t) {
  return Json{{"task", to_string(t.task)},
              {"lr0", t.lr0},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"eps", t.eps},
              {"batch_n", t.batch_n},
              {"patch", t.patch},
              {"total_iters", t.total_iters},
              {"decay_every", t.decay_every},
              {"seed", t.seed},
              {"levels_per_batch", t.levels_per_batch},
              {"divergence_factor", t.divergence_factor},
              {"divergence_patience", t.divergence_patience}};
}

TrainConfig train_config_from_json(const Json& doc) {
  TrainConfig t;
  ObjectReader r(doc, "train");
  read_train(r, t);
  r.finish();
  return t;
}

RunConfig run_config_from_json(const Json& doc, const std::filesystem::path& base_dir) {
  RunConfig c;
  ObjectReader root(doc, "");
  std::string model(to_string(c.model));
  root.read("model", model);
  c.model = with_context("model", [&] { return model_kind_from_string(model); });

  if (const Json* net = root.child("network")) {
    ObjectReader r(*net, "network");
    if (r.child("map") != nullptr) {
      std::string map;
      r.read("map", map);
      c.map = with_context("network.map", [&] { return map_kind_from_string(map); });
    }
    r.read("width", c.width);
    r.read("blocks", c.blocks);
    r.finish();
  }
  if (const Json* train = root.child("train")) {
    ObjectReader r(*train, "train");
    read_train(r, c.train);
    r.finish();
  }
  if (const Json* data = root.child("data")) {
    ObjectReader r(*data, "data");
    std::string manifest;
    r.read("manifest", manifest);
    if (!manifest.empty()) c.data.manifest = manifest;
    r.read("train_split", c.data.train_split);
    r.read("val_split", c.data.val_split);
    r.finish();
  }
  if (const Json* out = root.child("output")) {
    ObjectReader r(*out, "output");
    std::string dir;
    r.read("dir", dir);
    if (!dir.empty()) c.output.dir = dir;
    r.read("checkpoint_every", c.output.checkpoint_every);
    r.read("validate_every", c.output.validate_every);
    r.finish();
  }
  root.finish();
  if (!c.data.manifest.empty() && c.data.manifest.is_relative() && !base_dir.empty()) {
    c.data.manifest = base_dir / c.data.manifest;
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return run_config_from_json(doc, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Json training_echo(const RunConfig& c) {
  Json network{{"width", c.width}, {"blocks", c.blocks}};
  if (c.map) network["map"] = to_string(*c.map);
  return Json{{"model", to_string(c.model)}, {"network", network}, {"train", to_json(c.train)}};
}

Json to_json(const RunConfig& c) {
  Json doc = training_echo(c);
  doc["data"] = Json{{"manifest", c.data.manifest.string()},
                     {"train_split", c.data.train_split},
                     {"val_split", c.data.val_split}};
  doc["output"] = Json{{"dir", c.output.dir.string()},
                       {"checkpoint_every", c.output.checkpoint_every},
                       {"validate_every", c.output.validate_every}};
  return doc;
}

namespace {

std::string_view layer_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::PReLU: return "prelu";
    case LayerKind::ChannelAffine: return "affine";
    case LayerKind::ResidualBegin: return "residual_begin";
    case LayerKind::ResidualEnd: return "residual_end";
    case LayerKind::GlobalSkipAdd: return "global_skip";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (auto kind : {LayerKind::Conv, LayerKind::PReLU, LayerKind::ChannelAffine, LayerKind::ResidualBegin,
                    LayerKind::ResidualEnd, LayerKind::GlobalSkipAdd}) {
    if (layer_name(kind) == name) return kind;
  }
  throw ConfigError("unknown layer kind '" + name + "'");
}

}  // namespace

Json to_json(const NetworkConfig& config) {
  Json layers = Json::array();
  for (const auto& l : config.layers) {
    Json j{{"kind", layer_name(l.kind)}};
    if (l.kind == LayerKind::Conv) {
      j["in"] = l.in_ch;
      j["out"] = l.out_ch;
      j["k"] = l.k;
    } else if (l.kind == LayerKind::PReLU || l.kind == LayerKind::ChannelAffine) {
      j["ch"] = l.ch;
    }
    layers.push_back(j);
  }
  return Json{{"input_channels", config.input_channels},
              {"domain", Json::array({config.domain.lower(), config.domain.upper()})},
              {"map", to_string(config.map)},
              {"residual_output", config.residual_output},
              {"layers", layers}};
}

NetworkConfig network_config_from_json(const Json& doc) {
  try {
    NetworkConfig c;
    c.input_channels = doc.at("input_channels").get<std::size_t>();
    const auto& d = doc.at("domain");
    c.domain = ParamDomain(d.at(0).get<double>(), d.at(1).get<double>());
    c.map = map_kind_from_string(doc.at("map").get<std::string>());
    c.residual_output = doc.at("residual_output").get<bool>();
    for (const auto& j : doc.at("layers")) {
      LayerSpec l;
      l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
      if (l.kind == LayerKind::Conv) {
        l.in_ch = j.at("in").get<std::size_t>();
        l.out_ch = j.at("out").get<std::size_t>();
        l.k = j.at("k").get<std::size_t>();
      } else if (l.kind == LayerKind::PReLU || l.kind == LayerKind::ChannelAffine) {
        l.ch = j.at("ch").get<std::size_t>();
      }
      c.layers.push_back(l);
    }
    validate(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed network description: ") + e.what());
  }
}

}  // namespace funcnet
