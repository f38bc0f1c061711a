#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dpars/error.hpp"
#include "dpars/model_io.hpp"

namespace dpars {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kFormat = "dpars-model";
constexpr int kFormatVersion = 1;

json kv_to_json(const KvConfig& kv) {
  json j = json::object();
  for (const auto& [k, v] : kv.entries()) j[k] = v;
  return j;
}

KvConfig kv_from_json(const json& j, const char* what) {
  if (!j.is_object()) throw FormatError("model_io", std::string(what) + " must be an object");
  KvConfig kv;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw FormatError("model_io", std::string(what) + "." + k + " must be a string");
    kv.set(k, v.get<std::string>());
  }
  return kv;
}

json finite_array(std::span<const double> values, const std::string& what) {
  json arr = json::array();
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericalError("model_io", "non-finite value in " + what);
    arr.push_back(v);
  }
  return arr;
}

std::vector<double> doubles(const json& j, const std::string& what) {
  if (!j.is_array()) throw FormatError("model_io", what + " must be an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw FormatError("model_io", what + " must contain numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError("model_io", std::string("missing field '") + key + "'");
  return j.at(key);
}

template <class T>
T get_as(const json& j, const char* key) {
  const auto& v = field(j, key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw FormatError("model_io", std::string("field '") + key + "' has the wrong type");
  }
}

json manifest_json(const RunManifest& m) {
  return json{{"command", m.command},       {"config_files", m.config_files}, {"seed", m.seed},
              {"inputs", m.inputs},         {"outputs", m.outputs},           {"tool_version", m.tool_version},
              {"timestamp", m.timestamp}};
}

RunManifest manifest_from(const json& j) {
  RunManifest m;
  m.command = get_as<std::string>(j, "command");
  m.config_files = get_as<std::vector<std::string>>(j, "config_files");
  m.seed = get_as<std::uint64_t>(j, "seed");
  m.inputs = get_as<std::vector<std::string>>(j, "inputs");
  m.outputs = get_as<std::vector<std::string>>(j, "outputs");
  m.tool_version = get_as<std::string>(j, "tool_version");
  m.timestamp = get_as<std::string>(j, "timestamp");
  return m;
}

}  // namespace

std::string model_to_text(const ModelFile& m) {
  const auto& p = m.params;
  json j;
  j["format"] = kFormat;
  j["format_version"] = kFormatVersion;
  j["config"] = kv_to_json(p.config.to_kv());
  j["preprocess"] = kv_to_json(m.preprocess.to_kv());
  j["window"] = {{"window_samples", m.geometry.window_samples}, {"hop", m.geometry.hop}};
  j["normalization"] = {{"mean", finite_array(m.normalization.mean, "normalization mean")},
                        {"stddev", finite_array(m.normalization.stddev, "normalization stddev")}};
  j["training"] = {{"seed", m.training.seed},
                   {"epochs", m.training.epochs},
                   {"lambda", m.training.lambda},
                   {"learning_rate", m.training.learning_rate},
                   {"batch_size", m.training.batch_size},
                   {"best_epoch", m.training.best_epoch},
                   {"best_val_loss", m.training.best_val_loss},
                   {"best_val_r2", m.training.best_val_r2}};
  json states = json::array();
  for (const auto& head : p.attractor) states.push_back(finite_array(head.states, "attractor states"));
  j["attractor_states"] = std::move(states);
  json params = json::array();
  for (const auto* param : p.all()) {
    params.push_back({{"name", param->name},
                      {"shape", {param->value.rows, param->value.cols}},
                      {"data", finite_array(param->value.data, param->name)}});
  }
  j["params"] = std::move(params);
  j["manifest"] = manifest_json(m.manifest);
  return j.dump(1) + "\n";
}

ModelFile model_from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("model_io", std::string("model file is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || get_as<std::string>(j, "format") != kFormat) {
    throw FormatError("model_io", "not a dpars model file");
  }
  if (get_as<int>(j, "format_version") != kFormatVersion) {
    throw FormatError("model_io", "unsupported model format version");
  }

  ModelFile m;
  try {
    const auto config = DparsConfig::from_kv(kv_from_json(field(j, "config"), "config"));
    config.validate();
    m.params = DparsParams::zeros(config);
    m.preprocess = sigproc::PreprocessConfig::from_kv(kv_from_json(field(j, "preprocess"), "preprocess"));
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError("model_io", std::string("invalid configuration in model file: ") + e.what());
  }
  const auto& cfg = m.params.config;

  const auto& win = field(j, "window");
  m.geometry.window_samples = get_as<std::size_t>(win, "window_samples");
  m.geometry.hop = get_as<std::size_t>(win, "hop");
  if (m.geometry.window_samples != cfg.t_seq) throw FormatError("model_io", "window length differs from t_seq");

  const auto& norm = field(j, "normalization");
  m.normalization.mean = doubles(field(norm, "mean"), "normalization.mean");
  m.normalization.stddev = doubles(field(norm, "stddev"), "normalization.stddev");
  if (m.normalization.mean.size() != cfg.c_in || m.normalization.stddev.size() != cfg.c_in) {
    throw FormatError("model_io", "normalization stats must have c_in entries");
  }

  const auto& tr = field(j, "training");
  m.training.seed = get_as<std::uint64_t>(tr, "seed");
  m.training.epochs = get_as<std::size_t>(tr, "epochs");
  m.training.lambda = get_as<double>(tr, "lambda");
  m.training.learning_rate = get_as<double>(tr, "learning_rate");
  m.training.batch_size = get_as<std::size_t>(tr, "batch_size");
  m.training.best_epoch = get_as<std::size_t>(tr, "best_epoch");
  m.training.best_val_loss = get_as<double>(tr, "best_val_loss");
  m.training.best_val_r2 = get_as<double>(tr, "best_val_r2");

  const auto& states = field(j, "attractor_states");
  if (!states.is_array() || states.size() != cfg.n_fingers) {
    throw FormatError("model_io", "attractor_states must list one array per finger");
  }
  for (std::size_t f = 0; f < cfg.n_fingers; ++f) {
    auto s = doubles(states[f], "attractor_states");
    if (s.empty() || s.size() > cfg.n_states) throw FormatError("model_io", "bad attractor state count");
    auto& head = m.params.attractor[f];
    const std::size_t h = head.w2.value.cols;
    head.w2 = ad::Parameter(head.w2.name, s.size(), h);
    head.b2 = ad::Parameter(head.b2.name, s.size(), 1);
    head.states = std::move(s);
  }

  std::map<std::string, const json*> by_name;
  const auto& params = field(j, "params");
  if (!params.is_array()) throw FormatError("model_io", "params must be an array");
  for (const auto& entry : params) {
    const auto name = get_as<std::string>(entry, "name");
    if (!by_name.emplace(name, &entry).second) throw FormatError("model_io", "duplicate parameter " + name);
  }
  auto targets = m.params.all();
  if (by_name.size() != targets.size()) throw FormatError("model_io", "unexpected number of parameter arrays");
  for (auto* param : targets) {
    const auto it = by_name.find(param->name);
    if (it == by_name.end()) throw FormatError("model_io", "missing parameter " + param->name);
    const auto shape = get_as<std::vector<std::size_t>>(*it->second, "shape");
    if (shape.size() != 2 || shape[0] != param->value.rows || shape[1] != param->value.cols) {
      throw FormatError("model_io", "shape mismatch for " + param->name);
    }
    auto data = doubles(field(*it->second, "data"), param->name);
    if (data.size() != param->value.size()) throw FormatError("model_io", "data length mismatch for " + param->name);
    for (double v : data) {
      if (!std::isfinite(v)) throw FormatError("model_io", "non-finite value in " + param->name);
    }
    param->value.data = std::move(data);
  }

  m.manifest = manifest_from(field(j, "manifest"));
  return m;
}

void save_model(const std::filesystem::path& path, const ModelFile& m) {
  const auto text = model_to_text(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("model_io", "cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("model_io", "write failed for " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("model_io", "cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_text(ss.str());
}

}  // namespace dpars
