#include "corefed/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "corefed/error.hpp"

namespace corefed {

namespace {

using nlohmann::ordered_json;

void reject_unknown(const ordered_json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + where + key + "'");
  }
}

template <typename T>
void read(const ordered_json& obj, const char* key, T& out, const std::string& where = "") {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->template get<T>();
  } catch (const ordered_json::exception&) {
    throw ConfigError("field '" + where + key + "' has the wrong type");
  }
}

void read_integer(const ordered_json& obj, const char* key, int& out, const std::string& where = "") {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_number_integer()) throw ConfigError("field '" + where + key + "' must be an integer");
  out = it->get<int>();
}

ordered_json dataset_json(const DatasetSource& source) {
  if (const auto* s = std::get_if<SyntheticSource>(&source)) {
    return {{"source", "synthetic"},
            {"num_classes", s->num_classes},
            {"input_dim", s->input_dim},
            {"samples", s->samples}};
  }
  const auto& idx = std::get<IdxSource>(source);
  return {{"source", "idx"}, {"images", idx.images}, {"labels", idx.labels}};
}

DatasetSource dataset_from(const ordered_json& obj, const std::filesystem::path& base_dir) {
  if (!obj.is_object()) throw ConfigError("field 'dataset' must be an object");
  std::string source = "synthetic";
  read(obj, "source", source, "dataset.");
  if (source == "synthetic") {
    reject_unknown(obj, {"source", "num_classes", "input_dim", "samples"}, "dataset.");
    SyntheticSource s;
    read_integer(obj, "num_classes", s.num_classes, "dataset.");
    read_integer(obj, "input_dim", s.input_dim, "dataset.");
    read_integer(obj, "samples", s.samples, "dataset.");
    return s;
  }
  if (source == "idx") {
    reject_unknown(obj, {"source", "images", "labels"}, "dataset.");
    IdxSource idx;
    read(obj, "images", idx.images, "dataset.");
    read(obj, "labels", idx.labels, "dataset.");
    auto anchor = [&](std::string& p) {
      if (!p.empty() && std::filesystem::path(p).is_relative() && !base_dir.empty()) {
        p = (base_dir / p).lexically_normal().string();
      }
    };
    anchor(idx.images);
    anchor(idx.labels);
    return idx;
  }
  throw ConfigError("field 'dataset.source' must be 'synthetic' or 'idx'");
}

template <typename Enum>
Enum enum_from(const std::string& text, std::initializer_list<std::pair<const char*, Enum>> options,
               const char* field) {
  for (const auto& [name, value] : options) {
    if (text == name) return value;
  }
  throw ConfigError(std::string("field '") + field + "' has unsupported value '" + text + "'");
}

}  // namespace

ExperimentConfig parse_config_text(std::string_view text, const std::filesystem::path& base_dir) {
  ordered_json doc = ordered_json::object();
  if (text.find_first_not_of(" \t\r\n") != std::string_view::npos) {
    try {
      doc = ordered_json::parse(text);
    } catch (const ordered_json::parse_error& e) {
      throw ConfigError(std::string("config parse error: ") + e.what());
    }
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(doc,
                 {"algorithm", "rounds", "clients", "online_per_round", "local_epochs", "batch_size", "eta0",
                  "lr_decay", "gamma", "k", "beta", "tau_c", "dirichlet_alpha", "seed", "test_fraction",
                  "accuracy_mode", "fairness_reduction", "checkpoint_interval", "threads", "model", "dataset"},
                 "");

  ExperimentConfig cfg;
  if (auto it = doc.find("algorithm"); it != doc.end()) {
    if (!it->is_string()) throw ConfigError("field 'algorithm' must be a string");
    cfg.algorithm = parse_algorithm(it->get<std::string>());
  }
  read_integer(doc, "rounds", cfg.rounds);
  read_integer(doc, "clients", cfg.clients);
  if (auto it = doc.find("online_per_round"); it != doc.end()) {
    if (it->is_number_integer()) {
      cfg.online_per_round = {false, static_cast<double>(it->get<long long>())};
    } else if (it->is_number_float()) {
      cfg.online_per_round = {true, it->get<double>()};
    } else {
      throw ConfigError("field 'online_per_round' must be an integer count or a fraction");
    }
  }
  read_integer(doc, "local_epochs", cfg.local_epochs);
  read_integer(doc, "batch_size", cfg.batch_size);
  read(doc, "eta0", cfg.eta0);
  read(doc, "lr_decay", cfg.lr_decay);
  read(doc, "gamma", cfg.gamma);
  read(doc, "k", cfg.k);
  read(doc, "beta", cfg.beta);
  read(doc, "tau_c", cfg.tau_c);
  read(doc, "dirichlet_alpha", cfg.dirichlet_alpha);
  if (auto it = doc.find("seed"); it != doc.end()) {
    if (!it->is_number_unsigned()) throw ConfigError("field 'seed' must be a non-negative integer");
    cfg.seed = it->get<std::uint64_t>();
  }
  read(doc, "test_fraction", cfg.test_fraction);
  if (auto it = doc.find("accuracy_mode"); it != doc.end()) {
    std::string v;
    read(doc, "accuracy_mode", v);
    cfg.accuracy_mode = enum_from<AccuracyMode>(
        v, {{"per_client", AccuracyMode::per_client}, {"pooled", AccuracyMode::pooled}}, "accuracy_mode");
  }
  if (auto it = doc.find("fairness_reduction"); it != doc.end()) {
    std::string v;
    read(doc, "fairness_reduction", v);
    cfg.fairness_reduction = enum_from<FairnessReduction>(
        v, {{"final", FairnessReduction::final_round}, {"mean", FairnessReduction::mean_over_rounds}},
        "fairness_reduction");
  }
  read_integer(doc, "checkpoint_interval", cfg.checkpoint_interval);
  read_integer(doc, "threads", cfg.threads);

  if (auto it = doc.find("dataset"); it != doc.end()) cfg.dataset = dataset_from(*it, base_dir);
  cfg.hidden_dims = std::holds_alternative<IdxSource>(cfg.dataset) ? kImageHiddenDims : kSyntheticHiddenDims;
  if (auto it = doc.find("model"); it != doc.end()) {
    if (!it->is_object()) throw ConfigError("field 'model' must be an object");
    reject_unknown(*it, {"hidden_dims", "activation"}, "model.");
    if (auto dims = it->find("hidden_dims"); dims != it->end()) {
      if (!dims->is_array()) throw ConfigError("field 'model.hidden_dims' must be an array of positive integers");
      cfg.hidden_dims.clear();
      for (const auto& d : *dims) {
        if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) {
          throw ConfigError("field 'model.hidden_dims' must be an array of positive integers");
        }
        cfg.hidden_dims.push_back(d.get<std::size_t>());
      }
    }
    std::string act = "relu";
    read(*it, "activation", act, "model.");
    if (act != "relu") throw ConfigError("field 'model.activation' must be 'relu'");
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.parent_path());
}

std::string render_config(const ExperimentConfig& c) {
  ordered_json doc;
  doc["algorithm"] = std::string(to_string(c.algorithm));
  doc["rounds"] = c.rounds;
  doc["clients"] = c.clients;
  if (c.online_per_round.is_fraction) {
    doc["online_per_round"] = c.online_per_round.value;
  } else {
    doc["online_per_round"] = static_cast<long long>(c.online_per_round.value);
  }
  doc["local_epochs"] = c.local_epochs;
  doc["batch_size"] = c.batch_size;
  doc["eta0"] = c.eta0;
  doc["lr_decay"] = c.lr_decay;
  doc["gamma"] = c.gamma;
  doc["k"] = c.k;
  doc["beta"] = c.beta;
  doc["tau_c"] = c.tau_c;
  doc["dirichlet_alpha"] = c.dirichlet_alpha;
  doc["seed"] = c.seed;
  doc["test_fraction"] = c.test_fraction;
  doc["accuracy_mode"] = c.accuracy_mode == AccuracyMode::pooled ? "pooled" : "per_client";
  doc["fairness_reduction"] = c.fairness_reduction == FairnessReduction::mean_over_rounds ? "mean" : "final";
  doc["checkpoint_interval"] = c.checkpoint_interval;
  doc["threads"] = c.threads;
  doc["model"] = {{"hidden_dims", c.hidden_dims}, {"activation", "relu"}};
  doc["dataset"] = dataset_json(c.dataset);
  return doc.dump(2) + "\n";
}

void apply_env_overrides(ExperimentConfig& config) {
  const char* env = std::getenv("COREFED_SEED");
  if (env == nullptr) return;
  const std::string text(env);
  std::size_t used = 0;
  unsigned long long seed = 0;
  try {
    if (text.empty() || text.front() == '-') throw std::invalid_argument("negative");
    seed = std::stoull(text, &used);
  } catch (const std::exception&) {
    throw ConfigError("COREFED_SEED must be a non-negative integer, got '" + text + "'");
  }
  if (used != text.size()) throw ConfigError("COREFED_SEED must be a non-negative integer, got '" + text + "'");
  config.seed = seed;
}

}  // namespace corefed
