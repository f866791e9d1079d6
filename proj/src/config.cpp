#include "vnt/config.hpp"

#include <fstream>
#include <set>

#include "vnt/errors.hpp"

namespace vnt {

using nlohmann::json;

namespace {

const std::set<std::string> kModelKeys = {"linear_dim", "heads",          "head_size", "blocks",  "knn_k",
                                          "task",       "num_classes",    "num_categories", "dropout", "readout"};
const std::set<std::string> kTrainKeys = {"lr",          "batch_size", "epochs", "sched_step",
                                          "sched_gamma", "seed",       "betas",  "eps"};

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

void TrainConfig::validate() const {
  std::string msg;
  if (!(lr > 0.0)) msg += " lr must be > 0;";
  if (!(sched_gamma > 0.0 && sched_gamma <= 1.0)) msg += " sched_gamma must lie in (0,1];";
  if (sched_step == 0) msg += " sched_step must be >= 1;";
  if (batch_size == 0) msg += " batch_size must be >= 1;";
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) msg += " betas must lie in [0,1);";
  if (!(eps > 0.0)) msg += " eps must be > 0;";
  if (!msg.empty()) throw ConfigError("invalid training config:" + msg);
}

json to_json(const ModelConfig& c) {
  return json{{"linear_dim", c.linear_dim},
              {"heads", c.heads},
              {"head_size", c.head_size},
              {"blocks", c.blocks},
              {"knn_k", c.knn_k},
              {"task", to_string(c.task)},
              {"num_classes", c.num_classes},
              {"num_categories", c.num_categories},
              {"dropout", c.dropout},
              {"readout", to_string(c.readout)}};
}

json to_json(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"betas", {c.beta1, c.beta2}},
              {"eps", c.eps},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"sched_step", c.sched_step},
              {"sched_gamma", c.sched_gamma},
              {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ModelConfig c;
  read(j, "linear_dim", c.linear_dim);
  read(j, "heads", c.heads);
  read(j, "head_size", c.head_size);
  read(j, "blocks", c.blocks);
  read(j, "knn_k", c.knn_k);
  read(j, "num_classes", c.num_classes);
  read(j, "num_categories", c.num_categories);
  read(j, "dropout", c.dropout);
  std::string task = to_string(c.task), readout = to_string(c.readout);
  read(j, "task", task);
  read(j, "readout", readout);
  c.task = parse_task(task);
  c.readout = parse_readout(readout);
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  read(j, "lr", c.lr);
  read(j, "eps", c.eps);
  read(j, "batch_size", c.batch_size);
  read(j, "epochs", c.epochs);
  read(j, "sched_step", c.sched_step);
  read(j, "sched_gamma", c.sched_gamma);
  read(j, "seed", c.seed);
  if (j.contains("betas")) {
    const auto& b = j.at("betas");
    if (!b.is_array() || b.size() != 2) throw ConfigError("config key 'betas' must be a 2-element array");
    c.beta1 = b[0].get<double>();
    c.beta2 = b[1].get<double>();
  }
  return c;
}

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kModelKeys.count(key) && !kTrainKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  RunConfig rc{model_config_from_json(j), train_config_from_json(j)};
  rc.model.validate();
  rc.train.validate();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace vnt
