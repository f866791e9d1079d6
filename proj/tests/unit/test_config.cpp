#include <gtest/gtest.h>

#include <fstream>

#include "helpers.hpp"
#include "vnt/config.hpp"
#include "vnt/errors.hpp"

using namespace vnt;
using nlohmann::json;

TEST(Config, DefaultsRoundTrip) {
  ModelConfig m;
  m.task = Task::Segmentation;
  m.num_categories = 16;
  m.readout = Readout::Flatten;
  EXPECT_EQ(model_config_from_json(to_json(m)), m);
  TrainConfig t;
  t.beta2 = 0.99;
  const TrainConfig back = train_config_from_json(to_json(t));
  EXPECT_EQ(back.beta2, 0.99);
  EXPECT_EQ(back.lr, 5e-4);
  EXPECT_EQ(back.sched_step, 20u);
  EXPECT_EQ(back.sched_gamma, 0.9);
}

TEST(Config, UnknownKeyRejected) {
  EXPECT_THROW(parse_run_config(json{{"linear_dim", 8}, {"lenear_dim", 8}}), ConfigError);
  try {
    parse_run_config(json{{"momentum", 0.9}});
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("momentum"), std::string::npos);
  }
}

TEST(Config, ReferenceShapesAccepted) {
  const RunConfig a = parse_run_config(json{{"linear_dim", 16}, {"heads", 24}, {"head_size", 16}});
  EXPECT_EQ(a.model.heads, 24u);
  const RunConfig b = parse_run_config(
      json{{"linear_dim", 128}, {"heads", 14}, {"head_size", 16}, {"task", "seg"}, {"num_categories", 16}});
  EXPECT_EQ(b.model.task, Task::Segmentation);
}

TEST(Config, BadValuesRejected) {
  EXPECT_THROW(parse_run_config(json{{"heads", "many"}}), ConfigError);
  EXPECT_THROW(parse_run_config(json{{"betas", {0.9}}}), ConfigError);
  EXPECT_THROW(parse_run_config(json{{"lr", -1.0}}), ConfigError);
  EXPECT_THROW(parse_run_config(json{{"task", "regress"}}), ConfigError);
  EXPECT_THROW(parse_run_config(json::array()), ConfigError);
}

TEST(Config, FileErrors) {
  const auto d = vnt::test::temp_dir("cfg");
  EXPECT_THROW(load_run_config(d / "none.json"), ConfigError);
  std::ofstream(d / "bad.json") << "{ linear_dim: ";
  EXPECT_THROW(load_run_config(d / "bad.json"), ConfigError);
  std::ofstream(d / "ok.json") << R"({"epochs": 3, "knn_k": 8})";
  const RunConfig r = load_run_config(d / "ok.json");
  EXPECT_EQ(r.train.epochs, 3u);
  EXPECT_EQ(r.model.knn_k, 8u);
}
