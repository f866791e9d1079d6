#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "helpers.hpp"
#include "vnt/checkpoint.hpp"
#include "vnt/errors.hpp"
#include "vnt/training.hpp"

using namespace vnt;
using vnt::test::temp_dir;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny(Task task = Task::Classification) {
  ModelConfig c;
  c.linear_dim = 2;
  c.heads = 1;
  c.head_size = 2;
  c.blocks = 1;
  c.knn_k = 4;
  c.task = task;
  c.num_classes = task == Task::Classification ? 3 : 4;
  c.num_categories = task == Task::Classification ? 0 : 2;
  return c;
}

TrainOptions quick(std::size_t epochs) {
  TrainOptions o;
  o.train.epochs = epochs;
  o.train.batch_size = 4;
  o.train.seed = 11;
  o.augment.sample_n = 24;
  o.split = make_protocol_split(RotationProtocol::Z, RotationProtocol::SO3, 11);
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Schedule, StepDecay) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_at(0, c), 5e-4);
  EXPECT_DOUBLE_EQ(lr_at(19, c), 5e-4);
  EXPECT_DOUBLE_EQ(lr_at(20, c), 4.5e-4);
  EXPECT_DOUBLE_EQ(lr_at(40, c), 4.05e-4);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore p;
  p.add("w", Tensor({3}, {1.0, 2.0, 3.0}));
  p.zero_grad();
  p.entry("w").grad = {0.5, -2.0, 0.0};
  AdamState s = make_adam_state(p);
  TrainConfig c;
  adam_step(p, s, c, 5e-4);
  EXPECT_DOUBLE_EQ(p.entry("w").value[0], 1.0 - 5e-4 * 0.5 / (0.5 + 1e-8));
  EXPECT_DOUBLE_EQ(p.entry("w").value[1], 2.0 + 5e-4 * 2.0 / (2.0 + 1e-8));
  EXPECT_EQ(p.entry("w").value[2], 3.0);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, SecondStepOracle) {
  ParamStore p;
  p.add("w", Tensor({1}, {0.0}));
  AdamState s = make_adam_state(p);
  TrainConfig c;
  double m = 0, v = 0, w = 0;
  const double g[2] = {1.0, -3.0};
  for (int t = 1; t <= 2; ++t) {
    p.zero_grad();
    p.entry("w").grad[0] = g[t - 1];
    adam_step(p, s, c, 1e-3);
    m = 0.9 * m + 0.1 * g[t - 1];
    v = 0.999 * v + 0.001 * g[t - 1] * g[t - 1];
    w -= 1e-3 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(p.entry("w").value[0], w, 1e-18);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParamStore p;
  p.add("a", Tensor({2}, {0, 0}));
  p.add("b", Tensor({2}, {0, 0}));
  p.zero_grad();
  p.entry("b").grad[1] = std::numeric_limits<double>::quiet_NaN();
  AdamState s = make_adam_state(p);
  try {
    adam_step(p, s, TrainConfig{}, 1e-3);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
  EXPECT_EQ(p.entry("a").value[0], 0.0);
  EXPECT_EQ(s.step, 0u);
}

TEST(IoU, HandCase) {
  const std::vector<std::vector<int>> pred{{0, 1, 1, 1}}, truth{{0, 0, 1, 1}};
  const std::vector<int> cats{0};
  const std::vector<std::vector<int>> parts{{0, 1}};
  const IoUSummary s = compute_iou(pred, truth, cats, parts, 2);
  EXPECT_DOUBLE_EQ(s.part_iou[0], 0.5);
  EXPECT_DOUBLE_EQ(s.part_iou[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.global_miou, 7.0 / 12.0);
  EXPECT_DOUBLE_EQ(s.category_miou, 7.0 / 12.0);
}

TEST(IoU, AbsentPartScoresOneAndCategoriesAverageSeparately) {
  const std::vector<std::vector<int>> pred{{0, 0}, {2, 2}}, truth{{0, 0}, {2, 3}};
  const std::vector<int> cats{0, 1};
  const std::vector<std::vector<int>> parts{{0, 1}, {2, 3}};
  const IoUSummary s = compute_iou(pred, truth, cats, parts, 4);
  EXPECT_EQ(s.part_iou, (std::vector<double>{1.0, 1.0, 0.5, 0.0}));
  EXPECT_DOUBLE_EQ(s.category_miou, (1.0 + 0.25) / 2);
  EXPECT_DOUBLE_EQ(s.global_miou, 2.5 / 4);
}

TEST(IoU, PartsByCategory) {
  const Dataset d = make_synthetic_segmentation(4, 0, 200, 0.0, 3);
  const auto parts = parts_by_category(d.train, 2);
  EXPECT_EQ(parts[0], (std::vector<int>{0, 1}));
  EXPECT_EQ(parts[1], (std::vector<int>{2, 3}));
}

TEST(Preprocess, TestSampleIsDeterministic) {
  const Dataset d = make_synthetic_classification(0, 3, 100, 0.02, 4);
  const auto split = make_protocol_split(RotationProtocol::None, RotationProtocol::SO3, 4);
  const auto a = prepare_test_sample(d.test[1], 1, 32, split);
  const auto b = prepare_test_sample(d.test[1], 1, 32, split);
  EXPECT_EQ(a.points.shape(), (Shape{32, 3}));
  EXPECT_TRUE(bitwise_equal(a.points, b.points));
  const auto plain = prepare_test_sample(d.test[1], 1, 32, make_protocol_split(RotationProtocol::None, RotationProtocol::None));
  EXPECT_LE(max_abs_diff(split.test_rotation(1).apply(plain.points), a.points), 1e-14);
}

TEST(Evaluate, RotatedTestSetGivesIdenticalPredictions) {
  Rng rng(5);
  const VNTModel m = init_model(tiny(), rng);
  const Dataset d = make_synthetic_classification(0, 6, 64, 0.02, 5);
  const auto none = evaluate(m, d.test, make_protocol_split(RotationProtocol::None, RotationProtocol::None), 24);
  const auto so3 = evaluate(m, d.test, make_protocol_split(RotationProtocol::None, RotationProtocol::SO3, 5), 24);
  EXPECT_EQ(none.predictions, so3.predictions);
  EXPECT_NEAR(none.loss, so3.loss, 1e-9);
  EXPECT_EQ(none.per_class_accuracy.size(), 3u);
}

TEST(Train, DeterministicAcrossThreadCounts) {
  const Dataset d = make_synthetic_classification(8, 3, 48, 0.02, 6);
  Rng r1(6), r2(6);
  VNTModel a = init_model(tiny(), r1), b = init_model(tiny(), r2);
  TrainOptions o = quick(2);
  const auto ra = train(a, d, o);
  o.jobs = 3;
  const auto rb = train(b, d, o);
  EXPECT_TRUE(a.params == b.params);
  EXPECT_TRUE(ra.optimizer == rb.optimizer);
  ASSERT_EQ(ra.history.size(), 2u);
  EXPECT_EQ(ra.history[1].train_loss, rb.history[1].train_loss);
  EXPECT_EQ(ra.optimizer.step, 4u);
}

TEST(Train, WritesMetricsAndBestCheckpoint) {
  const auto dir = temp_dir("train");
  const Dataset d = make_synthetic_classification(6, 3, 48, 0.02, 7);
  Rng rng(7);
  VNTModel m = init_model(tiny(), rng);
  TrainOptions o = quick(3);
  o.out_dir = dir;
  std::ostringstream log;
  o.log = &log;
  const auto r = train(m, d, o);
  const std::string csv = slurp(dir / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,lr,train_loss,eval_metric");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NE(csv.find("\n2,0.0005,"), std::string::npos);
  EXPECT_NE(log.str().find("epoch 2 lr 0.0005"), std::string::npos);
  const Checkpoint ck = load_checkpoint(dir / "checkpoint");
  ASSERT_TRUE(ck.optimizer.has_value());
  EXPECT_EQ(ck.optimizer->step, 2u * (r.best_epoch + 1));
}

TEST(Train, SegmentationRuns) {
  const Dataset d = make_synthetic_segmentation(4, 2, 48, 0.02, 8);
  Rng rng(8);
  VNTModel m = init_model(tiny(Task::Segmentation), rng);
  const VNTModel before = m;
  const auto r = train(m, d, quick(1));
  EXPECT_TRUE(std::isfinite(r.history[0].train_loss));
  EXPECT_FALSE(m.buffers == before.buffers);
  EXPECT_GE(r.best_metric, 0.0);
  EXPECT_LE(r.best_metric, 1.0);
}

TEST(Train, TaskMismatchRejected) {
  const Dataset d = make_synthetic_segmentation(2, 0, 32, 0.0, 9);
  Rng rng(9);
  VNTModel m = init_model(tiny(), rng);
  EXPECT_THROW(train(m, d, quick(1)), ConfigError);
}

TEST(Checkpoint, BitwiseRoundTrip) {
  const auto dir = temp_dir("ckpt");
  Rng rng(10);
  VNTModel m = init_model(tiny(Task::Segmentation), rng);
  m.buffers.entry("head.bn1.running_var").value[3] = 0.1 + 0.2;
  AdamState s = make_adam_state(m.params);
  s.step = 17;
  s.m.begin()->second[0] = std::nextafter(1.0, 2.0);
  save_checkpoint(dir, m, &s);
  const Checkpoint ck = load_checkpoint(dir);
  EXPECT_EQ(ck.model.config, m.config);
  EXPECT_TRUE(ck.model.params == m.params);
  EXPECT_TRUE(ck.model.buffers == m.buffers);
  ASSERT_TRUE(ck.optimizer.has_value());
  EXPECT_TRUE(*ck.optimizer == s);
  save_checkpoint(dir / "plain", m);
  EXPECT_FALSE(load_checkpoint(dir / "plain").optimizer.has_value());
}

TEST(Checkpoint, CorruptionNamesTensor) {
  const auto dir = temp_dir("ckpt_bad");
  Rng rng(11);
  save_checkpoint(dir, init_model(tiny(), rng));
  fs::resize_file(dir / "edge.dir.bin", 8);
  try {
    load_checkpoint(dir);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("edge.dir"), std::string::npos);
  }
  fs::remove(dir / "edge.dir.bin");
  EXPECT_THROW(load_checkpoint(dir), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "nowhere"), CheckpointError);
  fs::remove(dir / "config.json");
  EXPECT_THROW(load_checkpoint(dir), CheckpointError);
}

TEST(Checkpoint, NonFiniteValueRejected) {
  const auto dir = temp_dir("ckpt_nan");
  Rng rng(12);
  save_checkpoint(dir, init_model(tiny(), rng));
  {
    std::fstream f(dir / "head.fc2.bias.bin", std::ios::in | std::ios::out | std::ios::binary);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    f.write(reinterpret_cast<const char*>(&nan), sizeof nan);
  }
  try {
    load_checkpoint(dir);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("head.fc2.bias"), std::string::npos);
  }
}
