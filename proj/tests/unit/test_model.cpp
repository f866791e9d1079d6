#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "vnt/errors.hpp"
#include "vnt/model.hpp"
#include "vnt/pointcloud.hpp"

using namespace vnt;
using vnt::test::randn;

namespace {

ModelConfig small(Task task = Task::Classification) {
  ModelConfig c;
  c.linear_dim = 4;
  c.heads = 2;
  c.head_size = 3;
  c.blocks = 2;
  c.knn_k = 5;
  c.task = task;
  c.num_classes = task == Task::Classification ? 3 : 4;
  c.num_categories = task == Task::Classification ? 0 : 2;
  return c;
}

// Independent closed-form count.
std::size_t hand_count(const ModelConfig& c) {
  const std::size_t L = c.linear_dim, h = c.heads, dk = c.head_size, C = c.blocks * L;
  const std::size_t C2 = std::max<std::size_t>(1, C / 2);
  std::size_t n = 2 * L + L * L;
  n += c.blocks * (3 * h * dk * L + L * h * dk + 3 * L * L);
  n += C2 * C + C2 * C2 + 3 * C2 + 9;
  const std::size_t F = 3 * C;
  if (c.task == Task::Classification) {
    n += F * 512 + 512 + 512 * 256 + 256 + 256 * c.num_classes + c.num_classes;
  } else {
    n += c.num_categories * 64 + 64;
    n += (F + 64) * 512 + 512 + 2 * 512;
    n += 512 * 256 + 256 + 2 * 256;
    n += 256 * 128 + 128 + 2 * 128;
    n += 128 * c.num_classes + c.num_classes;
  }
  return n;
}

}  // namespace

TEST(ParamCount, TinyConfigMatchesHandCount) {
  ModelConfig c;
  c.linear_dim = c.heads = c.head_size = c.blocks = 1;
  c.num_classes = 2;
  // edge 3, block 7, invariant 14, head 2048 + 131328 + 514
  EXPECT_EQ(count_params(c), 133914u);
}

TEST(ParamCount, AgreesWithClosedFormAndInitializedModel) {
  for (ModelConfig c : {small(), small(Task::Segmentation)}) {
    for (std::size_t L : {1u, 4u, 7u}) {
      c.linear_dim = L;
      Rng rng(0);
      EXPECT_EQ(count_params(c), hand_count(c));
      EXPECT_EQ(count_params(c), init_model(c, rng).params.scalar_count());
    }
  }
}

TEST(ParamCount, ModulesSumToTotal) {
  const ModelConfig c = small(Task::Segmentation);
  std::size_t total = 0;
  std::vector<std::string> names;
  for (const auto& [m, n] : count_params_by_module(c)) {
    total += n;
    names.push_back(m);
  }
  EXPECT_EQ(total, count_params(c));
  EXPECT_EQ(names, (std::vector<std::string>{"edge", "block0", "block1", "invariant", "category", "head"}));
}

TEST(ParamCount, ReferenceConfigsConstruct) {
  ModelConfig cls;
  cls.num_classes = 40;
  ModelConfig seg;
  seg.linear_dim = 128;
  seg.heads = 14;
  seg.head_size = 16;
  seg.task = Task::Segmentation;
  seg.num_classes = 50;
  seg.num_categories = 16;
  EXPECT_EQ(count_params(cls), hand_count(cls));
  EXPECT_EQ(count_params(seg), hand_count(seg));
  Rng rng(1);
  EXPECT_EQ(init_model(cls, rng).params.size(), 3u * (3 * 24 + 1 + 3) + 2 + 4 + 6);
}

TEST(ModelConfig, ViolationsAreListed) {
  ModelConfig c;
  c.heads = 0;
  c.dropout = 1.0;
  EXPECT_EQ(c.violations().size(), 2u);
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("heads"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("dropout"), std::string::npos);
  }
  ModelConfig s;
  s.task = Task::Segmentation;
  EXPECT_FALSE(s.violations().empty());
}

TEST(Model, InitIsDeterministic) {
  Rng a(5), b(5), c(6);
  EXPECT_TRUE(init_model(small(), a).params == init_model(small(), b).params);
  Rng d(5);
  EXPECT_FALSE(init_model(small(), c).params == init_model(small(), d).params);
}

TEST(Model, InitBounds) {
  Rng rng(2);
  const VNTModel m = init_model(small(Task::Segmentation), rng);
  const auto& w = m.params.entry("head.fc1.weight");
  for (double x : w.value) EXPECT_LE(std::abs(x), 1.0 / std::sqrt(512.0));
  for (double x : m.params.entry("head.bn0.gamma").value) EXPECT_EQ(x, 1.0);
  for (double x : m.buffers.entry("head.bn2.running_var").value) EXPECT_EQ(x, 1.0);
}

TEST(Model, ClassifierIsRotationInvariant) {
  Rng rng(3);
  const VNTModel m = init_model(small(), rng);
  const Tensor p = normalize(randn({24, 3}, rng));
  const Tensor logits = classify(m, p);
  EXPECT_EQ(logits.shape(), (Shape{1, 3}));
  for (int i = 0; i < 10; ++i) {
    const Rotation r = sample_rotation(RotationProtocol::SO3, rng);
    EXPECT_LE(max_abs_diff(classify(m, r.apply(p)), logits), 1e-6 * max_abs(logits));
  }
}

TEST(Model, SegmenterIsRotationInvariant) {
  Rng rng(4);
  const VNTModel m = init_model(small(Task::Segmentation), rng);
  const Tensor p = normalize(randn({20, 3}, rng));
  const Tensor cat = one_hot(1, 2);
  const Tensor logits = segment(m, p, cat);
  EXPECT_EQ(logits.shape(), (Shape{20, 4}));
  const Rotation r = sample_rotation(RotationProtocol::SO3, rng);
  EXPECT_LE(max_abs_diff(segment(m, r.apply(p), cat), logits), 1e-6 * max_abs(logits));
}

TEST(Model, FlattenReadoutIsNotInvariant) {
  Rng rng(5);
  ModelConfig c = small();
  c.readout = Readout::Flatten;
  const VNTModel m = init_model(c, rng);
  const Tensor p = normalize(randn({24, 3}, rng));
  const Rotation r = sample_rotation(RotationProtocol::SO3, rng);
  EXPECT_GT(max_abs_diff(classify(m, r.apply(p)), classify(m, p)), 1e-6);
}

TEST(Model, DropoutOnlyInTraining) {
  Rng rng(6);
  const VNTModel m = init_model(small(), rng);
  const Tensor p = normalize(randn({16, 3}, rng));
  auto run = [&](bool train, std::uint64_t seed) {
    Rng drop(seed);
    Tape t(false);
    const Bindings b = m.params.bind(t, false);
    ForwardOptions fo;
    fo.train = train;
    fo.rng = &drop;
    return forward_classify(m, b, t, p, fo).value();
  };
  EXPECT_TRUE(bitwise_equal(run(false, 1), run(false, 2)));
  EXPECT_FALSE(bitwise_equal(run(true, 1), run(true, 2)));
}

TEST(Model, AttentionCapturePerBlockAndHead) {
  Rng rng(7);
  const VNTModel m = init_model(small(), rng);
  std::vector<std::vector<Tensor>> att;
  Tape t(false);
  const Bindings b = m.params.bind(t, false);
  ForwardOptions fo;
  fo.attention = &att;
  const Var f = point_features(m, b, t, normalize(randn({12, 3}, rng)), fo);
  EXPECT_EQ(f.shape(), (Shape{12, 24}));
  ASSERT_EQ(att.size(), 2u);
  EXPECT_EQ(att[1].size(), 2u);
  EXPECT_EQ(att[1][0].shape(), (Shape{12, 12}));
}

TEST(Model, SegmentationNeedsOneHotCategories) {
  Rng rng(8);
  const VNTModel m = init_model(small(Task::Segmentation), rng);
  const Tensor p = normalize(randn({10, 3}, rng));
  EXPECT_THROW(segment(m, p, Tensor({2}, {0.5, 0.5})), ContractError);
  EXPECT_THROW(segment(m, p, Tensor({3}, {1, 0, 0})), ContractError);
}

TEST(Model, RunningStatsUseUnbiasedVariance) {
  Rng rng(9);
  VNTModel m = init_model(small(Task::Segmentation), rng);
  BatchStats s{std::vector<double>(512, 1.0), std::vector<double>(512, 2.0)};
  BatchStats s1{std::vector<double>(256, 0.0), std::vector<double>(256, 0.0)};
  BatchStats s2{std::vector<double>(128, 0.0), std::vector<double>(128, 0.0)};
  update_running_stats(m, std::vector<BatchStats>{s, s1, s2}, 5);
  EXPECT_NEAR(m.buffers.entry("head.bn0.running_mean").value[0], 0.1, 1e-15);
  EXPECT_NEAR(m.buffers.entry("head.bn0.running_var").value[0], 0.9 + 0.1 * 2.0 * 5.0 / 4.0, 1e-15);
}

TEST(Model, PermutationInvarianceAndEquivariance) {
  Rng rng(10);
  const VNTModel cls = init_model(small(), rng);
  const VNTModel seg = init_model(small(Task::Segmentation), rng);
  const Tensor p = normalize(randn({18, 3}, rng));
  std::vector<std::size_t> perm(18);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Tensor q = gather_points(p, perm);
  const Tensor a = classify(cls, p);
  EXPECT_LE(max_abs_diff(classify(cls, q), a), 1e-12 * std::max(1.0, max_abs(a)));
  const Tensor cat = one_hot(0, 2);
  const Tensor s = segment(seg, p, cat), t = segment(seg, q, cat);
  for (std::size_t i = 0; i < 18; ++i) {
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(t.at({i, k}), s.at({perm[i], k}), 1e-12);
  }
}

TEST(Model, ArgmaxStableUnderRotationInSinglePrecision) {
  set_precision(Precision::Float32);
  Rng rng(11);
  const VNTModel m = init_model(small(), rng);
  int same = 0;
  for (int i = 0; i < 100; ++i) {
    const Tensor p = normalize(randn({20, 3}, rng));
    const Tensor q = sample_rotation(RotationProtocol::SO3, rng).apply(p);
    const Tensor a = classify(m, p), b = classify(m, q);
    const auto arg = [](const Tensor& x) { return std::max_element(x.data().begin(), x.data().end()) - x.data().begin(); };
    same += arg(a) == arg(b);
  }
  set_precision(Precision::Float64);
  EXPECT_EQ(same, 100);
}
