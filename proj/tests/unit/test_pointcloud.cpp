#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "helpers.hpp"
#include "vnt/errors.hpp"
#include "vnt/pointcloud.hpp"

using namespace vnt;
using vnt::test::randn;
using vnt::test::temp_dir;
namespace fs = std::filesystem;

namespace {

void write(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << s;
}

std::size_t parse_error_line(const fs::path& p) {
  try {
    load_cloud(p);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

// O(N·m²) reference: recompute distance to the chosen set from scratch.
std::vector<std::size_t> fps_oracle(const Tensor& p, std::size_t m, std::size_t start) {
  std::vector<std::size_t> chosen{start};
  const std::size_t n = p.dim(0);
  while (chosen.size() < m) {
    double far = -1.0;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t c : chosen) {
        double d = 0;
        for (std::size_t k = 0; k < 3; ++k) d += (p.at({j, k}) - p.at({c, k})) * (p.at({j, k}) - p.at({c, k}));
        nearest = std::min(nearest, d);
      }
      if (nearest > far) {
        far = nearest;
        arg = j;
      }
    }
    chosen.push_back(arg);
  }
  return chosen;
}

}  // namespace

TEST(Loaders, OffVertices) {
  const auto d = temp_dir("off");
  write(d / "a.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0.5\n3 0 1 2\n");
  const auto c = load_cloud(d / "a.off");
  EXPECT_EQ(c.points.shape(), (Shape{3, 3}));
  EXPECT_EQ(c.points.at({2, 2}), 0.5);
  write(d / "b.off", "OFF3 1 0\n0 0 0\n1 0 0\n0 1 0\n");
  EXPECT_EQ(load_cloud(d / "b.off").points.dim(0), 3u);
}

TEST(Loaders, ErrorsNameTheLine) {
  const auto d = temp_dir("bad");
  write(d / "a.off", "OFF\nthree 1 0\n");
  EXPECT_EQ(parse_error_line(d / "a.off"), 2u);
  write(d / "b.off", "OFF\n2 0 0\n0 0 0\n1 x 0\n");
  EXPECT_EQ(parse_error_line(d / "b.off"), 4u);
  write(d / "c.csv", "0,0,0\n1,0\n");
  EXPECT_EQ(parse_error_line(d / "c.csv"), 2u);
  write(d / "e.csv", "0,0,0\n1,nan,0\n");
  EXPECT_EQ(parse_error_line(d / "e.csv"), 2u);
  write(d / "f.off", "PLY\n");
  EXPECT_EQ(parse_error_line(d / "f.off"), 1u);
  try {
    load_cloud(d / "c.csv");
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("c.csv:2"), std::string::npos);
  }
}

TEST(Loaders, ClassificationDirectory) {
  const auto d = temp_dir("clsdir");
  write(d / "b" / "train" / "x.csv", "0,0,0\n1,1,1\n");
  write(d / "a" / "train" / "y.off", "OFF\n1 0 0\n0 0 1\n");
  write(d / "a" / "test" / "z.csv", "2,2,2\n");
  write(d / "a" / "train" / "notes.txt", "ignored");
  const Dataset ds = load_classification_dir(d);
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(ds.train.size(), 2u);
  EXPECT_EQ(ds.train[0].label, 0);
  EXPECT_EQ(ds.train[1].label, 1);
  EXPECT_EQ(ds.test.size(), 1u);
  EXPECT_THROW(load_classification_dir(d / "missing"), DataError);
}

TEST(Loaders, SegmentationDirectory) {
  const auto d = temp_dir("segdir");
  for (int i = 0; i < 5; ++i) {
    const std::string f = "s" + std::to_string(i);
    write(d / "cat" / (f + ".csv"), "0,0,0\n1,0,0\n");
    write(d / "cat" / (f + ".seg"), "0\n2\n");
  }
  const Dataset ds = load_segmentation_dir(d);
  EXPECT_EQ(ds.train.size() + ds.test.size(), 5u);
  EXPECT_EQ(ds.test.size(), 1u);
  EXPECT_EQ(ds.num_classes, 3u);
  EXPECT_EQ(ds.num_categories, 1u);
  write(d / "cat" / "s0.seg", "0\n");
  EXPECT_THROW(load_segmentation_dir(d), DataError);
}

TEST(Sampling, FpsMatchesBruteForce) {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor p = randn({40, 3}, rng);
    const std::size_t start = static_cast<std::size_t>(trial) % 40;
    EXPECT_EQ(farthest_point_sample(p, 15, start), fps_oracle(p, 15, start));
  }
}

TEST(Sampling, FpsIndicesDistinctAndTiesGoLow) {
  Rng rng(2);
  const Tensor p = randn({64, 3}, rng);
  const auto idx = farthest_point_sample(p, 64, rng);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 64u);
  const Tensor sym({3, 3}, {0, 0, 0, 1, 0, 0, -1, 0, 0});
  EXPECT_EQ(farthest_point_sample(sym, 2, 0), (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(farthest_point_sample(sym, 4, 0), ContractError);
}

TEST(Sampling, GatherKeepsPartLabels) {
  LabeledCloud c;
  c.points = Tensor({3, 3}, {0, 0, 0, 1, 1, 1, 2, 2, 2});
  c.part_labels = {5, 6, 7};
  const std::vector<std::size_t> idx{2, 0};
  const auto g = gather(c, idx);
  EXPECT_EQ(g.part_labels, (std::vector<int>{7, 5}));
  EXPECT_EQ(g.points.at({0, 1}), 2.0);
}

TEST(Normalize, CentroidAndRadius) {
  Rng rng(3);
  const Tensor p = normalize(randn({50, 3}, rng, 4.0));
  double c[3] = {0, 0, 0}, r = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      c[k] += p.at({i, k});
      s += p.at({i, k}) * p.at({i, k});
    }
    r = std::max(r, std::sqrt(s));
  }
  for (double v : c) EXPECT_NEAR(v, 0.0, 1e-12);
  EXPECT_NEAR(r, 1.0, 1e-15);
  EXPECT_THROW(normalize(Tensor::zeros({4, 3})), ContractError);
}

TEST(Normalize, CommutesWithRotation) {
  Rng rng(4);
  const Tensor p = randn({30, 3}, rng);
  const Rotation r = sample_rotation(RotationProtocol::SO3, rng);
  EXPECT_LE(max_abs_diff(normalize(r.apply(p)), r.apply(normalize(p))), 1e-12);
}

TEST(Augment, IdentityConfigIsNoOp) {
  Rng rng(5);
  LabeledCloud c;
  c.points = randn({10, 3}, rng);
  AugmentConfig a;
  a.scale_min = a.scale_max = 1.0;
  a.shift_min = a.shift_max = 0.0;
  EXPECT_TRUE(bitwise_equal(augment(c, a, rng).points, c.points));
}

TEST(Augment, ZProtocolKeepsHeight) {
  Rng rng(6);
  LabeledCloud c;
  c.points = randn({10, 3}, rng);
  AugmentConfig a;
  a.scale_min = a.scale_max = 1.0;
  a.shift_min = a.shift_max = 0.0;
  a.protocol = RotationProtocol::Z;
  const Tensor q = augment(c, a, rng).points;
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_NEAR(q.at({i, 2}), c.points.at({i, 2}), 1e-14);
    const double r0 = std::hypot(c.points.at({i, 0}), c.points.at({i, 1}));
    EXPECT_NEAR(std::hypot(q.at({i, 0}), q.at({i, 1})), r0, 1e-12);
  }
}

TEST(Augment, ScaleAndShiftRanges) {
  Rng rng(7);
  LabeledCloud c;
  c.points = Tensor({2, 3}, {0, 0, 0, 1, 0, 0});
  AugmentConfig a;
  for (int i = 0; i < 200; ++i) {
    const Tensor q = augment(c, a, rng).points;
    const double s = q.at({1, 0}) - q.at({0, 0});
    EXPECT_GE(s, 0.8);
    EXPECT_LE(s, 1.25);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_GE(q.at({0, k}), -0.1);
      EXPECT_LE(q.at({0, k}), 0.1);
    }
  }
}

TEST(Protocol, TestRotationsAreFixedPerIndex) {
  const auto s = make_protocol_split(RotationProtocol::Z, RotationProtocol::SO3, 9);
  EXPECT_EQ(s.name(), "z/so3");
  EXPECT_TRUE(bitwise_equal(s.test_rotation(3).as_tensor(), s.test_rotation(3).as_tensor()));
  EXPECT_FALSE(bitwise_equal(s.test_rotation(3).as_tensor(), s.test_rotation(4).as_tensor()));
  const auto none = make_protocol_split(RotationProtocol::Z, RotationProtocol::None);
  EXPECT_TRUE(bitwise_equal(none.test_rotation(3).as_tensor(), Tensor::eye(3)));
}

TEST(Synthetic, SurfacesWithoutNoise) {
  Rng rng(8);
  const auto sphere = generate_synthetic(SyntheticShape::Sphere, 200, 0.0, rng);
  const auto cube = generate_synthetic(SyntheticShape::Cube, 200, 0.0, rng);
  const auto cyl = generate_synthetic(SyntheticShape::Cylinder, 200, 0.0, rng);
  EXPECT_EQ(cube.label, 1);
  for (std::size_t i = 0; i < 200; ++i) {
    const double x = sphere.points.at({i, 0}), y = sphere.points.at({i, 1}), z = sphere.points.at({i, 2});
    EXPECT_NEAR(x * x + y * y + z * z, 1.0, 1e-12);
    double linf = 0;
    for (std::size_t k = 0; k < 3; ++k) linf = std::max(linf, std::abs(cube.points.at({i, k})));
    EXPECT_NEAR(linf, 0.5, 1e-12);
    const double r = std::hypot(cyl.points.at({i, 0}), cyl.points.at({i, 1}));
    const double h = std::abs(cyl.points.at({i, 2}));
    EXPECT_TRUE(std::abs(r - 0.5) < 1e-12 || (std::abs(h - 0.5) < 1e-12 && r <= 0.5));
  }
}

TEST(Synthetic, DatasetsAreBalancedAndSeeded) {
  const Dataset a = make_synthetic_classification(30, 9, 64, 0.02, 1);
  const Dataset b = make_synthetic_classification(30, 9, 64, 0.02, 1);
  EXPECT_EQ(a.num_classes, 3u);
  std::vector<int> count(3, 0);
  for (const auto& c : a.train) ++count[static_cast<std::size_t>(c.label)];
  EXPECT_EQ(count, (std::vector<int>{10, 10, 10}));
  EXPECT_TRUE(bitwise_equal(a.test[4].points, b.test[4].points));
  const Dataset s = make_synthetic_segmentation(8, 4, 64, 0.0, 2);
  EXPECT_EQ(s.num_categories, 2u);
  EXPECT_EQ(s.num_classes, 4u);
  for (const auto& c : s.train) {
    EXPECT_EQ(c.part_labels.size(), 64u);
    for (int p : c.part_labels) EXPECT_EQ(p / 2, c.category);
  }
}
