#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vnt/model.hpp"
#include "vnt/rotation.hpp"
#include "vnt/tensor.hpp"

namespace vnt {

struct LabeledCloud {
  Tensor points;                // [N x 3]
  int label = -1;               // class id (classification)
  std::vector<int> part_labels; // per point (segmentation)
  int category = -1;            // category id (segmentation)
};

Tensor one_hot(int id, std::size_t width);

enum class CloudFormat { Off, XyzCsv };

/// Format from the file extension (.off or .csv/.xyz).
CloudFormat format_for(const std::filesystem::path& path);

/// Reads vertices of an OFF file (faces ignored) or "x,y,z" rows of a CSV
/// file. Throws ParseError naming the offending line.
LabeledCloud load_cloud(const std::filesystem::path& path, CloudFormat format);
LabeledCloud load_cloud(const std::filesystem::path& path);

/// One integer label per line.
std::vector<int> load_part_labels(const std::filesystem::path& path);

enum class SyntheticShape { Sphere, Cube, Cylinder };

inline constexpr std::size_t kSyntheticShapes = 3;
std::string to_string(SyntheticShape s);

/// Uniform samples on the surface of a unit sphere, a unit-side cube or a
/// cylinder of radius 0.5 and height 1, jittered by N(0, sigma²) per axis.
/// The label is the shape id.
LabeledCloud generate_synthetic(SyntheticShape shape, std::size_t n, double sigma, Rng& rng);

/// Greedy farthest point sampling from a random first index. Each next pick
/// maximizes the distance to the chosen set; ties go to the lower index.
std::vector<std::size_t> farthest_point_sample(const Tensor& points, std::size_t m, Rng& rng);
std::vector<std::size_t> farthest_point_sample(const Tensor& points, std::size_t m, std::size_t start);

Tensor gather_points(const Tensor& points, std::span<const std::size_t> indices);
LabeledCloud gather(const LabeledCloud& cloud, std::span<const std::size_t> indices);

/// Zero centroid, maximum point norm 1.
Tensor normalize(const Tensor& points);

struct AugmentConfig {
  double scale_min = 0.8;
  double scale_max = 1.25;
  double shift_min = -0.1;
  double shift_max = 0.1;
  std::size_t sample_n = 1024;
  RotationProtocol protocol = RotationProtocol::None;
};

/// Uniform scale, then per-axis uniform shift, then a rotation drawn from
/// the protocol. Points are never dropped.
LabeledCloud augment(const LabeledCloud& cloud, const AugmentConfig& cfg, Rng& rng);

/// Rotation protocols of a train/test experiment ("A/B").
struct ProtocolSplit {
  RotationProtocol train = RotationProtocol::None;
  RotationProtocol test = RotationProtocol::None;
  std::uint64_t test_seed = 0;

  /// Fixed rotation of test sample `index`.
  Rotation test_rotation(std::size_t index) const;
  std::string name() const;
};

ProtocolSplit make_protocol_split(RotationProtocol train, RotationProtocol test, std::uint64_t test_seed = 0);

struct Dataset {
  Task task = Task::Classification;
  std::vector<LabeledCloud> train;
  std::vector<LabeledCloud> test;
  std::vector<std::string> class_names;  // classes or categories
  std::size_t num_classes = 0;            // classes or parts
  std::size_t num_categories = 0;
};

/// root/<class>/{train,test}/<file>.off|csv
Dataset load_classification_dir(const std::filesystem::path& root);
/// root/<category>/<file>.csv with <file>.seg sidecars; every fifth file of
/// a category (sorted by name) goes to the test split.
Dataset load_segmentation_dir(const std::filesystem::path& root);

/// Balanced sphere/cube/cylinder classification set.
Dataset make_synthetic_classification(std::size_t train, std::size_t test, std::size_t points, double sigma,
                                      std::uint64_t seed);
/// Two categories with two parts each: cylinder (side, caps) and cube
/// (face interior, band near edges).
Dataset make_synthetic_segmentation(std::size_t train, std::size_t test, std::size_t points, double sigma,
                                    std::uint64_t seed);

}  // namespace vnt
