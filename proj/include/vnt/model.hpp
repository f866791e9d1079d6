#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vnt/attention.hpp"
#include "vnt/param_store.hpp"
#include "vnt/rotation.hpp"

namespace vnt {

enum class Task { Classification, Segmentation };

std::string to_string(Task t);
Task parse_task(const std::string& s);

/// How per-point vector features become scalars for the head. `Flatten` is
/// an ablation that feeds raw (rotation-dependent) coordinates.
enum class Readout { Invariant, Flatten };

std::string to_string(Readout r);
Readout parse_readout(const std::string& s);

/// Classification head hidden widths.
inline constexpr std::size_t kClsHidden[2] = {512, 256};
/// Segmentation head hidden widths.
inline constexpr std::size_t kSegHidden[3] = {512, 256, 128};
/// Width of the learned category embedding (segmentation).
inline constexpr std::size_t kCategoryEmbedding = 64;
/// Slope of the scalar leaky ReLU in the classification head.
inline constexpr double kHeadLeak = 0.2;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

struct ModelConfig {
  std::size_t linear_dim = 16;
  std::size_t heads = 24;
  std::size_t head_size = 16;
  std::size_t blocks = 3;
  std::size_t knn_k = 20;
  Task task = Task::Classification;
  std::size_t num_classes = 40;   // classes, or part labels for segmentation
  std::size_t num_categories = 0; // segmentation only
  double dropout = 0.5;
  Readout readout = Readout::Invariant;

  /// Human-readable list of violated constraints; empty when valid.
  std::vector<std::string> violations() const;
  /// Throws ConfigError listing every violation.
  void validate() const;

  AttentionConfig attention() const { return {linear_dim, heads, head_size}; }
  /// Channels entering the readout: blocks · linear_dim.
  std::size_t trunk_channels() const { return blocks * linear_dim; }
  /// Per-point scalar features produced by the readout.
  std::size_t point_features() const { return 3 * trunk_channels(); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct VNTModel {
  ModelConfig config;
  ParamStore params;
  /// Non-trainable state: batch-norm running statistics.
  ParamStore buffers;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); batch-norm scale 1, shift 0,
/// running mean 0 and variance 1.
VNTModel init_model(const ModelConfig& cfg, Rng& rng);

/// Exact scalar-parameter count derived from the config alone.
std::size_t count_params(const ModelConfig& cfg);
/// Counts grouped by module (edge, block<i>, invariant, category, head).
std::vector<std::pair<std::string, std::size_t>> count_params_by_module(const ModelConfig& cfg);

struct ForwardOptions {
  bool train = false;
  /// Dropout masks (classification, train mode).
  Rng* rng = nullptr;
  /// When set, receives [block][head] attention matrices.
  std::vector<std::vector<Tensor>>* attention = nullptr;
  /// When set in train mode, receives the batch statistics per batch-norm.
  std::vector<BatchStats>* bn_stats = nullptr;
};

/// Edge lifting, the block stack, channel concatenation and readout:
/// per-point scalar features [N x point_features()].
Var point_features(const VNTModel& m, const Bindings& b, Tape& tape, const Tensor& points, ForwardOptions& opt);

/// Logits [1 x num_classes] for a normalized [N x 3] cloud.
Var forward_classify(const VNTModel& m, const Bindings& b, Tape& tape, const Tensor& points, ForwardOptions& opt);

/// Per-point logits [sum N x num_classes] for a batch of clouds sharing
/// one set of batch-norm statistics. `categories` are one-hot vectors.
Var forward_segment(const VNTModel& m, const Bindings& b, Tape& tape, std::span<const Tensor> points,
                    std::span<const Tensor> categories, ForwardOptions& opt);

/// Eval-mode convenience wrappers that evaluate without recording.
Tensor classify(const VNTModel& m, const Tensor& points);
Tensor segment(const VNTModel& m, const Tensor& points, const Tensor& category);

/// Folds batch statistics into the running averages
/// (running = momentum·running + (1-momentum)·batch, unbiased variance).
void update_running_stats(VNTModel& m, std::span<const BatchStats> stats, std::size_t batch_rows);

}  // namespace vnt
