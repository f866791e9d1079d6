#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "vnt/checkpoint.hpp"
#include "vnt/config.hpp"
#include "vnt/pointcloud.hpp"

namespace vnt {

/// Step schedule: lr · gamma^floor(epoch / step).
double lr_at(std::size_t epoch, const TrainConfig& cfg);

/// Zeroed moments for every parameter of `params`.
AdamState make_adam_state(const ParamStore& params);

/// One bias-corrected Adam update from the gradients held in `params`.
/// Throws DivergenceError naming the parameter on a non-finite gradient.
void adam_step(ParamStore& params, AdamState& state, const TrainConfig& cfg, double lr);

/// Per-part intersection-over-union with the two averaging schemes used for
/// part segmentation.
struct IoUSummary {
  std::vector<double> part_iou;  // pooled over all shapes, per part id
  double category_miou = 0.0;    // mean over parts within a category, then over categories
  double global_miou = 0.0;      // mean over all parts
};

/// `part_ids_by_category[c]` lists the parts scored for category c. A part
/// that never occurs and is never predicted scores 1.
IoUSummary compute_iou(std::span<const std::vector<int>> predicted, std::span<const std::vector<int>> truth,
                       std::span<const int> categories,
                       std::span<const std::vector<int>> part_ids_by_category, std::size_t num_parts);

/// Ground-truth parts seen per category.
std::vector<std::vector<int>> parts_by_category(std::span<const LabeledCloud> clouds, std::size_t num_categories);

struct Metrics {
  double accuracy = 0.0;                  // classification: overall; segmentation: per point
  std::vector<double> per_class_accuracy; // classification only
  double category_miou = 0.0;
  double global_miou = 0.0;
  std::vector<double> part_iou;
  double loss = 0.0;                      // mean test cross-entropy
  std::vector<int> predictions;           // per sample (classification)
  std::vector<std::vector<int>> point_predictions;  // per point (segmentation)

  /// Accuracy for classification, global mIoU for segmentation.
  double headline(Task task) const { return task == Task::Classification ? accuracy : global_miou; }
};

/// Eval-mode preprocessing of test sample `index`: FPS from index 0 down to
/// `sample_n` points, normalization, then the split's fixed test rotation.
LabeledCloud prepare_test_sample(const LabeledCloud& cloud, std::size_t index, std::size_t sample_n,
                                 const ProtocolSplit& split);

/// Training-mode preprocessing: random-start FPS, normalization, augmentation.
LabeledCloud prepare_train_sample(const LabeledCloud& cloud, const AugmentConfig& aug, Rng& rng);

Metrics evaluate(const VNTModel& model, std::span<const LabeledCloud> test, const ProtocolSplit& split,
                 std::size_t sample_n, std::size_t num_categories = 0, std::size_t jobs = 1);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double eval_metric = 0.0;
};

struct TrainOptions {
  TrainConfig train;
  AugmentConfig augment;
  ProtocolSplit split;
  /// metrics.csv and checkpoint/ are written here when non-empty.
  std::filesystem::path out_dir;
  /// Worker threads for per-sample forward/backward (classification).
  std::size_t jobs = 1;
  std::ostream* log = nullptr;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  AdamState optimizer;
};

/// Epoch loop: shuffle, preprocess and augment per protocol, forward, loss,
/// backward, Adam with the step schedule. The batch gradient is the mean of
/// per-sample gradients. After each epoch the test split is evaluated; the
/// best epoch's model is checkpointed to out_dir/checkpoint and `model` is
/// left at the final epoch.
TrainResult train(VNTModel& model, const Dataset& data, const TrainOptions& opt);

/// `epoch,lr,train_loss,eval_metric` rows with 9 significant digits.
void write_metrics_csv(const std::filesystem::path& file, std::span<const EpochRecord> history);

}  // namespace vnt
