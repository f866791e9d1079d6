#include "vnt/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <thread>

#include "vnt/errors.hpp"

namespace vnt {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kShuffleStream = 0x5f1e;

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be
/// written to per-index slots so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += jobs) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

int argmax(std::span<const double> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct SampleGrad {
  std::vector<std::vector<double>> grads;  // in params.entries() order
  double loss = 0.0;
};

SampleGrad classification_sample(const VNTModel& model, const LabeledCloud& cloud, const AugmentConfig& aug,
                                 Rng& rng) {
  const LabeledCloud c = prepare_train_sample(cloud, aug, rng);
  Tape tape;
  const Bindings b = model.params.bind(tape);
  ForwardOptions opt;
  opt.train = true;
  opt.rng = &rng;
  const Var logits = forward_classify(model, b, tape, c.points, opt);
  const int label = c.label;
  const Var loss = cross_entropy(logits, std::span(&label, 1));
  tape.backward(loss);
  SampleGrad out;
  out.loss = loss.value().item();
  for (const auto& [name, var] : b) out.grads.push_back(tape.grad(var).to_vector());
  return out;
}

double segmentation_batch(VNTModel& model, const Dataset& data, std::span<const std::size_t> batch,
                          const AugmentConfig& aug, std::uint64_t seed, std::size_t epoch) {
  std::vector<Tensor> points, categories;
  std::vector<int> labels;
  for (std::size_t idx : batch) {
    Rng rng = derive_rng(seed, epoch + 1, idx);
    const LabeledCloud c = prepare_train_sample(data.train[idx], aug, rng);
    points.push_back(c.points);
    categories.push_back(one_hot(c.category, model.config.num_categories));
    labels.insert(labels.end(), c.part_labels.begin(), c.part_labels.end());
  }
  Tape tape;
  const Bindings b = model.params.bind(tape);
  std::vector<BatchStats> stats;
  ForwardOptions opt;
  opt.train = true;
  opt.bn_stats = &stats;
  const Var logits = forward_segment(model, b, tape, points, categories, opt);
  const Var loss = cross_entropy(logits, labels);
  tape.backward(loss);
  model.params.accumulate_grads(tape, b);
  update_running_stats(model, stats, labels.size());
  return loss.value().item();
}

}  // namespace

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr * std::pow(cfg.sched_gamma, static_cast<double>(epoch / cfg.sched_step));
}

AdamState make_adam_state(const ParamStore& params) {
  AdamState s;
  for (const auto& [name, e] : params.entries()) {
    s.m[name].assign(e.value.size(), 0.0);
    s.v[name].assign(e.value.size(), 0.0);
  }
  return s;
}

void adam_step(ParamStore& params, AdamState& state, const TrainConfig& cfg, double lr) {
  for (const auto& [name, e] : params.entries()) {
    for (std::size_t i = 0; i < e.grad.size(); ++i) {
      if (!std::isfinite(e.grad[i])) {
        throw DivergenceError("non-finite gradient in parameter '" + name + "' at index " + std::to_string(i));
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, e] : params.entries()) {
    auto& m = state.m.at(name);
    auto& v = state.v.at(name);
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      e.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

IoUSummary compute_iou(std::span<const std::vector<int>> predicted, std::span<const std::vector<int>> truth,
                       std::span<const int> categories, std::span<const std::vector<int>> part_ids_by_category,
                       std::size_t num_parts) {
  if (predicted.size() != truth.size() || truth.size() != categories.size()) {
    throw DimensionError("compute_iou: predictions, labels and categories differ in length");
  }
  std::vector<double> tp(num_parts, 0), fp(num_parts, 0), fn(num_parts, 0);
  for (std::size_t s = 0; s < truth.size(); ++s) {
    if (predicted[s].size() != truth[s].size()) throw DimensionError("compute_iou: point count mismatch");
    for (std::size_t i = 0; i < truth[s].size(); ++i) {
      const auto p = static_cast<std::size_t>(predicted[s][i]);
      const auto t = static_cast<std::size_t>(truth[s][i]);
      if (p >= num_parts || t >= num_parts) throw ContractError("compute_iou: part id out of range");
      if (p == t) {
        tp[t] += 1;
      } else {
        fp[p] += 1;
        fn[t] += 1;
      }
    }
  }
  IoUSummary out;
  out.part_iou.resize(num_parts);
  for (std::size_t k = 0; k < num_parts; ++k) {
    const double denom = tp[k] + fp[k] + fn[k];
    out.part_iou[k] = denom == 0 ? 1.0 : tp[k] / denom;
  }
  out.global_miou = std::accumulate(out.part_iou.begin(), out.part_iou.end(), 0.0) / static_cast<double>(num_parts);
  double sum = 0.0;
  std::size_t cats = 0;
  for (const auto& parts : part_ids_by_category) {
    if (parts.empty()) continue;
    double c = 0.0;
    for (int p : parts) c += out.part_iou.at(static_cast<std::size_t>(p));
    sum += c / static_cast<double>(parts.size());
    ++cats;
  }
  out.category_miou = cats ? sum / static_cast<double>(cats) : 0.0;
  return out;
}

std::vector<std::vector<int>> parts_by_category(std::span<const LabeledCloud> clouds, std::size_t num_categories) {
  std::vector<std::vector<int>> out(num_categories);
  for (const auto& c : clouds) {
    auto& parts = out.at(static_cast<std::size_t>(c.category));
    for (int p : c.part_labels) {
      if (std::find(parts.begin(), parts.end(), p) == parts.end()) parts.push_back(p);
    }
  }
  for (auto& p : out) std::sort(p.begin(), p.end());
  return out;
}

LabeledCloud prepare_test_sample(const LabeledCloud& cloud, std::size_t index, std::size_t sample_n,
                                 const ProtocolSplit& split) {
  const auto idx = farthest_point_sample(cloud.points, sample_n, std::size_t{0});
  LabeledCloud c = gather(cloud, idx);
  c.points = split.test_rotation(index).apply(normalize(c.points));
  return c;
}

LabeledCloud prepare_train_sample(const LabeledCloud& cloud, const AugmentConfig& aug, Rng& rng) {
  const auto idx = farthest_point_sample(cloud.points, aug.sample_n, rng);
  LabeledCloud c = gather(cloud, idx);
  c.points = normalize(c.points);
  return augment(c, aug, rng);
}

Metrics evaluate(const VNTModel& model, std::span<const LabeledCloud> test, const ProtocolSplit& split,
                 std::size_t sample_n, std::size_t num_categories, std::size_t jobs) {
  const ModelConfig& cfg = model.config;
  Metrics m;
  if (test.empty()) return m;
  std::vector<double> losses(test.size(), 0.0);
  if (cfg.task == Task::Classification) {
    m.predictions.assign(test.size(), 0);
    parallel_for(test.size(), jobs, [&](std::size_t i) {
      const LabeledCloud c = prepare_test_sample(test[i], i, sample_n, split);
      Tape tape(false);
      const Bindings b = model.params.bind(tape, false);
      ForwardOptions opt;
      const Var logits = forward_classify(model, b, tape, c.points, opt);
      m.predictions[i] = argmax(logits.value().data());
      losses[i] = cross_entropy(logits, std::span(&c.label, 1)).value().item();
    });
    std::vector<double> hit(cfg.num_classes, 0), total(cfg.num_classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto t = static_cast<std::size_t>(test[i].label);
      total.at(t) += 1;
      if (m.predictions[i] == test[i].label) {
        ++correct;
        hit[t] += 1;
      }
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    for (std::size_t k = 0; k < cfg.num_classes; ++k) m.per_class_accuracy.push_back(total[k] ? hit[k] / total[k] : 0.0);
  } else {
    m.point_predictions.resize(test.size());
    std::vector<std::vector<int>> truth(test.size());
    std::vector<int> cats(test.size());
    parallel_for(test.size(), jobs, [&](std::size_t i) {
      const LabeledCloud c = prepare_test_sample(test[i], i, sample_n, split);
      const Tensor category = one_hot(c.category, cfg.num_categories);
      Tape tape(false);
      const Bindings b = model.params.bind(tape, false);
      ForwardOptions opt;
      const Var logits = forward_segment(model, b, tape, std::span(&c.points, 1), std::span(&category, 1), opt);
      const std::size_t k = cfg.num_classes;
      const auto v = logits.value().data();
      for (std::size_t p = 0; p < c.points.dim(0); ++p) m.point_predictions[i].push_back(argmax(v.subspan(p * k, k)));
      losses[i] = cross_entropy(logits, c.part_labels).value().item();
      truth[i] = c.part_labels;
      cats[i] = c.category;
    });
    std::size_t correct = 0, total = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      for (std::size_t p = 0; p < truth[i].size(); ++p) correct += truth[i][p] == m.point_predictions[i][p];
      total += truth[i].size();
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(total);
    const auto parts = parts_by_category(test, std::max(num_categories, cfg.num_categories));
    const IoUSummary iou = compute_iou(m.point_predictions, truth, cats, parts, cfg.num_classes);
    m.part_iou = iou.part_iou;
    m.category_miou = iou.category_miou;
    m.global_miou = iou.global_miou;
  }
  m.loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(test.size());
  return m;
}

void write_metrics_csv(const fs::path& file, std::span<const EpochRecord> history) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << "epoch,lr,train_loss,eval_metric\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << fmt9(r.lr) << ',' << fmt9(r.train_loss) << ',' << fmt9(r.eval_metric) << '\n';
  }
}

TrainResult train(VNTModel& model, const Dataset& data, const TrainOptions& opt) {
  const TrainConfig& tc = opt.train;
  tc.validate();
  if (data.train.empty()) throw DataError("training split is empty");
  if (data.task != model.config.task) throw ConfigError("dataset task does not match the model task");
  AugmentConfig aug = opt.augment;
  aug.protocol = opt.split.train;
  const std::span<const LabeledCloud> eval_set = data.test.empty() ? std::span<const LabeledCloud>(data.train)
                                                                   : std::span<const LabeledCloud>(data.test);
  if (!opt.out_dir.empty()) fs::create_directories(opt.out_dir);

  TrainResult result;
  result.optimizer = make_adam_state(model.params);
  std::vector<std::size_t> order(data.train.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = lr_at(epoch, tc);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = derive_rng(tc.seed, epoch, kShuffleStream);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::span<const std::size_t> batch(order.data() + start, std::min(tc.batch_size, order.size() - start));
      model.params.zero_grad();
      double batch_loss = 0.0;
      try {
        if (model.config.task == Task::Classification) {
          std::vector<SampleGrad> grads(batch.size());
          parallel_for(batch.size(), opt.jobs, [&](std::size_t i) {
            Rng rng = derive_rng(tc.seed, epoch + 1, batch[i]);
            grads[i] = classification_sample(model, data.train[batch[i]], aug, rng);
          });
          const double w = 1.0 / static_cast<double>(batch.size());
          for (const SampleGrad& g : grads) {
            std::size_t k = 0;
            for (auto& [name, e] : model.params.entries()) {
              const auto& src = g.grads[k++];
              for (std::size_t i = 0; i < src.size(); ++i) e.grad[i] += w * src[i];
            }
            batch_loss += w * g.loss;
          }
        } else {
          batch_loss = segmentation_batch(model, data, batch, aug, tc.seed, epoch);
        }
      } catch (const ContractError& e) {
        throw DivergenceError("epoch " + std::to_string(epoch) + " step " + std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("epoch " + std::to_string(epoch) + " step " + std::to_string(step) + ": loss is not finite");
      }
      adam_step(model.params, result.optimizer, tc, lr);
      loss_sum += batch_loss;
      ++batches;
      ++step;
    }

    const Metrics m = evaluate(model, eval_set, opt.split, aug.sample_n, data.num_categories, opt.jobs);
    const double metric = m.headline(model.config.task);
    result.history.push_back({epoch, lr, loss_sum / static_cast<double>(batches), metric});
    if (epoch == 0 || metric > result.best_metric) {
      result.best_metric = metric;
      result.best_epoch = epoch;
      if (!opt.out_dir.empty()) save_checkpoint(opt.out_dir / "checkpoint", model, &result.optimizer);
    }
    if (!opt.out_dir.empty()) write_metrics_csv(opt.out_dir / "metrics.csv", result.history);
    if (opt.log) {
      *opt.log << "epoch " << epoch << " lr " << fmt9(lr) << " train_loss " << fmt9(result.history.back().train_loss)
               << " eval " << fmt9(metric) << '\n';
      opt.log->flush();
    }
  }
  return result;
}

}  // namespace vnt
