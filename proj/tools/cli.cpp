#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "vnt/checkpoint.hpp"
#include "vnt/config.hpp"
#include "vnt/errors.hpp"
#include "vnt/pointcloud.hpp"
#include "vnt/training.hpp"
#include "vnt/verify.hpp"

namespace vnt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kSyntheticSigma = 0.02;

struct DataOptions {
  std::string source;
  std::size_t synthetic_train = 300;
  std::size_t synthetic_test = 60;
  std::size_t synthetic_points = 1024;
  std::size_t points = 1024;
};

void add_data_flags(CLI::App* cmd, DataOptions& d, bool required) {
  cmd->add_option("--data", d.source, "dataset directory or 'synthetic'")->required(required);
  cmd->add_option("--points", d.points, "points per cloud after farthest point sampling")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--synthetic-train", d.synthetic_train, "synthetic training clouds")->check(CLI::PositiveNumber);
  cmd->add_option("--synthetic-test", d.synthetic_test, "synthetic test clouds")->check(CLI::PositiveNumber);
  cmd->add_option("--synthetic-points", d.synthetic_points, "points generated per synthetic cloud")
      ->check(CLI::PositiveNumber);
}

Dataset load_data(const DataOptions& d, Task task, std::uint64_t seed) {
  Dataset ds;
  if (d.source == "synthetic") {
    if (d.synthetic_points < d.points) {
      throw ConfigError("--points " + std::to_string(d.points) + " exceeds --synthetic-points " +
                        std::to_string(d.synthetic_points));
    }
    ds = task == Task::Classification
             ? make_synthetic_classification(d.synthetic_train, d.synthetic_test, d.synthetic_points,
                                             kSyntheticSigma, seed)
             : make_synthetic_segmentation(d.synthetic_train, d.synthetic_test, d.synthetic_points,
                                           kSyntheticSigma, seed);
  } else {
    if (!fs::is_directory(d.source)) throw DataError("dataset directory not found: " + d.source);
    ds = task == Task::Classification ? load_classification_dir(d.source) : load_segmentation_dir(d.source);
  }
  auto check = [&](const std::vector<LabeledCloud>& clouds) {
    for (const auto& c : clouds) {
      if (c.points.dim(0) < d.points) {
        throw DataError("a cloud has " + std::to_string(c.points.dim(0)) + " points, fewer than --points " +
                        std::to_string(d.points));
      }
    }
  };
  check(ds.train);
  check(ds.test);
  return ds;
}

Task task_flag(const std::string& s) {
  if (s == "cls") return Task::Classification;
  if (s == "seg") return Task::Segmentation;
  throw ConfigError("--task must be cls or seg, got '" + s + "'");
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

json metrics_json(const Metrics& m, Task task, const ProtocolSplit& split) {
  json j{{"task", to_string(task)}, {"protocol", split.name()}, {"accuracy", m.accuracy}, {"loss", m.loss}};
  if (task == Task::Classification) {
    j["per_class_accuracy"] = m.per_class_accuracy;
  } else {
    j["category_miou"] = m.category_miou;
    j["global_miou"] = m.global_miou;
    j["part_iou"] = m.part_iou;
  }
  return j;
}

void print_metrics(std::ostream& out, const Metrics& m, Task task) {
  out << "accuracy " << fmt("%.9g", m.accuracy) << '\n';
  if (task == Task::Segmentation) {
    out << "category_miou " << fmt("%.9g", m.category_miou) << '\n';
    out << "global_miou " << fmt("%.9g", m.global_miou) << '\n';
  }
  out << "loss " << fmt("%.9g", m.loss) << '\n';
}

void write_predictions(const fs::path& file, const Metrics& m, std::span<const LabeledCloud> test, Task task) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  if (task == Task::Classification) {
    out << "index,label,prediction\n";
    for (std::size_t i = 0; i < m.predictions.size(); ++i) {
      out << i << ',' << test[i].label << ',' << m.predictions[i] << '\n';
    }
  } else {
    out << "index,point,prediction\n";
    for (std::size_t i = 0; i < m.point_predictions.size(); ++i) {
      for (std::size_t p = 0; p < m.point_predictions[i].size(); ++p) {
        out << i << ',' << p << ',' << m.point_predictions[i][p] << '\n';
      }
    }
  }
}

int cmd_verify(std::size_t trials, double tol, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  const VerifyReport rep = run_verify({trials, tol, seed});
  print_report(out, rep);
  if (rep.passed()) return kOk;
  for (const auto& c : rep.checks) {
    if (!c.passed) err << "verify: check failed: " << c.name << '\n';
  }
  return kVerifyFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vector Neuron Transformer: rotation-equivariant point-cloud attention", "vnt"};
  app.require_subcommand(1);

  std::size_t trials = 100;
  double tol = 1e-10;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> seed_override;
  auto* verify = app.add_subcommand("verify", "run the equivariance and gradient property suite");
  verify->add_option("--trials", trials, "random trials per property")->check(CLI::PositiveNumber);
  verify->add_option("--tol", tol, "equivariance tolerance")->check(CLI::PositiveNumber);
  verify->add_option("--seed", seed);

  std::string task_name = "cls", train_rot = "none", test_rot = "none", rot = "none";
  std::string config_path, out_dir, ckpt, input, csv_out;
  std::size_t jobs = 1, block = 0, head = 0;
  DataOptions data;

  auto* train_cmd = app.add_subcommand("train", "train a model and keep the best checkpoint");
  train_cmd->add_option("--task", task_name, "cls or seg")->check(CLI::IsMember({"cls", "seg"}));
  add_data_flags(train_cmd, data, true);
  train_cmd->add_option("--train-rot", train_rot, "rotation protocol for training")
      ->check(CLI::IsMember({"none", "z", "so3"}));
  train_cmd->add_option("--test-rot", test_rot, "rotation protocol for evaluation")
      ->check(CLI::IsMember({"none", "z", "so3"}));
  train_cmd->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  train_cmd->add_option("--seed", seed_override, "overrides the config seed");
  train_cmd->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  add_data_flags(eval_cmd, data, true);
  eval_cmd->add_option("--rot", rot, "test rotation protocol")->check(CLI::IsMember({"none", "z", "so3"}));
  eval_cmd->add_option("--out", out_dir, "directory for metrics.json and predictions.csv");
  eval_cmd->add_option("--seed", seed, "data and test-rotation seed");
  eval_cmd->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  auto* count_cmd = app.add_subcommand("count-params", "print parameter counts per module");
  count_cmd->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);

  auto* export_cmd = app.add_subcommand("export-attention", "write one head's attention matrix as CSV");
  export_cmd->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  export_cmd->add_option("--input", input, "point cloud (.off or .csv)")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--block", block, "block index")->required();
  export_cmd->add_option("--head", head, "head index")->required();
  export_cmd->add_option("--out", csv_out, "output CSV")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "vnt: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*verify) return cmd_verify(trials, tol, seed, out, err);

    if (*count_cmd) {
      ModelConfig cfg;
      if (!config_path.empty()) cfg = load_run_config(config_path).model;
      cfg.validate();
      for (const auto& [module, n] : count_params_by_module(cfg)) out << module << ' ' << n << '\n';
      out << "total " << count_params(cfg) << '\n';
      out << "reference 1.37M (published normal-input classifier)\n";
      return kOk;
    }

    if (*train_cmd) {
      const Task task = task_flag(task_name);
      RunConfig rc;
      if (!config_path.empty()) rc = load_run_config(config_path);
      if (seed_override) rc.train.seed = *seed_override;
      const Dataset ds = load_data(data, task, rc.train.seed);
      rc.model.task = task;
      rc.model.num_classes = ds.num_classes;
      rc.model.num_categories = ds.num_categories;
      rc.model.validate();
      rc.train.validate();

      TrainOptions opt;
      opt.train = rc.train;
      opt.augment.sample_n = data.points;
      opt.split = make_protocol_split(parse_protocol(train_rot), parse_protocol(test_rot), rc.train.seed);
      opt.out_dir = out_dir;
      opt.jobs = jobs;
      opt.log = &out;
      Rng init_rng = derive_rng(rc.train.seed, 0x1a17, 0);
      VNTModel model = init_model(rc.model, init_rng);
      out << "training " << count_params(rc.model) << " parameters, protocol " << opt.split.name() << '\n';
      const TrainResult r = train(model, ds, opt);
      out << "best epoch " << r.best_epoch << " metric " << fmt("%.9g", r.best_metric) << '\n';
      return kOk;
    }

    if (*eval_cmd) {
      const Checkpoint ck = load_checkpoint(ckpt);
      const ModelConfig& cfg = ck.model.config;
      const Dataset ds = load_data(data, cfg.task, seed);
      if (ds.num_classes != cfg.num_classes || ds.num_categories != cfg.num_categories) {
        throw DataError("dataset has " + std::to_string(ds.num_classes) + " classes, checkpoint expects " +
                        std::to_string(cfg.num_classes));
      }
      const ProtocolSplit split = make_protocol_split(RotationProtocol::None, parse_protocol(rot), seed);
      const std::span<const LabeledCloud> test = ds.test.empty() ? std::span<const LabeledCloud>(ds.train)
                                                                 : std::span<const LabeledCloud>(ds.test);
      const Metrics m = evaluate(ck.model, test, split, data.points, ds.num_categories, jobs);
      print_metrics(out, m, cfg.task);
      const fs::path dir = out_dir.empty() ? fs::path(ckpt).parent_path() : fs::path(out_dir);
      if (!dir.empty()) fs::create_directories(dir);
      std::ofstream(dir / "metrics.json") << metrics_json(m, cfg.task, split).dump(2) << '\n';
      write_predictions(dir / "predictions.csv", m, test, cfg.task);
      return kOk;
    }

    if (*export_cmd) {
      const Checkpoint ck = load_checkpoint(ckpt);
      const ModelConfig& cfg = ck.model.config;
      if (block >= cfg.blocks || head >= cfg.heads) {
        err << "vnt: --block must be < " << cfg.blocks << " and --head < " << cfg.heads << '\n';
        return kUsage;
      }
      const Tensor points = normalize(load_cloud(input).points);
      std::vector<std::vector<Tensor>> attention;
      Tape tape(false);
      const Bindings b = ck.model.params.bind(tape, false);
      ForwardOptions fo;
      fo.attention = &attention;
      point_features(ck.model, b, tape, points, fo);
      const Tensor& w = attention.at(block).at(head);
      std::ofstream f(csv_out, std::ios::trunc);
      if (!f) throw DataError("cannot write " + csv_out);
      const std::size_t n = w.dim(0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) f << (j ? "," : "") << fmt("%.9g", w[i * n + j]);
        f << '\n';
      }
      out << "wrote " << n << 'x' << n << " attention matrix to " << csv_out << '\n';
      return kOk;
    }
  } catch (const CheckpointError& e) {
    err << "vnt: checkpoint error: " << e.what() << '\n';
    return kCheckpointError;
  } catch (const ParseError& e) {
    err << "vnt: data error: " << e.what() << '\n';
    return kDataError;
  } catch (const DataError& e) {
    err << "vnt: data error: " << e.what() << '\n';
    return kDataError;
  } catch (const ConfigError& e) {
    err << "vnt: " << e.what() << '\n';
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "vnt: training diverged: " << e.what() << '\n';
    return kVerifyFailed;
  } catch (const std::exception& e) {
    err << "vnt: error: " << e.what() << '\n';
    return kVerifyFailed;
  }
  return kUsage;
}

}  // namespace vnt::cli
