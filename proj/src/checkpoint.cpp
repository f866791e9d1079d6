#include "vnt/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "vnt/config.hpp"
#include "vnt/errors.hpp"

namespace vnt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kAdamM = "adam.m.";
constexpr const char* kAdamV = "adam.v.";
constexpr const char* kAdamStep = "adam.step";

std::uint64_t to_little(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(x);
  return x;
}

void write_tensor(const fs::path& file, const std::vector<double>& values) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + file.string());
  for (double v : values) {
    const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw CheckpointError("short write to " + file.string());
}

std::vector<double> read_tensor(const fs::path& file, const std::string& name, std::size_t count) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CheckpointError("tensor '" + name + "': missing file " + file.string());
  std::error_code ec;
  const auto bytes = fs::file_size(file, ec);
  if (ec || bytes != count * sizeof(double)) {
    throw CheckpointError("tensor '" + name + "': expected " + std::to_string(count * sizeof(double)) +
                          " bytes, file has " + std::to_string(ec ? 0 : bytes));
  }
  std::vector<double> values(count);
  for (double& v : values) {
    std::uint64_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), sizeof bits);
    v = std::bit_cast<double>(to_little(bits));
    if (!std::isfinite(v)) throw CheckpointError("tensor '" + name + "': non-finite value");
  }
  if (!in) throw CheckpointError("tensor '" + name + "': truncated");
  return values;
}

json entry(const std::string& name, const Shape& shape, const char* role) {
  return json{{"name", name}, {"shape", shape}, {"dtype", "float64"}, {"role", role}};
}

}  // namespace

void save_checkpoint(const fs::path& dir, const VNTModel& model, const AdamState* optimizer) {
  fs::create_directories(dir);
  json manifest = json::array();
  auto put = [&](const std::string& name, const Shape& shape, const std::vector<double>& values, const char* role) {
    write_tensor(dir / (name + ".bin"), values);
    manifest.push_back(entry(name, shape, role));
  };
  for (const auto& [name, e] : model.params.entries()) put(name, e.shape, e.value, "param");
  for (const auto& [name, e] : model.buffers.entries()) put(name, e.shape, e.value, "buffer");
  if (optimizer) {
    for (const auto& [name, e] : model.params.entries()) {
      put(kAdamM + name, e.shape, optimizer->m.at(name), "optimizer");
      put(kAdamV + name, e.shape, optimizer->v.at(name), "optimizer");
    }
    put(kAdamStep, {1}, {static_cast<double>(optimizer->step)}, "optimizer");
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  std::ofstream(dir / "config.json") << to_json(model.config).dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw CheckpointError("checkpoint directory not found: " + dir.string());
  json config_json, manifest;
  try {
    std::ifstream cin(dir / "config.json");
    if (!cin) throw CheckpointError("missing config.json in " + dir.string());
    config_json = json::parse(cin);
    std::ifstream min(dir / "manifest.json");
    if (!min) throw CheckpointError("missing manifest.json in " + dir.string());
    manifest = json::parse(min);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("unreadable checkpoint metadata: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(config_json);
    cfg.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
  Rng rng(0);
  Checkpoint ck{init_model(cfg, rng), std::nullopt};

  std::map<std::string, Shape> listed;
  try {
    for (const auto& e : manifest) {
      if (e.at("dtype").get<std::string>() != "float64") {
        throw CheckpointError("tensor '" + e.at("name").get<std::string>() + "': unsupported dtype");
      }
      listed[e.at("name").get<std::string>()] = e.at("shape").get<Shape>();
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed manifest.json: ") + e.what());
  }

  std::set<std::string> used;
  auto load_into = [&](const std::string& name, const Shape& expected) {
    auto it = listed.find(name);
    if (it == listed.end()) throw CheckpointError("tensor '" + name + "': not listed in manifest");
    if (it->second != expected) {
      throw CheckpointError("tensor '" + name + "': shape " + shape_str(it->second) + " does not match config " +
                            shape_str(expected));
    }
    used.insert(name);
    return read_tensor(dir / (name + ".bin"), name, shape_size(expected));
  };
  for (auto& [name, e] : ck.model.params.entries()) e.value = load_into(name, e.shape);
  for (auto& [name, e] : ck.model.buffers.entries()) e.value = load_into(name, e.shape);
  if (listed.count(kAdamStep)) {
    AdamState st;
    for (const auto& [name, e] : ck.model.params.entries()) {
      st.m[name] = load_into(kAdamM + name, e.shape);
      st.v[name] = load_into(kAdamV + name, e.shape);
    }
    st.step = static_cast<std::uint64_t>(load_into(kAdamStep, {1})[0]);
    ck.optimizer = std::move(st);
  }
  for (const auto& [name, shape] : listed) {
    if (!used.count(name)) throw CheckpointError("tensor '" + name + "': not part of the configured model");
  }
  return ck;
}

}  // namespace vnt
