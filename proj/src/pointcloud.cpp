#include "vnt/pointcloud.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "vnt/errors.hpp"

namespace vnt {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  if (sep == ' ') {
    while (is >> cur) out.push_back(cur);
    return out;
  }
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && std::isfinite(out);
}

bool parse_size(const std::string& s, std::size_t& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

[[noreturn]] void fail(const fs::path& path, std::size_t line, const std::string& what) {
  throw ParseError(path.string() + ":" + std::to_string(line) + ": " + what, line);
}

LabeledCloud load_off(const fs::path& path, std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      line = trim(line);
      if (!line.empty() && line[0] != '#') return true;
    }
    return false;
  };
  if (!next() || line.rfind("OFF", 0) != 0) fail(path, lineno == 0 ? 1 : lineno, "missing OFF header");
  // Some ModelNet files glue the counts to the header ("OFF490 518 0").
  std::string counts = trim(line.substr(3));
  if (counts.empty()) {
    if (!next()) fail(path, lineno + 1, "missing vertex/face count line");
    counts = line;
  }
  const auto fields = split(counts, ' ');
  std::size_t nv = 0, nf = 0;
  if (fields.size() < 2 || fields.size() > 3 || !parse_size(fields[0], nv) || !parse_size(fields[1], nf)) {
    fail(path, lineno, "malformed count line '" + counts + "'");
  }
  if (nv == 0) fail(path, lineno, "OFF file declares no vertices");
  std::vector<double> pts;
  pts.reserve(nv * 3);
  for (std::size_t v = 0; v < nv; ++v) {
    if (!next()) fail(path, lineno + 1, "expected " + std::to_string(nv) + " vertices, found " + std::to_string(v));
    const auto xyz = split(line, ' ');
    double c[3];
    if (xyz.size() < 3 || !parse_double(xyz[0], c[0]) || !parse_double(xyz[1], c[1]) || !parse_double(xyz[2], c[2])) {
      fail(path, lineno, "malformed vertex '" + line + "'");
    }
    pts.insert(pts.end(), c, c + 3);
  }
  LabeledCloud c;
  c.points = Tensor({nv, 3}, std::move(pts));
  return c;
}

LabeledCloud load_csv(const fs::path& path, std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> pts;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto xyz = split(line, ',');
    double c[3];
    if (xyz.size() < 3 || !parse_double(xyz[0], c[0]) || !parse_double(xyz[1], c[1]) || !parse_double(xyz[2], c[2])) {
      fail(path, lineno, "malformed row '" + line + "' (expected x,y,z)");
    }
    pts.insert(pts.end(), c, c + 3);
  }
  if (pts.empty()) fail(path, lineno + 1, "no points");
  const std::size_t n = pts.size() / 3;
  LabeledCloud c;
  c.points = Tensor({n, 3}, std::move(pts));
  return c;
}

std::array<double, 3> sample_surface(SyntheticShape shape, Rng& rng, int* part) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  switch (shape) {
    case SyntheticShape::Sphere: {
      std::normal_distribution<double> g(0.0, 1.0);
      double x, y, z, n;
      do {
        x = g(rng);
        y = g(rng);
        z = g(rng);
        n = std::sqrt(x * x + y * y + z * z);
      } while (n < 1e-12);
      if (part) *part = 0;
      return {x / n, y / n, z / n};
    }
    case SyntheticShape::Cube: {
      std::uniform_int_distribution<int> face(0, 5);
      const int f = face(rng);
      const double a = u01(rng) - 0.5, b = u01(rng) - 0.5;
      std::array<double, 3> p{};
      const int axis = f / 2;
      p[axis] = f % 2 == 0 ? 0.5 : -0.5;
      p[(axis + 1) % 3] = a;
      p[(axis + 2) % 3] = b;
      if (part) *part = std::max(std::abs(a), std::abs(b)) > 0.4 ? 1 : 0;
      return p;
    }
    case SyntheticShape::Cylinder: {
      // Lateral area pi, caps pi/2 (radius 0.5, height 1).
      const double pick = u01(rng);
      const double theta = 2.0 * std::numbers::pi * u01(rng);
      if (pick < 2.0 / 3.0) {
        if (part) *part = 0;
        return {0.5 * std::cos(theta), 0.5 * std::sin(theta), u01(rng) - 0.5};
      }
      const double r = 0.5 * std::sqrt(u01(rng));
      if (part) *part = 1;
      return {r * std::cos(theta), r * std::sin(theta), pick < 5.0 / 6.0 ? 0.5 : -0.5};
    }
  }
  return {0, 0, 0};
}

LabeledCloud synthetic_cloud(SyntheticShape shape, std::size_t n, double sigma, Rng& rng, bool with_parts) {
  std::normal_distribution<double> jitter(0.0, sigma > 0.0 ? sigma : 1.0);
  std::vector<double> pts(n * 3);
  LabeledCloud cloud;
  if (with_parts) cloud.part_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    int part = 0;
    const auto p = sample_surface(shape, rng, &part);
    for (int c = 0; c < 3; ++c) pts[i * 3 + c] = p[c] + (sigma > 0.0 ? jitter(rng) : 0.0);
    if (with_parts) cloud.part_labels[i] = part;
  }
  cloud.points = Tensor({n, 3}, std::move(pts));
  cloud.label = static_cast<int>(shape);
  return cloud;
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool dirs) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (dirs ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool is_cloud_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".off" || ext == ".csv" || ext == ".xyz";
}

}  // namespace

Tensor one_hot(int id, std::size_t width) {
  if (id < 0 || static_cast<std::size_t>(id) >= width) {
    throw ContractError("one_hot: id " + std::to_string(id) + " outside [0," + std::to_string(width) + ")");
  }
  std::vector<double> v(width, 0.0);
  v[static_cast<std::size_t>(id)] = 1.0;
  return Tensor({width}, std::move(v));
}

CloudFormat format_for(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".off") return CloudFormat::Off;
  if (ext == ".csv" || ext == ".xyz") return CloudFormat::XyzCsv;
  throw DataError("unsupported point-cloud file extension: " + path.string());
}

LabeledCloud load_cloud(const fs::path& path, CloudFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return format == CloudFormat::Off ? load_off(path, in) : load_csv(path, in);
}

LabeledCloud load_cloud(const fs::path& path) { return load_cloud(path, format_for(path)); }

std::vector<int> load_part_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    int v = 0;
    auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc() || p != line.data() + line.size() || v < 0) {
      fail(path, lineno, "malformed part label '" + line + "'");
    }
    labels.push_back(v);
  }
  return labels;
}

std::string to_string(SyntheticShape s) {
  switch (s) {
    case SyntheticShape::Sphere: return "sphere";
    case SyntheticShape::Cube: return "cube";
    case SyntheticShape::Cylinder: return "cylinder";
  }
  return "sphere";
}

LabeledCloud generate_synthetic(SyntheticShape shape, std::size_t n, double sigma, Rng& rng) {
  if (n < 8) throw ContractError("generate_synthetic: need at least 8 points");
  return synthetic_cloud(shape, n, sigma, rng, false);
}

std::vector<std::size_t> farthest_point_sample(const Tensor& points, std::size_t m, Rng& rng) {
  if (points.rank() != 2 || points.dim(1) != 3) {
    throw DimensionError("farthest_point_sample: expects [N x 3], got " + shape_str(points.shape()));
  }
  std::uniform_int_distribution<std::size_t> first(0, points.dim(0) - 1);
  return farthest_point_sample(points, m, first(rng));
}

std::vector<std::size_t> farthest_point_sample(const Tensor& points, std::size_t m, std::size_t start) {
  if (points.rank() != 2 || points.dim(1) != 3) {
    throw DimensionError("farthest_point_sample: expects [N x 3], got " + shape_str(points.shape()));
  }
  const std::size_t n = points.dim(0);
  if (m > n) {
    throw ContractError("farthest_point_sample: cannot pick " + std::to_string(m) + " of " + std::to_string(n) +
                        " points");
  }
  if (start >= n) throw ContractError("farthest_point_sample: start index out of range");
  std::vector<std::size_t> chosen;
  if (m == 0) return chosen;
  chosen.reserve(m);
  const auto x = points.data();
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::size_t current = start;
  for (std::size_t pick = 0; pick < m; ++pick) {
    chosen.push_back(current);
    best[current] = -1.0;
    std::size_t next = 0;
    double far = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (best[j] < 0.0) continue;
      double d = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double t = x[j * 3 + c] - x[current * 3 + c];
        d += t * t;
      }
      best[j] = std::min(best[j], d);
      if (best[j] > far) {
        far = best[j];
        next = j;
      }
    }
    current = next;
  }
  return chosen;
}

Tensor gather_points(const Tensor& points, std::span<const std::size_t> indices) {
  const auto x = points.data();
  std::vector<double> out;
  out.reserve(indices.size() * 3);
  for (std::size_t i : indices) out.insert(out.end(), x.begin() + static_cast<std::ptrdiff_t>(i * 3),
                                           x.begin() + static_cast<std::ptrdiff_t>(i * 3 + 3));
  return Tensor({indices.size(), 3}, std::move(out));
}

LabeledCloud gather(const LabeledCloud& cloud, std::span<const std::size_t> indices) {
  LabeledCloud out = cloud;
  out.points = gather_points(cloud.points, indices);
  if (!cloud.part_labels.empty()) {
    out.part_labels.clear();
    for (std::size_t i : indices) out.part_labels.push_back(cloud.part_labels[i]);
  }
  return out;
}

Tensor normalize(const Tensor& points) {
  if (points.rank() != 2 || points.dim(1) != 3) {
    throw DimensionError("normalize: expects [N x 3], got " + shape_str(points.shape()));
  }
  const std::size_t n = points.dim(0);
  const auto x = points.data();
  double c[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) c[k] += x[i * 3 + k];
  }
  for (double& v : c) v /= static_cast<double>(n);
  std::vector<double> out(x.size());
  double max_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      out[i * 3 + k] = x[i * 3 + k] - c[k];
      s += out[i * 3 + k] * out[i * 3 + k];
    }
    max_norm = std::max(max_norm, std::sqrt(s));
  }
  if (max_norm < 1e-12) throw ContractError("normalize: degenerate cloud (all points identical)");
  for (double& v : out) v /= max_norm;
  return Tensor(points.shape(), std::move(out));
}

LabeledCloud augment(const LabeledCloud& cloud, const AugmentConfig& cfg, Rng& rng) {
  auto draw = [&rng](double lo, double hi) {
    if (lo == hi) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const double s = draw(cfg.scale_min, cfg.scale_max);
  const double shift[3] = {draw(cfg.shift_min, cfg.shift_max), draw(cfg.shift_min, cfg.shift_max),
                           draw(cfg.shift_min, cfg.shift_max)};
  const auto x = cloud.points.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * s + shift[i % 3];
  LabeledCloud result = cloud;
  result.points = sample_rotation(cfg.protocol, rng).apply(Tensor(cloud.points.shape(), std::move(out)));
  return result;
}

Rotation ProtocolSplit::test_rotation(std::size_t index) const {
  Rng rng = derive_rng(test_seed, 0x7e57, index);
  return sample_rotation(test, rng);
}

std::string ProtocolSplit::name() const { return to_string(train) + "/" + to_string(test); }

ProtocolSplit make_protocol_split(RotationProtocol train, RotationProtocol test, std::uint64_t test_seed) {
  return ProtocolSplit{train, test, test_seed};
}

Dataset load_classification_dir(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  Dataset ds;
  ds.task = Task::Classification;
  for (const fs::path& cls : sorted_entries(root, true)) {
    const int label = static_cast<int>(ds.class_names.size());
    ds.class_names.push_back(cls.filename().string());
    for (const char* split_name : {"train", "test"}) {
      const fs::path dir = cls / split_name;
      if (!fs::is_directory(dir)) continue;
      for (const fs::path& file : sorted_entries(dir, false)) {
        if (!is_cloud_file(file)) continue;
        LabeledCloud c = load_cloud(file);
        c.label = label;
        (std::string(split_name) == "train" ? ds.train : ds.test).push_back(std::move(c));
      }
    }
  }
  ds.num_classes = ds.class_names.size();
  if (ds.train.empty()) throw DataError("no training clouds under " + root.string());
  return ds;
}

Dataset load_segmentation_dir(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  Dataset ds;
  ds.task = Task::Segmentation;
  int max_part = -1;
  for (const fs::path& cat : sorted_entries(root, true)) {
    const int category = static_cast<int>(ds.class_names.size());
    ds.class_names.push_back(cat.filename().string());
    std::size_t index = 0;
    for (const fs::path& file : sorted_entries(cat, false)) {
      if (!is_cloud_file(file)) continue;
      LabeledCloud c = load_cloud(file);
      fs::path seg = file;
      seg.replace_extension(".seg");
      c.part_labels = load_part_labels(seg);
      if (c.part_labels.size() != c.points.dim(0)) {
        throw DataError(seg.string() + ": " + std::to_string(c.part_labels.size()) + " labels for " +
                        std::to_string(c.points.dim(0)) + " points");
      }
      for (int p : c.part_labels) max_part = std::max(max_part, p);
      c.category = category;
      (index % 5 == 4 ? ds.test : ds.train).push_back(std::move(c));
      ++index;
    }
  }
  ds.num_categories = ds.class_names.size();
  ds.num_classes = static_cast<std::size_t>(max_part + 1);
  if (ds.train.empty()) throw DataError("no training clouds under " + root.string());
  return ds;
}

Dataset make_synthetic_classification(std::size_t train, std::size_t test, std::size_t points, double sigma,
                                      std::uint64_t seed) {
  Dataset ds;
  ds.task = Task::Classification;
  for (std::size_t s = 0; s < kSyntheticShapes; ++s) ds.class_names.push_back(to_string(SyntheticShape(s)));
  ds.num_classes = kSyntheticShapes;
  for (std::size_t i = 0; i < train + test; ++i) {
    Rng rng = derive_rng(seed, 0x5a7, i);
    const auto shape = static_cast<SyntheticShape>(i % kSyntheticShapes);
    (i < train ? ds.train : ds.test).push_back(generate_synthetic(shape, points, sigma, rng));
  }
  return ds;
}

Dataset make_synthetic_segmentation(std::size_t train, std::size_t test, std::size_t points, double sigma,
                                    std::uint64_t seed) {
  Dataset ds;
  ds.task = Task::Segmentation;
  ds.class_names = {"cylinder", "cube"};
  ds.num_categories = 2;
  ds.num_classes = 4;
  for (std::size_t i = 0; i < train + test; ++i) {
    Rng rng = derive_rng(seed, 0x5e6, i);
    const int category = static_cast<int>(i % 2);
    const auto shape = category == 0 ? SyntheticShape::Cylinder : SyntheticShape::Cube;
    LabeledCloud c = synthetic_cloud(shape, points, sigma, rng, true);
    for (int& p : c.part_labels) p += 2 * category;
    c.label = -1;
    c.category = category;
    (i < train ? ds.train : ds.test).push_back(std::move(c));
  }
  return ds;
}

}  // namespace vnt
