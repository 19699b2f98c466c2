#include "covert/datagen.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "covert/rng.hpp"

namespace covert {

namespace fs = std::filesystem;

void Scene::validate(int num_classes) const {
  const std::size_t hw = static_cast<std::size_t>(height) * width;
  if (height <= 0 || width <= 0) throw ConfigError("Scene: empty geometry");
  if (image.size() != 3 * hw || labels.size() != hw || depth.size() != hw)
    throw ConfigError("Scene: array sizes do not match geometry");
  for (float v : image)
    if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("Scene: image value outside [0,1]");
  for (std::size_t i = 0; i < hw; ++i) {
    if (labels[i] != 255 && labels[i] >= num_classes)
      throw ConfigError("Scene: label out of range");
    if (!std::isfinite(depth[i]) || depth[i] < 0.0f || depth[i] > 1.0f)
      throw ConfigError("Scene: depth outside [0,1]");
  }
}

bool ShapeSpec::contains(double x, double y) const {
  const double dx = x - cx, dy = y - cy;
  switch (cls) {
    case ShapeClass::Circle:
      return dx * dx + dy * dy <= size * size;
    case ShapeClass::Rectangle:
      return std::abs(dx) <= size && std::abs(dy) <= size * aspect;
    case ShapeClass::Triangle: {
      double vx[3], vy[3];
      for (int k = 0; k < 3; ++k) {
        const double a = rotation + k * 2.0 * std::numbers::pi / 3.0;
        vx[k] = cx + size * std::cos(a);
        vy[k] = cy + size * std::sin(a);
      }
      bool neg = false, pos = false;
      for (int k = 0; k < 3; ++k) {
        const int j = (k + 1) % 3;
        const double cross = (vx[j] - vx[k]) * (y - vy[k]) - (vy[j] - vy[k]) * (x - vx[k]);
        if (cross < 0) neg = true;
        if (cross > 0) pos = true;
      }
      return !(neg && pos);
    }
    case ShapeClass::Background:
      return false;
  }
  return false;
}

void SceneConfig::validate() const {
  if (height <= 0 || width <= 0) throw ConfigError("SceneConfig: size must be positive");
  if (min_shapes < 0 || max_shapes < min_shapes)
    throw ConfigError("SceneConfig: invalid shape count range");
  if (supersample <= 0) throw ConfigError("SceneConfig: supersample must be positive");
  if (!(shade_slope >= 0.0 && shade_slope < 1.0))
    throw ConfigError("SceneConfig: shade_slope must lie in [0,1)");
}

namespace {

// Index of the nearest shape covering (x, y), or -1 for background. Later
// shapes win exact depth ties.
int front_shape(const std::vector<ShapeSpec>& shapes, double x, double y) {
  int best = -1;
  for (std::size_t k = 0; k < shapes.size(); ++k)
    if (shapes[k].contains(x, y) &&
        (best < 0 || shapes[k].depth <= shapes[best].depth))
      best = static_cast<int>(k);
  return best;
}

}  // namespace

Scene render_scene(const std::vector<ShapeSpec>& shapes, const SceneConfig& cfg) {
  cfg.validate();
  const int H = cfg.height, W = cfg.width, S = cfg.supersample;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Scene sc;
  sc.height = H;
  sc.width = W;
  sc.image.assign(3 * hw, 0.0f);
  sc.labels.assign(hw, 0);
  sc.depth.assign(hw, 1.0f);
  std::vector<int> ids(static_cast<std::size_t>(S) * S);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double rgb[3] = {0, 0, 0};
      for (int j = 0; j < S; ++j)
        for (int i = 0; i < S; ++i) {
          const int id = front_shape(shapes, x + (i + 0.5) / S, y + (j + 0.5) / S);
          ids[j * S + i] = id;
          for (int c = 0; c < 3; ++c)
            rgb[c] += id < 0 ? cfg.background_level
                             : shapes[id].color[c] * (1.0 - cfg.shade_slope * shapes[id].depth);
        }
      const std::size_t p = static_cast<std::size_t>(y) * W + x;
      for (int c = 0; c < 3; ++c)
        sc.image[c * hw + p] = static_cast<float>(std::clamp(rgb[c] / (S * S), 0.0, 1.0));
      bool uniform = true;
      for (int id : ids) uniform = uniform && id == ids[0];
      if (uniform) {
        const int id = ids[0];
        sc.labels[p] = id < 0 ? 0 : static_cast<std::uint8_t>(shapes[id].cls);
        sc.depth[p] = id < 0 ? 1.0f : static_cast<float>(shapes[id].depth);
      } else {
        sc.labels[p] = 255;
        const int id = front_shape(shapes, x + 0.5, y + 0.5);
        sc.depth[p] = id < 0 ? 1.0f : static_cast<float>(shapes[id].depth);
      }
    }
  }
  return sc;
}

std::vector<ShapeSpec> random_shapes(std::uint64_t seed, const SceneConfig& cfg,
                                     std::optional<int> forced_count) {
  cfg.validate();
  Rng rng = make_rng(seed, 0x5ce7e);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int count = forced_count
                        ? *forced_count
                        : std::uniform_int_distribution<int>(cfg.min_shapes, cfg.max_shapes)(rng);
  if (count < 0) throw ConfigError("random_shapes: negative shape count");
  const double dim = std::min(cfg.height, cfg.width);
  std::vector<ShapeSpec> out;
  for (int k = 0; k < count; ++k) {
    ShapeSpec s;
    s.cls = static_cast<ShapeClass>(1 + std::uniform_int_distribution<int>(0, 2)(rng));
    s.cx = cfg.width * (0.15 + 0.7 * u01(rng));
    s.cy = cfg.height * (0.15 + 0.7 * u01(rng));
    s.size = dim * (0.1 + 0.12 * u01(rng));
    s.aspect = 0.6 + u01(rng);
    s.rotation = 2.0 * std::numbers::pi * u01(rng);
    s.depth = 0.1 + 0.8 * u01(rng);
    double mx = 0.0;
    for (auto& c : s.color) {
      c = 0.05 + 0.95 * u01(rng);
      mx = std::max(mx, c);
    }
    for (auto& c : s.color) c /= mx;
    out.push_back(s);
  }
  return out;
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg,
                     std::optional<int> forced_count) {
  return render_scene(random_shapes(seed, cfg, forced_count), cfg);
}

DatasetSplits dataset_splits(SeedRange train, SeedRange val, SeedRange test,
                             const SceneConfig& cfg) {
  const SeedRange r[3] = {train, val, test};
  for (const auto& a : r)
    if (a.count == 0) throw ConfigError("dataset_splits: split sizes must be positive");
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (r[i].begin < r[j].end() && r[j].begin < r[i].end())
        throw ConfigError("dataset_splits: overlapping seed ranges");
  DatasetSplits s;
  s.train_range = train;
  s.val_range = val;
  s.test_range = test;
  SceneSet* sets[3] = {&s.train, &s.val, &s.test};
  for (int i = 0; i < 3; ++i) {
    sets[i]->seeds.resize(r[i].count);
    sets[i]->scenes.resize(r[i].count);
#pragma omp parallel for schedule(dynamic, 8)
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(r[i].count); ++k) {
      sets[i]->seeds[k] = r[i].begin + k;
      sets[i]->scenes[k] = generate_scene(r[i].begin + k, cfg);
    }
  }
  return s;
}

DatasetSplits dataset_splits(std::size_t n_train, std::size_t n_val,
                             std::size_t n_test, std::uint64_t base_seed,
                             const SceneConfig& cfg) {
  return dataset_splits(SeedRange{base_seed, n_train},
                        SeedRange{base_seed + n_train, n_val},
                        SeedRange{base_seed + n_train + n_val, n_test}, cfg);
}

void write_split_membership(const fs::path& path, const DatasetSplits& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::pair<const char*, const SceneSet*> sets[] = {
      {"train", &s.train}, {"val", &s.val}, {"test", &s.test}};
  for (const auto& [name, set] : sets)
    for (auto seed : set->seeds) out << name << ' ' << seed << '\n';
}

std::map<std::string, std::vector<std::uint64_t>> read_split_membership(
    const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::map<std::string, std::vector<std::uint64_t>> out;
  std::string name;
  std::uint64_t seed;
  while (in >> name >> seed) out[name].push_back(seed);
  return out;
}

namespace {

constexpr char kSceneMagic[4] = {'C', 'V', 'S', 'C'};
constexpr std::uint32_t kFloat32 = 1;

template <typename T>
void put(std::ostream& o, const T& v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& i) {
  T v{};
  if (!i.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw std::runtime_error("scene container: truncated");
  return v;
}

}  // namespace

void save_scenes(const fs::path& path, const std::vector<Scene>& scenes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kSceneMagic, 4);
  put<std::uint64_t>(out, scenes.size());
  for (const auto& s : scenes) {
    put<std::uint32_t>(out, s.height);
    put<std::uint32_t>(out, s.width);
    put<std::uint32_t>(out, 3);
    put<std::uint32_t>(out, kFloat32);
    out.write(reinterpret_cast<const char*>(s.image.data()), s.image.size() * sizeof(float));
    out.write(reinterpret_cast<const char*>(s.labels.data()), s.labels.size());
    out.write(reinterpret_cast<const char*>(s.depth.data()), s.depth.size() * sizeof(float));
  }
}

std::vector<Scene> load_scenes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kSceneMagic))
    throw std::runtime_error("scene container: bad magic in " + path.string());
  const auto count = get<std::uint64_t>(in);
  std::vector<Scene> out(count);
  for (auto& s : out) {
    s.height = static_cast<int>(get<std::uint32_t>(in));
    s.width = static_cast<int>(get<std::uint32_t>(in));
    const auto channels = get<std::uint32_t>(in);
    const auto dtype = get<std::uint32_t>(in);
    if (channels != 3 || dtype != kFloat32)
      throw std::runtime_error("scene container: unsupported record layout");
    const std::size_t hw = static_cast<std::size_t>(s.height) * s.width;
    s.image.resize(3 * hw);
    s.labels.resize(hw);
    s.depth.resize(hw);
    in.read(reinterpret_cast<char*>(s.image.data()), s.image.size() * sizeof(float));
    in.read(reinterpret_cast<char*>(s.labels.data()), s.labels.size());
    in.read(reinterpret_cast<char*>(s.depth.data()), s.depth.size() * sizeof(float));
    if (!in) throw std::runtime_error("scene container: truncated");
  }
  return out;
}

Netpbm read_netpbm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing file " + path.string());
  auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t += c;
    }
    return t;
  };
  Netpbm img;
  const std::string magic = token();
  if (magic == "P5") img.channels = 1;
  else if (magic == "P6") img.channels = 3;
  else throw std::runtime_error("unsupported netpbm format in " + path.string());
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    img.maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw std::runtime_error("malformed netpbm header in " + path.string());
  }
  if (img.width <= 0 || img.height <= 0 || img.maxval <= 0 || img.maxval > 65535)
    throw std::runtime_error("malformed netpbm header in " + path.string());
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.samples.resize(n);
  if (img.maxval < 256) {
    std::vector<unsigned char> raw(n);
    if (!in.read(reinterpret_cast<char*>(raw.data()), n))
      throw std::runtime_error("truncated netpbm data in " + path.string());
    for (std::size_t i = 0; i < n; ++i) img.samples[i] = raw[i];
  } else {
    std::vector<unsigned char> raw(2 * n);
    if (!in.read(reinterpret_cast<char*>(raw.data()), 2 * n))
      throw std::runtime_error("truncated netpbm data in " + path.string());
    for (std::size_t i = 0; i < n; ++i)
      img.samples[i] = static_cast<std::uint16_t>(raw[2 * i] << 8 | raw[2 * i + 1]);
  }
  return img;
}

void write_netpbm(const fs::path& path, const Netpbm& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (img.channels == 3 ? "P6" : "P5") << '\n'
      << img.width << ' ' << img.height << '\n'
      << img.maxval << '\n';
  for (auto v : img.samples) {
    if (img.maxval < 256) {
      out.put(static_cast<char>(v));
    } else {
      out.put(static_cast<char>(v >> 8));
      out.put(static_cast<char>(v & 0xff));
    }
  }
}

namespace {

// Centre crop to the target aspect ratio, then nearest-neighbour resample.
// Returns the source pixel index for each target pixel.
std::vector<std::size_t> crop_resize_map(int src_w, int src_h, int dst_w, int dst_h) {
  double crop_w = src_w, crop_h = src_h;
  if (crop_w * dst_h > crop_h * dst_w) crop_w = crop_h * dst_w / dst_h;
  else crop_h = crop_w * dst_h / dst_w;
  const double x0 = (src_w - crop_w) / 2.0, y0 = (src_h - crop_h) / 2.0;
  std::vector<std::size_t> map(static_cast<std::size_t>(dst_w) * dst_h);
  for (int y = 0; y < dst_h; ++y)
    for (int x = 0; x < dst_w; ++x) {
      const int sx = std::min(src_w - 1, static_cast<int>(x0 + (x + 0.5) * crop_w / dst_w));
      const int sy = std::min(src_h - 1, static_cast<int>(y0 + (y + 0.5) * crop_h / dst_h));
      map[static_cast<std::size_t>(y) * dst_w + x] = static_cast<std::size_t>(sy) * src_w + sx;
    }
  return map;
}

Scene ingest_item(const fs::path& img_path, const fs::path& seg_path,
                  const fs::path& depth_path, std::optional<double> depth_max,
                  const IngestConfig& cfg) {
  const Netpbm img = read_netpbm(img_path);
  const Netpbm seg = read_netpbm(seg_path);
  const Netpbm dep = read_netpbm(depth_path);
  if (img.channels != 3) throw std::runtime_error("image is not RGB");
  if (seg.channels != 1) throw std::runtime_error("segmentation map is not single-channel");
  if (dep.channels != 1) throw std::runtime_error("depth map is not single-channel");
  if (seg.width != img.width || seg.height != img.height ||
      dep.width != img.width || dep.height != img.height)
    throw std::runtime_error("misaligned triple: dimensions differ");
  const double dmax = depth_max.value_or(dep.maxval);
  const auto map = crop_resize_map(img.width, img.height, cfg.width, cfg.height);
  const std::size_t hw = map.size();
  Scene s;
  s.height = cfg.height;
  s.width = cfg.width;
  s.image.resize(3 * hw);
  s.labels.resize(hw);
  s.depth.resize(hw);
  for (std::size_t p = 0; p < hw; ++p) {
    const std::size_t src = map[p];
    for (int c = 0; c < 3; ++c)
      s.image[c * hw + p] = static_cast<float>(img.samples[src * 3 + c]) / img.maxval;
    int label = seg.samples[src];
    if (label != 255) {
      if (!cfg.label_map.empty()) {
        auto it = cfg.label_map.find(label);
        if (it == cfg.label_map.end())
          throw std::runtime_error("class id " + std::to_string(label) + " has no mapping");
        label = it->second;
      }
      if (label != 255 && (label < 0 || label >= cfg.num_classes))
        throw std::runtime_error("class id " + std::to_string(label) + " out of range");
    }
    s.labels[p] = static_cast<std::uint8_t>(label);
    const double d = dep.samples[src] / dmax;
    if (d > 1.0) throw std::runtime_error("depth exceeds declared maximum");
    s.depth[p] = static_cast<float>(d);
  }
  s.validate(cfg.num_classes);
  return s;
}

}  // namespace

IngestResult ingest_external(const fs::path& image_dir, const fs::path& seg_dir,
                             const fs::path& depth_dir, const fs::path& manifest,
                             const IngestConfig& cfg) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot read manifest " + manifest.string());
  IngestResult result;
  std::optional<double> depth_max;
  std::string line;
  std::size_t lineno = 0, items = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok[0] == "depth_max") {
      if (tok.size() != 2) throw ConfigError("manifest: depth_max takes one value");
      depth_max = std::stod(tok[1]);
      if (!(*depth_max > 0)) throw ConfigError("manifest: depth_max must be positive");
      continue;
    }
    ++items;
    if (tok.size() != 3) {
      result.errors.push_back({lineno, "expected three paths"});
      continue;
    }
    try {
      result.scenes.push_back(ingest_item(image_dir / tok[0], seg_dir / tok[1],
                                          depth_dir / tok[2], depth_max, cfg));
    } catch (const std::exception& e) {
      result.errors.push_back({lineno, e.what()});
    }
  }
  if (items > 0 && static_cast<double>(result.errors.size()) >
                       cfg.max_failure_fraction * static_cast<double>(items)) {
    std::ostringstream msg;
    msg << "ingest aborted: " << result.errors.size() << " of " << items
        << " items failed";
    for (const auto& e : result.errors) msg << "\n  line " << e.line << ": " << e.reason;
    throw IngestFailure(msg.str(), result.errors);
  }
  return result;
}

Batch make_batch(const std::vector<Scene>& scenes,
                 const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ConfigError("make_batch: empty index list");
  const int H = scenes.at(indices[0]).height, W = scenes.at(indices[0]).width;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const int n = static_cast<int>(indices.size());
  Batch b;
  b.images = Tensor({n, 3, H, W});
  b.depth = Tensor({n, 1, H, W});
  b.labels.resize(n * hw);
  for (int i = 0; i < n; ++i) {
    const Scene& s = scenes.at(indices[i]);
    if (s.height != H || s.width != W) throw ConfigError("make_batch: mixed scene sizes");
    std::copy(s.image.begin(), s.image.end(), b.images.sample(i));
    std::copy(s.depth.begin(), s.depth.end(), b.depth.sample(i));
    std::copy(s.labels.begin(), s.labels.end(), b.labels.begin() + i * hw);
  }
  return b;
}

Batch make_batch(const std::vector<Scene>& scenes, std::size_t begin,
                 std::size_t end) {
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
  return make_batch(scenes, idx);
}

}  // namespace covert
