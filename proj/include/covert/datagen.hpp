#pragma once

// Procedural dual-label scenes (segmentation + depth from one image), split
// management, the binary scene container and external-dataset ingestion.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "covert/tensor.hpp"

namespace covert {

enum class ShapeClass : std::uint8_t { Background = 0, Circle = 1, Rectangle = 2, Triangle = 3 };
inline constexpr int kNumSceneClasses = 4;

struct Scene {
  int height = 0;
  int width = 0;
  std::vector<float> image;         // 3 x H x W, planar, in [0,1]
  std::vector<std::uint8_t> labels; // H x W, 255 on anti-aliased borders
  std::vector<float> depth;         // H x W, in [0,1]; background 1.0

  bool operator==(const Scene&) const = default;
  /// Throws ConfigError when a structural invariant is violated.
  void validate(int num_classes = kNumSceneClasses) const;
};

struct ShapeSpec {
  ShapeClass cls = ShapeClass::Circle;
  double cx = 0, cy = 0;     // centre, pixels
  double size = 0;           // radius / half-extent, pixels
  double aspect = 1.0;       // rectangle height / width
  double rotation = 0.0;     // triangle orientation, radians
  double depth = 0.5;        // in [0.1, 0.9]
  std::array<double, 3> color{1, 1, 1};  // base colour, max channel 1

  /// Whether point (x, y) lies inside the shape.
  bool contains(double x, double y) const;
};

struct SceneConfig {
  int height = 64;
  int width = 64;
  int min_shapes = 2;
  int max_shapes = 5;
  int supersample = 4;  // per-axis subsamples for anti-aliasing
  /// Displayed brightness is base * (1 - shade_slope * depth).
  double shade_slope = 0.7;
  double background_level = 0.2;

  void validate() const;
};

/// Painter's algorithm over subpixel samples: the nearest shape wins.
Scene render_scene(const std::vector<ShapeSpec>& shapes, const SceneConfig& cfg);

std::vector<ShapeSpec> random_shapes(std::uint64_t seed, const SceneConfig& cfg,
                                     std::optional<int> forced_count = {});

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg = {},
                     std::optional<int> forced_count = {});

struct SceneSet {
  std::vector<std::uint64_t> seeds;
  std::vector<Scene> scenes;
  std::size_t size() const { return scenes.size(); }
};

struct SeedRange {
  std::uint64_t begin = 0;
  std::uint64_t count = 0;
  std::uint64_t end() const { return begin + count; }
};

struct DatasetSplits {
  SeedRange train_range, val_range, test_range;
  SceneSet train, val, test;
};

/// Splits from explicit seed ranges; overlapping ranges are rejected.
DatasetSplits dataset_splits(SeedRange train, SeedRange val, SeedRange test,
                             const SceneConfig& cfg = {});
/// Consecutive non-overlapping ranges starting at `base_seed`.
DatasetSplits dataset_splits(std::size_t n_train, std::size_t n_val,
                             std::size_t n_test, std::uint64_t base_seed,
                             const SceneConfig& cfg = {});

/// One line per scene: "<split> <seed>".
void write_split_membership(const std::filesystem::path& path,
                            const DatasetSplits& splits);
std::map<std::string, std::vector<std::uint64_t>> read_split_membership(
    const std::filesystem::path& path);

/// Binary container: "CVSC" magic, count, then per scene a header
/// (height, width, channels, dtype) followed by the raw image, label and
/// depth arrays.
void save_scenes(const std::filesystem::path& path, const std::vector<Scene>& scenes);
std::vector<Scene> load_scenes(const std::filesystem::path& path);

struct IngestConfig {
  int height = 64;
  int width = 64;
  /// Source class id -> scene class id; empty means identity.
  std::map<int, int> label_map;
  int num_classes = kNumSceneClasses;
  double max_failure_fraction = 0.01;
};

struct IngestError {
  std::size_t line = 0;
  std::string reason;
};

struct IngestResult {
  std::vector<Scene> scenes;
  std::vector<IngestError> errors;
};

/// Manifest lines hold "<image> <seg> <depth>" paths relative to the three
/// directories; a "depth_max <value>" line declares the depth scale and '#'
/// starts a comment. Images are binary PPM, seg and depth binary PGM
/// (8 or 16 bit). Throws IngestFailure when more than the allowed fraction
/// of items fail.
IngestResult ingest_external(const std::filesystem::path& image_dir,
                             const std::filesystem::path& seg_dir,
                             const std::filesystem::path& depth_dir,
                             const std::filesystem::path& manifest,
                             const IngestConfig& cfg = {});

class IngestFailure : public std::runtime_error {
 public:
  IngestFailure(const std::string& what, std::vector<IngestError> errors)
      : std::runtime_error(what), errors_(std::move(errors)) {}
  const std::vector<IngestError>& errors() const { return errors_; }

 private:
  std::vector<IngestError> errors_;
};

/// Minimal netpbm image: channels 1 (P5) or 3 (P6), samples widened to 16 bit.
struct Netpbm {
  int width = 0, height = 0, channels = 0, maxval = 0;
  std::vector<std::uint16_t> samples;  // interleaved
};
Netpbm read_netpbm(const std::filesystem::path& path);
void write_netpbm(const std::filesystem::path& path, const Netpbm& img);

struct Batch {
  Tensor images;                     // (N, 3, H, W)
  std::vector<std::uint8_t> labels;  // N * H * W
  Tensor depth;                      // (N, 1, H, W)
  int size() const { return images.shape().n; }
};

Batch make_batch(const std::vector<Scene>& scenes,
                 const std::vector<std::size_t>& indices);
Batch make_batch(const std::vector<Scene>& scenes, std::size_t begin,
                 std::size_t end);

}  // namespace covert
