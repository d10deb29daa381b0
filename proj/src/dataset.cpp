#include "xpose/dataset.hpp"

#include <cmath>

#include "xpose/binary_io.hpp"
#include "xpose/errors.hpp"
#include "xpose/rng.hpp"

namespace xpose {

namespace {

// Hue per shape pair; both orientations of a pair share it, so orientation is
// the only cue separating twin classes.
constexpr float kHues[5][3] = {
    {1.00f, 0.15f, 0.15f},  // red
    {0.15f, 1.00f, 0.15f},  // green
    {0.25f, 0.40f, 1.00f},  // blue
    {1.00f, 0.95f, 0.20f},  // yellow
    {1.00f, 0.25f, 1.00f},  // magenta
};

// Orientation-0 glyph masks in box coordinates (i row, j col, side bs). All
// five are anisotropic so the transposed twin is a genuinely different class.
bool glyph_mask(int shape, int i, int j, int bs) {
  switch (shape) {
    case 0:  // horizontal bar
      return i >= 3 * bs / 8 && i < 5 * bs / 8;
    case 1:  // two horizontal bars
      return (i >= bs / 6 && i < 2 * bs / 6) || (i >= 4 * bs / 6 && i < 5 * bs / 6);
    case 2:  // T: top bar plus center stem
      return i < bs / 4 || (j >= 3 * bs / 8 && j < 5 * bs / 8);
    case 3: {  // horizontal ellipse
      double di = (i - (bs - 1) / 2.0) / (0.22 * bs);
      double dj = (j - (bs - 1) / 2.0) / (0.48 * bs);
      return di * di + dj * dj <= 1.0;
    }
    default:  // lying L: bottom bar plus left stub
      return i >= 3 * bs / 4 || j < bs / 4;
  }
}

void render_image(Tensor& images, int n, int label, int size, Rng& rng) {
  const int shape = label / 2;
  const int orient = label % 2;
  // Noisy mid-gray background and muted glyph contrast keep the trained
  // models' decision margins small enough to attack at desk-scale epsilons.
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j)
      for (int k = 0; k < 3; ++k) images.at(n, i, j, k) = rng.uniform(0.22f, 0.55f);
  const int bs_lo = std::max(8, 7 * size / 16);
  const int bs_hi = 3 * size / 4;
  const int bs = rng.uniform_int(bs_lo, bs_hi);
  const int top = rng.uniform_int(0, size - bs);
  const int left = rng.uniform_int(0, size - bs);
  for (int i = 0; i < bs; ++i)
    for (int j = 0; j < bs; ++j) {
      bool on = orient == 0 ? glyph_mask(shape, i, j, bs) : glyph_mask(shape, j, i, bs);
      if (!on) continue;
      float f = rng.uniform(0.45f, 0.63f);
      for (int k = 0; k < 3; ++k) {
        float v = kHues[shape][k] * f + rng.uniform(-0.08f, 0.08f);
        images.at(n, top + i, left + j, k) = std::min(1.0f, std::max(0.0f, v));
      }
    }
}

Dataset generate_split(int count, int size, uint64_t seed, const std::string& id) {
  Dataset ds;
  ds.num_classes = 10;
  ds.id = id;
  ds.images = Tensor(Shape{count, size, size, 3});
  ds.labels.resize(size_t(count));
  for (int i = 0; i < count; ++i) ds.labels[size_t(i)] = i % 10;
  Rng rng(seed);
  rng.shuffle(ds.labels);
  for (int i = 0; i < count; ++i) render_image(ds.images, i, ds.labels[size_t(i)], size, rng);
  return ds;
}

}  // namespace

SplitDataset generate_synthetic_shapes(const SynthConfig& cfg) {
  if (cfg.classes != 10)
    throw ConfigError("synthetic dataset has exactly 10 classes, got " +
                      std::to_string(cfg.classes));
  if (cfg.size < 16) throw ConfigError("synthetic image size must be >= 16");
  if (cfg.train_count <= 0 || cfg.test_count <= 0)
    throw ConfigError("synthetic dataset counts must be positive");
  if (cfg.train_count % 10 != 0 || cfg.test_count % 10 != 0)
    throw ConfigError("synthetic dataset counts must be multiples of 10 (label balance)");
  std::string id = "synthetic-s" + std::to_string(cfg.seed) + "-n" +
                   std::to_string(cfg.train_count) + "x" + std::to_string(cfg.test_count);
  SplitDataset out;
  Rng root(cfg.seed);
  out.train = generate_split(cfg.train_count, cfg.size, root.fork(1).next_u64(), id + "/train");
  out.test = generate_split(cfg.test_count, cfg.size, root.fork(2).next_u64(), id + "/test");
  return out;
}

Dataset load_cifar10_bin(const std::string& path) {
  const std::string bytes = read_file(path);
  constexpr size_t kRecord = 3073;
  if (bytes.empty() || bytes.size() % kRecord != 0)
    throw ConfigError("'" + path + "': length " + std::to_string(bytes.size()) +
                      " is not a positive multiple of 3073");
  const int n = int(bytes.size() / kRecord);
  Dataset ds;
  ds.num_classes = 10;
  ds.id = "cifar10:" + path;
  ds.images = Tensor(Shape{n, 32, 32, 3});
  ds.labels.resize(size_t(n));
  for (int r = 0; r < n; ++r) {
    const uint8_t* rec = reinterpret_cast<const uint8_t*>(bytes.data()) + size_t(r) * kRecord;
    if (rec[0] > 9)
      throw ConfigError("'" + path + "': record " + std::to_string(r) + " has label " +
                        std::to_string(int(rec[0])) + " > 9");
    ds.labels[size_t(r)] = int(rec[0]);
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j)
          ds.images.at(r, i, j, k) = float(rec[1 + k * 1024 + i * 32 + j]) / 255.0f;
  }
  return ds;
}

void save_cifar10_bin(const std::string& path, const Dataset& ds) {
  const Shape s = ds.images.shape();
  if (s.h != 32 || s.w != 32 || s.c != 3)
    throw ConfigError("cifar10-bin writer expects 32x32x3 images, got " + s.str());
  std::string bytes;
  bytes.reserve(size_t(s.b) * 3073);
  for (int r = 0; r < s.b; ++r) {
    int label = ds.labels[size_t(r)];
    if (label < 0 || label > 9)
      throw ConfigError("cifar10-bin writer: label " + std::to_string(label) + " out of 0-9");
    bytes.push_back(char(uint8_t(label)));
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
          float v = ds.images.at(r, i, j, k);
          int q = int(std::lround(std::min(1.0f, std::max(0.0f, v)) * 255.0f));
          bytes.push_back(char(uint8_t(q)));
        }
  }
  write_file_atomic(path, bytes);
}

Dataset select_images(const Dataset& ds, const std::vector<int>& indices) {
  const Shape s = ds.images.shape();
  Dataset out;
  out.num_classes = ds.num_classes;
  out.id = ds.id;
  out.images = Tensor(Shape{int(indices.size()), s.h, s.w, s.c});
  out.labels.resize(indices.size());
  const int64_t stride = int64_t(s.h) * s.w * s.c;
  for (size_t i = 0; i < indices.size(); ++i) {
    int src = indices[i];
    std::copy(ds.images.data() + src * stride, ds.images.data() + (src + 1) * stride,
              out.images.data() + int64_t(i) * stride);
    out.labels[i] = ds.labels[size_t(src)];
  }
  return out;
}

}  // namespace xpose
