#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xpose/tensor.hpp"

namespace xpose {

struct Dataset {
  Tensor images;            // [n, h, w, c], values in [0, 1]
  std::vector<int> labels;  // one per image
  int num_classes = 10;
  std::string id;
};

struct SplitDataset {
  Dataset train, test;
};

// 32x32x3 stand-in corpus: 10 classes built from 5 glyph shapes x 2
// orientations, where class 2k+1 is the transposed twin of class 2k and each
// shape pair carries its own hue. Position, scale, brightness and background
// noise are randomized per image. Label-balanced; train/test come from
// disjoint seed streams.
struct SynthConfig {
  int train_count = 1280;
  int test_count = 256;
  int size = 32;
  int classes = 10;
  uint64_t seed = 7;
};
SplitDataset generate_synthetic_shapes(const SynthConfig& cfg);

// CIFAR-10 binary format: records of 3073 bytes, 1 label byte (0-9) then
// three 1024-byte planes (R, G, B), row-major 32x32. Values rescaled to
// [0, 1].
Dataset load_cifar10_bin(const std::string& path);
// Writes a dataset (32x32x3, labels 0-9) in the same format, quantizing to
// u8. temp-then-rename.
void save_cifar10_bin(const std::string& path, const Dataset& ds);

Dataset select_images(const Dataset& ds, const std::vector<int>& indices);

}  // namespace xpose
