#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xpose/dataset.hpp"
#include "xpose/model.hpp"

namespace xpose {

struct TrainConfig {
  int epochs = 5;
  int batch_size = 32;
  float learning_rate = 0.03f;
  float momentum = 0.9f;
  uint64_t seed = 1;
  // Adversarial training for defense-analog models: after a clean
  // warm-up epoch, each batch is augmented with I-FGSM(epsilon, steps)
  // examples before the step.
  struct AdvTrain {
    float epsilon = 2.0f / 255.0f;
    int steps = 2;
  };
  std::optional<AdvTrain> adv_train;

  void validate() const;
};

struct TrainMetrics {
  float train_acc = 0.0f;
  float test_acc = 0.0f;
  float final_loss = 0.0f;
};

// Four architecturally distinct toy CNNs (plain-conv, wide-conv,
// residual-style, VGG-style deep-narrow). Requires h, w >= 16.
std::vector<ModelGraph> build_zoo(const InputSpec& spec);
// Builds one zoo architecture by key: plain | wide | residual | deepnarrow.
ModelGraph build_arch(const std::string& arch, const InputSpec& spec);

// He-uniform init for conv/dense, identity init for BN. Deterministic.
void init_params(ModelGraph& m, uint64_t seed);

// SGD with momentum, step decay x0.1 at 80% of epochs. Re-initializes the
// parameters from cfg.seed so the result is a pure function of
// (architecture, dataset, cfg). BatchNorm trains with per-batch moments
// (EMA-refreshed running stats); the stats are already in inference form at
// save time.
TrainMetrics train(ModelGraph& m, const SplitDataset& data, const TrainConfig& cfg);

float accuracy(const ModelGraph& m, const Dataset& ds);

// Checkpoint file: magic "ATLZ1" | u32-LE metadata length | JSON metadata |
// concatenated f32-LE parameter blobs in graph order.
void save_checkpoint(const ModelGraph& m, const std::string& path);
ModelGraph load_checkpoint(const std::string& path);

}  // namespace xpose
