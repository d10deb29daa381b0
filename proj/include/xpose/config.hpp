#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xpose/attack.hpp"
#include "xpose/dataset.hpp"
#include "xpose/xform.hpp"
#include "xpose/zoo.hpp"

namespace xpose {

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | cifar10-bin
  std::string path;                // cifar10-bin: directory with train.bin/test.bin
  int size = 32;
  int classes = 10;
  int train_count = 1280;
  int test_count = 256;
  uint64_t seed = 7;
};

struct ZooModelConfig {
  std::string name;
  std::string arch;  // plain | wide | residual | deepnarrow
  std::optional<TrainConfig::AdvTrain> adv_train;
};

struct ZooConfig {
  TrainConfig train;
  std::vector<ZooModelConfig> models;
};

struct NamedAttack {
  std::string name;
  AttackConfig cfg;
};

struct ProtocolConfig {
  std::string kind;  // clean | single | ensemble | sweep | featdiff
  TransformSpec transform;
  std::string whitebox;               // single, sweep, featdiff
  std::vector<std::string> ensemble;  // ensemble
  std::string attack;                 // all crafting protocols
  int stride = 10;                    // sweep
  std::string blackbox;               // featdiff
  std::string layer;                  // featdiff
  int k = 16;                         // featdiff
  float angle = 1.0f;                 // featdiff rotation, degrees CCW
};

struct RunConfig {
  DatasetConfig dataset;
  ZooConfig zoo;
  std::vector<NamedAttack> attacks;
  std::vector<ProtocolConfig> protocols;
  std::string output_dir = "out";

  const NamedAttack& find_attack(const std::string& name) const;
  const ZooModelConfig& find_model(const std::string& name) const;
};

// Parses + schema-validates; unknown keys are rejected and errors name the
// JSON pointer. XPOSE_SEED, when set, overrides every configured seed.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

// Seed derivation used by the XPOSE_SEED override.
void override_seeds(RunConfig& cfg, uint64_t master_seed);

}  // namespace xpose
