#pragma once

#include <optional>
#include <string>
#include <vector>

#include "xpose/config.hpp"

namespace xpose {

// Output tree layout under RunConfig::output_dir.
struct OutPaths {
  std::string root;
  explicit OutPaths(const std::string& out) : root(out) {}
  std::string data_dir() const { return root + "/data"; }
  std::string train_bin() const { return data_dir() + "/train.bin"; }
  std::string test_bin() const { return data_dir() + "/test.bin"; }
  std::string dataset_json() const { return data_dir() + "/dataset.json"; }
  std::string checkpoint(const std::string& model) const {
    return root + "/models/" + model + ".atlz";
  }
  std::string ae_cache(const std::string& wb_key, const std::string& attack) const {
    return root + "/aes/" + wb_key + "__" + attack + ".atae";
  }
  std::string reports_dir() const { return root + "/reports"; }
};

// Cached adversarial examples: magic "ATAE1" | u32-LE metadata length | JSON
// metadata | f32-LE image blob. Transforms re-apply without re-crafting.
struct AeCache {
  std::vector<std::string> white_boxes;
  std::string attack;
  std::string dataset_id;
  uint64_t seed = 0;
  Tensor x_adv;
  std::vector<int> labels;
};
void save_ae_cache(const std::string& path, const AeCache& cache);
AeCache load_ae_cache(const std::string& path);

// Subcommand bodies. Errors surface as ConfigError / PrereqError /
// NumericError; the CLI maps them to exit codes 1/2/3.
void cmd_gen_data(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg, const std::string& model_name = "");  // "" = all
void cmd_attack(const RunConfig& cfg, const std::vector<std::string>& white_boxes,
                const std::string& attack_name);
void cmd_eval_clean(const RunConfig& cfg, const TransformSpec& spec);
void cmd_eval(const RunConfig& cfg, const std::vector<std::string>& white_boxes,
              const std::string& attack_name, const TransformSpec& spec);
void cmd_sweep(const RunConfig& cfg, const std::string& white_box,
               const std::string& attack_name, int stride);
void cmd_featdiff(const RunConfig& cfg, const std::string& white_box,
                  const std::string& black_box, const std::string& attack_name,
                  const std::string& layer, int k, float angle_deg);

// Runs the whole pipeline (gen-data, train, craft, every configured protocol)
// into out_dir (defaults to cfg.output_dir). Deterministic: identical config
// and seed produce a byte-identical output tree.
void run_pipeline(const RunConfig& cfg, const std::string& out_dir = "");

// Dataset access with prerequisite checks (gen-data must have run).
Dataset load_eval_dataset(const RunConfig& cfg);
SplitDataset load_split_dataset(const RunConfig& cfg);

}  // namespace xpose
