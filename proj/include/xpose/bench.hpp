#pragma once

#include <string>
#include <vector>

#include "xpose/attack.hpp"
#include "xpose/dataset.hpp"
#include "xpose/model.hpp"
#include "xpose/xform.hpp"

namespace xpose {

struct TransferRow {
  std::string black_box;
  double baseline_rate = 0.0;     // success % on the untransformed inputs
  double transformed_rate = 0.0;  // success % after the transform
};

struct TransferReport {
  std::vector<std::string> white_boxes;  // empty for the clean protocol
  std::string attack;                    // attack name, or "clean"
  TransformSpec transform;
  std::string dataset_id;
  uint64_t seed = 0;
  int image_count = 0;
  std::vector<TransferRow> rows;
};

// 100 * |{i : argmax logits != label_i}| / |images|, over all images.
double success_rate(const ModelGraph& m, const Tensor& images,
                    const std::vector<int>& labels);

// No crafting: per model, misclassification on clean images vs on transformed
// clean images.
TransferReport clean_transform_protocol(const std::vector<const ModelGraph*>& zoo,
                                        const Dataset& eval, const TransformSpec& spec);

// Evaluation core shared by the protocols and the CLI (which caches AEs).
TransferReport evaluate_transfer(const std::vector<const ModelGraph*>& black_boxes,
                                 const Tensor& x_adv, const std::vector<int>& labels,
                                 const TransformSpec& spec, TransferReport meta);

// Craft once on the white box, evaluate raw and transformed AEs on every
// black box. White-box rows are never reported.
TransferReport single_model_protocol(const ModelGraph& white_box,
                                     const std::vector<const ModelGraph*>& black_boxes,
                                     const Dataset& eval, const AttackConfig& cfg,
                                     const TransformSpec& spec);

TransferReport ensemble_protocol(const EnsembleSpec& ensemble,
                                 const std::vector<const ModelGraph*>& black_boxes,
                                 const Dataset& eval, const AttackConfig& cfg,
                                 const TransformSpec& spec);

// max / mean of transformed_rate / baseline_rate over rows with a nonzero
// baseline.
struct RatioStats {
  double max_ratio = 0.0;
  double mean_ratio = 0.0;
  int cells = 0;
};
RatioStats transfer_ratios(const TransferReport& report);

struct SweepPoint {
  double angle_deg = 0.0;
  double rate = 0.0;
};
struct SweepCurve {
  std::string black_box;
  std::string white_box;
  std::string attack;
  std::vector<SweepPoint> points;  // angles ascending, [0, 360)
  int argmax_index = 0;            // ties break to the smallest angle
  std::string dataset_id;
  uint64_t seed = 0;
  int image_count = 0;
  int stride_deg = 10;
};

// Crafting happens once; rotation varies in stride_deg increments over a full
// turn. stride_deg must divide 360.
std::vector<SweepCurve> rotation_sweep(const ModelGraph& white_box,
                                       const std::vector<const ModelGraph*>& black_boxes,
                                       const Dataset& eval, const AttackConfig& cfg,
                                       int stride_deg = 10);
std::vector<SweepCurve> sweep_evaluate(const std::vector<const ModelGraph*>& black_boxes,
                                       const Tensor& x_adv, const std::vector<int>& labels,
                                       int stride_deg, std::vector<SweepCurve> meta_rows);

struct FeatureDiffReport {
  std::string layer;
  int k = 16;
  std::vector<int> channels;           // top-K indices, descending mean abs diff
  std::vector<double> mean_abs_diff;   // one per selected channel
  Tensor input_fail, input_success;    // the caller-selected pair
  Tensor grid_without, grid_with, grid_diff;  // [1, gh, gw, 1] grayscale grids
  std::string warning;                 // set when K was clamped
};

// Ranks the named layer's channels by mean absolute activation difference
// between the two inputs (stable descending sort, lower channel index first on
// ties) and renders the three grids. Inputs are single images.
FeatureDiffReport feature_diff(const ModelGraph& black_box, const Tensor& x_fail,
                               const Tensor& x_success, const std::string& layer,
                               int k = 16);

// Selection helper: per-channel mean |a-b| over all positions, stable
// descending order, first k indices.
std::vector<int> top_diff_channels(const Tensor& a, const Tensor& b, int k);

}  // namespace xpose
