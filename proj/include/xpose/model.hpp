#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "xpose/tensor.hpp"

namespace xpose {

struct Layer;

// Layer vocabulary for the toy classifiers. Conv/Dense weights live inside
// the layer; BatchNorm carries frozen inference statistics.
struct Conv2d {
  int out_ch = 0, kernel = 0, stride = 1, pad = 0;
  Tensor weight;  // [kh, kw, cin, cout]
  Tensor bias;    // [1, 1, 1, cout]
};
struct MaxPool {
  int k = 2, s = 2;
};
struct AvgPoolGlobal {};
struct ReLU {};
struct BatchNormInference {
  Tensor gamma, beta, running_mean, running_var;  // each [1, 1, 1, c]
  float eps = 1e-5f;
};
struct Dense {
  int out_dim = 0;
  Tensor weight;  // [1, 1, in, out]
  Tensor bias;    // [1, 1, 1, out]
};
struct Flatten {};
// Additive skip: out = in + branch(in). Branch must preserve shape.
struct Residual {
  std::vector<Layer> branch;
};

using LayerKind = std::variant<Conv2d, MaxPool, AvgPoolGlobal, ReLU,
                               BatchNormInference, Dense, Flatten, Residual>;

struct Layer {
  std::string name;
  LayerKind kind;
};

struct InputSpec {
  int h = 0, w = 0, c = 0, num_classes = 0;
  bool operator==(const InputSpec&) const = default;
};

// Training provenance recorded into checkpoints.
struct TrainStamp {
  uint64_t seed = 0;
  std::string dataset_id;
  float train_acc = 0.0f, test_acc = 0.0f;
};

struct ModelGraph {
  std::string name;
  InputSpec input_spec;
  std::vector<Layer> layers;  // names unique per graph
  std::optional<TrainStamp> stamp;
};

// Checks name uniqueness, parameter shapes and layer composition; throws
// ShapeError naming the offending layer.
void validate_model(const ModelGraph& m);
Shape layer_out_shape(const Layer& layer, const Shape& in);

// ---- forward / reverse-mode engine (explicit tape of layer applications) --

struct Tape;
struct TapeEntry {
  Tensor input;
  std::vector<int64_t> argmax;  // MaxPool: source index per output element
  std::unique_ptr<Tape> branch;  // Residual
  // BatchNorm: the moments this forward actually applied (batch moments while
  // training, running statistics otherwise). When they are batch moments the
  // backward differentiates through them.
  std::vector<float> bn_mean, bn_var;
  bool bn_batch_moments = false;
};
struct Tape {
  std::vector<TapeEntry> entries;
};

struct ForwardResult {
  Tensor logits;  // [b, 1, 1, num_classes]
  std::map<std::string, Tensor> activations;  // requested taps
};

// Pure function of (model, x, tap names). Unknown tap names raise ConfigError
// listing the valid layer names.
ForwardResult forward(const ModelGraph& m, const Tensor& x,
                      const std::vector<std::string>& tap_names = {});

// Engine pieces shared by the attacks and the trainer.
Tensor forward_with_tape(const ModelGraph& m, const Tensor& x, Tape& tape,
                         const std::vector<std::string>& tap_names = {},
                         std::map<std::string, Tensor>* taps_out = nullptr);
// Training-time forward: BatchNorm layers normalize with the current batch
// moments (gradients still treat them as constants) while the stored running
// statistics are EMA-updated with the given momentum, ready to freeze into
// inference form at save time.
Tensor forward_refresh_bn(ModelGraph& m, const Tensor& x, Tape& tape,
                          float bn_momentum);
// Walks the tape in reverse from dout (gradient w.r.t. the model output).
// When param_grads is non-null it must be empty; it is filled with one tensor
// per trainable parameter in graph order.
Tensor backward_with_tape(const ModelGraph& m, const Tape& tape,
                          const Tensor& dout, std::vector<Tensor>* param_grads);

// ---- losses ----------------------------------------------------------------

float cross_entropy_mean(const Tensor& logits, const std::vector<int>& labels);
// d(mean cross-entropy)/dlogits = (softmax - onehot) / b
Tensor cross_entropy_grad(const Tensor& logits, const std::vector<int>& labels);

// d(mean cross-entropy)/dx. Requires x.requires_grad.
Tensor backward_to_input(const ModelGraph& m, const Tensor& x,
                         const std::vector<int>& labels);
// One gradient per trainable parameter, in graph order.
std::vector<Tensor> backward_to_params(const ModelGraph& m, const Tensor& x,
                                       const std::vector<int>& labels);

// argmax class per image (first max wins)
std::vector<int> predict(const ModelGraph& m, const Tensor& x);

// ---- parameter enumeration --------------------------------------------------

struct ParamRef {
  std::string name;  // e.g. "conv1.weight", "res1.bn1.gamma"
  Tensor* tensor;
  bool trainable;  // BN running stats are buffers, not trainable
};
// All parameters and buffers in graph order (checkpoint blob order).
std::vector<ParamRef> model_params(ModelGraph& m);
std::vector<Tensor*> trainable_params(ModelGraph& m);

void check_labels(const std::vector<int>& labels, int num_classes, int batch);

}  // namespace xpose
