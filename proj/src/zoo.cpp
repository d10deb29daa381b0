#include "xpose/zoo.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "xpose/attack.hpp"
#include "xpose/binary_io.hpp"
#include "xpose/errors.hpp"
#include "xpose/rng.hpp"

namespace xpose {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (epochs <= 0 || batch_size <= 0 || learning_rate < 0.0f || momentum < 0.0f)
    throw ConfigError("train config: epochs/batch_size must be positive, "
                      "learning_rate/momentum non-negative");
  if (adv_train && (adv_train->epsilon <= 0.0f || adv_train->steps <= 0))
    throw ConfigError("train config: adv_train epsilon/steps must be positive");
}

// ---- architectures ----------------------------------------------------------

namespace {

Layer conv(const std::string& name, int in_ch, int out_ch, int k, int s, int p) {
  Conv2d c;
  c.out_ch = out_ch;
  c.kernel = k;
  c.stride = s;
  c.pad = p;
  c.weight = Tensor(Shape{k, k, in_ch, out_ch});
  c.bias = Tensor(Shape{1, 1, 1, out_ch});
  return Layer{name, std::move(c)};
}

Layer bn(const std::string& name, int ch) {
  BatchNormInference b;
  b.gamma = Tensor::full(Shape{1, 1, 1, ch}, 1.0f);
  b.beta = Tensor(Shape{1, 1, 1, ch});
  b.running_mean = Tensor(Shape{1, 1, 1, ch});
  b.running_var = Tensor::full(Shape{1, 1, 1, ch}, 1.0f);
  return Layer{name, std::move(b)};
}

Layer relu(const std::string& name) { return Layer{name, ReLU{}}; }
Layer maxpool(const std::string& name, int k, int s) { return Layer{name, MaxPool{k, s}}; }
Layer gap(const std::string& name) { return Layer{name, AvgPoolGlobal{}}; }
Layer flatten(const std::string& name) { return Layer{name, Flatten{}}; }

Layer dense(const std::string& name, int in_dim, int out_dim) {
  Dense d;
  d.out_dim = out_dim;
  d.weight = Tensor(Shape{1, 1, in_dim, out_dim});
  d.bias = Tensor(Shape{1, 1, 1, out_dim});
  return Layer{name, std::move(d)};
}

void check_input(const InputSpec& spec) {
  if (spec.h < 16 || spec.w < 16)
    throw ConfigError("zoo input too small for the pooling pyramid: need h,w >= 16, got " +
                      std::to_string(spec.h) + "x" + std::to_string(spec.w));
  if (spec.c <= 0 || spec.num_classes <= 0)
    throw ConfigError("zoo input spec needs positive channels and classes");
}

}  // namespace

ModelGraph build_arch(const std::string& arch, const InputSpec& spec) {
  check_input(spec);
  ModelGraph m;
  m.name = arch;
  m.input_spec = spec;
  const int C = spec.num_classes;
  if (arch == "plain") {
    m.layers.push_back(conv("conv1", spec.c, 8, 3, 1, 1));
    m.layers.push_back(relu("relu1"));
    m.layers.push_back(maxpool("pool1", 2, 2));
    m.layers.push_back(conv("conv2", 8, 16, 3, 1, 1));
    m.layers.push_back(relu("relu2"));
    m.layers.push_back(maxpool("pool2", 2, 2));
    m.layers.push_back(flatten("flat"));
    m.layers.push_back(dense("fc", (spec.h / 4) * (spec.w / 4) * 16, C));
  } else if (arch == "wide") {
    m.layers.push_back(conv("conv1", spec.c, 16, 5, 1, 2));
    m.layers.push_back(bn("bn1", 16));
    m.layers.push_back(relu("relu1"));
    m.layers.push_back(maxpool("pool1", 4, 4));
    m.layers.push_back(conv("conv2", 16, 32, 3, 1, 1));
    m.layers.push_back(bn("bn2", 32));
    m.layers.push_back(relu("relu2"));
    m.layers.push_back(gap("gap"));
    m.layers.push_back(dense("fc", 32, C));
  } else if (arch == "residual") {
    m.layers.push_back(conv("conv1", spec.c, 12, 3, 1, 1));
    m.layers.push_back(bn("bn1", 12));
    m.layers.push_back(relu("relu1"));
    m.layers.push_back(maxpool("pool1", 2, 2));
    Residual res;
    res.branch.push_back(conv("conv1", 12, 12, 3, 1, 1));
    res.branch.push_back(bn("bn1", 12));
    res.branch.push_back(relu("relu1"));
    res.branch.push_back(conv("conv2", 12, 12, 3, 1, 1));
    m.layers.push_back(Layer{"res1", std::move(res)});
    m.layers.push_back(relu("relu2"));
    m.layers.push_back(conv("conv2", 12, 16, 3, 1, 1));
    m.layers.push_back(bn("bn2", 16));
    m.layers.push_back(relu("relu3"));
    m.layers.push_back(maxpool("pool2", 2, 2));
    m.layers.push_back(flatten("flat"));
    m.layers.push_back(dense("fc", (spec.h / 4) * (spec.w / 4) * 16, C));
  } else if (arch == "deepnarrow") {
    m.layers.push_back(conv("conv1", spec.c, 6, 3, 1, 1));
    m.layers.push_back(relu("relu1"));
    m.layers.push_back(conv("conv2", 6, 6, 3, 1, 1));
    m.layers.push_back(bn("bn1", 6));
    m.layers.push_back(relu("relu2"));
    m.layers.push_back(maxpool("pool1", 2, 2));
    m.layers.push_back(conv("conv3", 6, 10, 3, 1, 1));
    m.layers.push_back(relu("relu3"));
    m.layers.push_back(conv("conv4", 10, 10, 3, 1, 1));
    m.layers.push_back(bn("bn2", 10));
    m.layers.push_back(relu("relu4"));
    m.layers.push_back(maxpool("pool2", 2, 2));
    m.layers.push_back(flatten("flat"));
    m.layers.push_back(dense("fc", (spec.h / 4) * (spec.w / 4) * 10, C));
  } else {
    throw ConfigError("unknown zoo architecture '" + arch +
                      "' (want plain|wide|residual|deepnarrow)");
  }
  validate_model(m);
  return m;
}

std::vector<ModelGraph> build_zoo(const InputSpec& spec) {
  std::vector<ModelGraph> zoo;
  for (const char* arch : {"plain", "wide", "residual", "deepnarrow"})
    zoo.push_back(build_arch(arch, spec));
  return zoo;
}

static bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void init_params(ModelGraph& m, uint64_t seed) {
  Rng rng(seed);
  for (auto& p : model_params(m)) {
    const Shape s = p.tensor->shape();
    if (ends_with(p.name, ".weight")) {
      int fan_in = s.b * s.h * s.w;  // conv [k,k,cin,cout] and dense [1,1,in,out]
      float bound = std::sqrt(6.0f / float(fan_in));
      for (float& v : p.tensor->vec()) v = rng.uniform(-bound, bound);
    } else if (ends_with(p.name, ".gamma") || ends_with(p.name, ".running_var")) {
      for (float& v : p.tensor->vec()) v = 1.0f;
    } else {
      // bias, beta, running_mean
      for (float& v : p.tensor->vec()) v = 0.0f;
    }
  }
}

// ---- training ----------------------------------------------------------------

namespace {

std::pair<Tensor, std::vector<int>> gather_batch(const Dataset& ds,
                                                 const std::vector<int>& order,
                                                 size_t begin, size_t end) {
  std::vector<int> idx(order.begin() + long(begin), order.begin() + long(end));
  Dataset sel = select_images(ds, idx);
  return {std::move(sel.images), std::move(sel.labels)};
}

Tensor concat_batches(const Tensor& a, const Tensor& b) {
  Shape sa = a.shape();
  Tensor out(Shape{sa.b + b.shape().b, sa.h, sa.w, sa.c});
  std::copy(a.vec().begin(), a.vec().end(), out.vec().begin());
  std::copy(b.vec().begin(), b.vec().end(), out.vec().begin() + long(a.size()));
  return out;
}

}  // namespace

float accuracy(const ModelGraph& m, const Dataset& ds) {
  const int n = ds.images.shape().b;
  if (n == 0) throw ConfigError("accuracy: empty dataset");
  int correct = 0;
  const int chunk = 64;
  for (int start = 0; start < n; start += chunk) {
    std::vector<int> idx(size_t(std::min(chunk, n - start)));
    std::iota(idx.begin(), idx.end(), start);
    Dataset sel = select_images(ds, idx);
    std::vector<int> pred = predict(m, sel.images);
    for (size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == sel.labels[i]) ++correct;
  }
  return float(correct) / float(n);
}

TrainMetrics train(ModelGraph& m, const SplitDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  validate_model(m);
  const int n = data.train.images.shape().b;
  check_labels(data.train.labels, m.input_spec.num_classes, n);
  init_params(m, cfg.seed);

  std::vector<Tensor*> params = trainable_params(m);
  std::vector<Tensor> velocity;
  velocity.reserve(params.size());
  for (Tensor* p : params) velocity.push_back(Tensor(p->shape()));

  Rng shuffle_rng = Rng(cfg.seed).fork(17);
  std::vector<int> order(size_t(n), 0);
  std::iota(order.begin(), order.end(), 0);

  const int decay_at = std::max(1, cfg.epochs * 4 / 5);
  float last_loss = 0.0f;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const float lr = epoch >= decay_at ? cfg.learning_rate * 0.1f : cfg.learning_rate;
    shuffle_rng.shuffle(order);
    int batch_index = 0;
    for (size_t begin = 0; begin < size_t(n); begin += size_t(cfg.batch_size), ++batch_index) {
      size_t end = std::min(size_t(n), begin + size_t(cfg.batch_size));
      auto [xb, yb] = gather_batch(data.train, order, begin, end);
      // Adversarial augmentation: half a batch of I-FGSM examples, and only
      // after a clean warm-up epoch. Full-batch augmentation from step one
      // drives the optimizer into the flat-logit solution on this corpus.
      const bool augment = cfg.adv_train && (epoch >= 1 || cfg.epochs == 1);
      if (augment) {
        const int half = std::max(1, xb.shape().b / 2);
        Tensor xh(Shape{half, xb.shape().h, xb.shape().w, xb.shape().c});
        std::copy(xb.vec().begin(), xb.vec().begin() + long(xh.size()), xh.vec().begin());
        std::vector<int> yh(yb.begin(), yb.begin() + half);
        AttackConfig ac;
        ac.variant = AttackVariant::IFGSM;
        ac.epsilon = cfg.adv_train->epsilon;
        ac.iters = cfg.adv_train->steps;
        Tensor xadv = craft(m, xh, yh, ac);
        xb = concat_batches(xb, xadv);
        yb.insert(yb.end(), yh.begin(), yh.end());
      }
      Tape tape;
      Tensor logits = forward_refresh_bn(m, xb, tape, 0.1f);
      last_loss = cross_entropy_mean(logits, yb);
      if (!std::isfinite(last_loss))
        throw NumericError("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch) + " batch " + std::to_string(batch_index));
      std::vector<Tensor> grads;
      backward_with_tape(m, tape, cross_entropy_grad(logits, yb), &grads);
      for (size_t pi = 0; pi < params.size(); ++pi) {
        float* v = velocity[pi].data();
        float* w = params[pi]->data();
        const float* g = grads[pi].data();
        for (size_t i = 0; i < params[pi]->size(); ++i) {
          v[i] = cfg.momentum * v[i] + g[i];
          w[i] -= lr * v[i];
        }
      }
    }
  }

  TrainMetrics metrics;
  metrics.final_loss = last_loss;
  metrics.train_acc = accuracy(m, data.train);
  metrics.test_acc = accuracy(m, data.test);
  m.stamp = TrainStamp{cfg.seed, data.train.id, metrics.train_acc, metrics.test_acc};
  return metrics;
}

// ---- checkpoints --------------------------------------------------------------

namespace {

constexpr char kMagic[] = "ATLZ1";

json arch_to_json(const std::vector<Layer>& layers) {
  json arr = json::array();
  for (const Layer& l : layers) {
    json e;
    e["name"] = l.name;
    if (auto* c = std::get_if<Conv2d>(&l.kind)) {
      e["kind"] = "conv2d";
      e["out_ch"] = c->out_ch;
      e["kernel"] = c->kernel;
      e["stride"] = c->stride;
      e["pad"] = c->pad;
      e["in_ch"] = c->weight.shape().w;
    } else if (auto* p = std::get_if<MaxPool>(&l.kind)) {
      e["kind"] = "maxpool";
      e["k"] = p->k;
      e["s"] = p->s;
    } else if (std::holds_alternative<AvgPoolGlobal>(l.kind)) {
      e["kind"] = "avgpool_global";
    } else if (std::holds_alternative<ReLU>(l.kind)) {
      e["kind"] = "relu";
    } else if (auto* b = std::get_if<BatchNormInference>(&l.kind)) {
      e["kind"] = "batchnorm";
      e["channels"] = b->gamma.shape().c;
      e["eps"] = b->eps;
    } else if (auto* d = std::get_if<Dense>(&l.kind)) {
      e["kind"] = "dense";
      e["out_dim"] = d->out_dim;
      e["in_dim"] = d->weight.shape().w;
    } else if (std::holds_alternative<Flatten>(l.kind)) {
      e["kind"] = "flatten";
    } else {
      e["kind"] = "residual";
      e["branch"] = arch_to_json(std::get<Residual>(l.kind).branch);
    }
    arr.push_back(std::move(e));
  }
  return arr;
}

std::vector<Layer> arch_from_json(const json& arr) {
  if (!arr.is_array()) throw ArchMismatchError("checkpoint metadata: arch is not an array");
  std::vector<Layer> layers;
  for (const json& e : arr) {
    std::string kind = e.value("kind", "");
    std::string name = e.value("name", "");
    if (name.empty()) throw ArchMismatchError("checkpoint metadata: layer without a name");
    if (kind == "conv2d") {
      layers.push_back(conv(name, e.at("in_ch").get<int>(), e.at("out_ch").get<int>(),
                            e.at("kernel").get<int>(), e.at("stride").get<int>(),
                            e.at("pad").get<int>()));
    } else if (kind == "maxpool") {
      layers.push_back(maxpool(name, e.at("k").get<int>(), e.at("s").get<int>()));
    } else if (kind == "avgpool_global") {
      layers.push_back(gap(name));
    } else if (kind == "relu") {
      layers.push_back(relu(name));
    } else if (kind == "batchnorm") {
      Layer l = bn(name, e.at("channels").get<int>());
      std::get<BatchNormInference>(l.kind).eps = e.at("eps").get<float>();
      layers.push_back(std::move(l));
    } else if (kind == "dense") {
      layers.push_back(dense(name, e.at("in_dim").get<int>(), e.at("out_dim").get<int>()));
    } else if (kind == "flatten") {
      layers.push_back(flatten(name));
    } else if (kind == "residual") {
      Residual r;
      r.branch = arch_from_json(e.at("branch"));
      layers.push_back(Layer{name, std::move(r)});
    } else {
      throw ArchMismatchError("checkpoint metadata: unknown layer kind '" + kind + "'");
    }
  }
  return layers;
}

}  // namespace

void save_checkpoint(const ModelGraph& m, const std::string& path) {
  validate_model(m);
  ModelGraph mm = m;  // param enumeration wants mutable access
  auto params = model_params(mm);
  json meta;
  meta["name"] = m.name;
  meta["input_spec"] = {{"h", m.input_spec.h},
                        {"w", m.input_spec.w},
                        {"c", m.input_spec.c},
                        {"classes", m.input_spec.num_classes}};
  meta["arch"] = arch_to_json(m.layers);
  meta["seed"] = m.stamp ? m.stamp->seed : 0;
  meta["dataset"] = m.stamp ? m.stamp->dataset_id : "";
  meta["accuracy"] = {{"train", m.stamp ? m.stamp->train_acc : 0.0f},
                      {"test", m.stamp ? m.stamp->test_acc : 0.0f}};
  json plist = json::array();
  for (const auto& p : params)
    plist.push_back({{"name", p.name}, {"count", p.tensor->size()}});
  meta["params"] = std::move(plist);

  std::string bytes(kMagic, 5);
  const std::string meta_str = meta.dump();
  put_u32le(bytes, uint32_t(meta_str.size()));
  bytes += meta_str;
  for (const auto& p : params) put_f32le(bytes, p.tensor->data(), p.tensor->size());
  write_file_atomic(path, bytes);
}

ModelGraph load_checkpoint(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 5 || bytes.compare(0, 5, kMagic) != 0)
    throw BadMagicError("'" + path + "': bad magic (expected ATLZ1)");
  if (bytes.size() < 9) throw TruncatedBlobError("'" + path + "': truncated metadata length");
  const uint32_t meta_len = get_u32le(bytes, 5);
  if (bytes.size() < 9 + size_t(meta_len))
    throw TruncatedBlobError("'" + path + "': truncated metadata");
  json meta;
  try {
    meta = json::parse(bytes.substr(9, meta_len));
  } catch (const json::exception& e) {
    throw ArchMismatchError("'" + path + "': unparseable metadata: " + e.what());
  }

  ModelGraph m;
  try {
    m.name = meta.at("name").get<std::string>();
    const json& is = meta.at("input_spec");
    m.input_spec = InputSpec{is.at("h").get<int>(), is.at("w").get<int>(),
                             is.at("c").get<int>(), is.at("classes").get<int>()};
    m.layers = arch_from_json(meta.at("arch"));
    TrainStamp stamp;
    stamp.seed = meta.value("seed", uint64_t(0));
    stamp.dataset_id = meta.value("dataset", std::string());
    if (meta.contains("accuracy")) {
      stamp.train_acc = meta["accuracy"].value("train", 0.0f);
      stamp.test_acc = meta["accuracy"].value("test", 0.0f);
    }
    m.stamp = stamp;
  } catch (const json::exception& e) {
    throw ArchMismatchError("'" + path + "': metadata missing fields: " + e.what());
  }
  try {
    validate_model(m);
  } catch (const ShapeError& e) {
    throw ArchMismatchError("'" + path + "': inconsistent architecture: " + e.what());
  }

  auto params = model_params(m);
  if (meta.contains("params")) {
    const json& plist = meta["params"];
    if (plist.size() != params.size())
      throw ArchMismatchError("'" + path + "': metadata lists " +
                              std::to_string(plist.size()) + " parameters, architecture has " +
                              std::to_string(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
      if (plist[i].at("name").get<std::string>() != params[i].name ||
          plist[i].at("count").get<size_t>() != params[i].tensor->size())
        throw ArchMismatchError("'" + path + "': parameter mismatch at '" + params[i].name + "'");
    }
  }
  size_t off = 9 + meta_len;
  for (auto& p : params) {
    if (!get_f32le(bytes, off, p.tensor->data(), p.tensor->size()))
      throw TruncatedBlobError("'" + path + "': truncated blob for parameter '" + p.name + "'");
    off += p.tensor->size() * 4;
  }
  if (off != bytes.size())
    throw ArchMismatchError("'" + path + "': " + std::to_string(bytes.size() - off) +
                            " trailing bytes after parameter blobs");
  return m;
}

}  // namespace xpose
