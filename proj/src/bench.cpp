#include "xpose/bench.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xpose/errors.hpp"

namespace xpose {

double success_rate(const ModelGraph& m, const Tensor& images,
                    const std::vector<int>& labels) {
  const int n = images.shape().b;
  if (n == 0) throw ConfigError("success_rate: empty image set");
  check_labels(labels, m.input_spec.num_classes, n);
  int wrong = 0;
  const int chunk = 64;
  const Shape s = images.shape();
  const int64_t stride = int64_t(s.h) * s.w * s.c;
  for (int start = 0; start < n; start += chunk) {
    const int count = std::min(chunk, n - start);
    Tensor batch(Shape{count, s.h, s.w, s.c});
    std::copy(images.data() + start * stride, images.data() + (start + count) * stride,
              batch.data());
    std::vector<int> pred = predict(m, batch);
    for (int i = 0; i < count; ++i)
      if (pred[size_t(i)] != labels[size_t(start + i)]) ++wrong;
  }
  return 100.0 * double(wrong) / double(n);
}

TransferReport clean_transform_protocol(const std::vector<const ModelGraph*>& zoo,
                                        const Dataset& eval, const TransformSpec& spec) {
  if (zoo.empty()) throw ConfigError("clean protocol: no models");
  TransferReport report;
  report.attack = "clean";
  report.transform = spec;
  report.dataset_id = eval.id;
  report.image_count = eval.images.shape().b;
  Tensor transformed = apply_transform(eval.images, spec);
  for (const ModelGraph* m : zoo) {
    TransferRow row;
    row.black_box = m->name;
    row.baseline_rate = success_rate(*m, eval.images, eval.labels);
    row.transformed_rate = success_rate(*m, transformed, eval.labels);
    report.rows.push_back(std::move(row));
  }
  return report;
}

TransferReport evaluate_transfer(const std::vector<const ModelGraph*>& black_boxes,
                                 const Tensor& x_adv, const std::vector<int>& labels,
                                 const TransformSpec& spec, TransferReport meta) {
  if (black_boxes.empty()) throw ConfigError("evaluate_transfer: no black boxes");
  meta.transform = spec;
  meta.image_count = x_adv.shape().b;
  meta.rows.clear();
  Tensor transformed = apply_transform(x_adv, spec);
  for (const ModelGraph* bb : black_boxes) {
    TransferRow row;
    row.black_box = bb->name;
    row.baseline_rate = success_rate(*bb, x_adv, labels);
    row.transformed_rate = success_rate(*bb, transformed, labels);
    meta.rows.push_back(std::move(row));
  }
  return meta;
}

static void check_disjoint(const std::vector<std::string>& white,
                           const std::vector<const ModelGraph*>& black_boxes) {
  for (const ModelGraph* bb : black_boxes)
    for (const std::string& w : white)
      if (bb->name == w)
        throw ConfigError("white-box model '" + w + "' also appears as a black box");
}

TransferReport single_model_protocol(const ModelGraph& white_box,
                                     const std::vector<const ModelGraph*>& black_boxes,
                                     const Dataset& eval, const AttackConfig& cfg,
                                     const TransformSpec& spec) {
  check_disjoint({white_box.name}, black_boxes);
  Tensor x_adv = craft(white_box, eval.images, eval.labels, cfg);
  TransferReport meta;
  meta.white_boxes = {white_box.name};
  meta.attack = attack_variant_name(cfg.variant);
  meta.dataset_id = eval.id;
  meta.seed = cfg.seed;
  return evaluate_transfer(black_boxes, x_adv, eval.labels, spec, std::move(meta));
}

TransferReport ensemble_protocol(const EnsembleSpec& ensemble,
                                 const std::vector<const ModelGraph*>& black_boxes,
                                 const Dataset& eval, const AttackConfig& cfg,
                                 const TransformSpec& spec) {
  ensemble.validate();
  std::vector<std::string> names;
  for (const ModelGraph* m : ensemble.members) names.push_back(m->name);
  check_disjoint(names, black_boxes);
  Tensor x_adv = craft(ensemble, eval.images, eval.labels, cfg);
  TransferReport meta;
  meta.white_boxes = names;
  meta.attack = attack_variant_name(cfg.variant);
  meta.dataset_id = eval.id;
  meta.seed = cfg.seed;
  return evaluate_transfer(black_boxes, x_adv, eval.labels, spec, std::move(meta));
}

RatioStats transfer_ratios(const TransferReport& report) {
  RatioStats st;
  double sum = 0.0;
  for (const TransferRow& row : report.rows) {
    if (row.baseline_rate <= 0.0) continue;
    double r = row.transformed_rate / row.baseline_rate;
    st.max_ratio = std::max(st.max_ratio, r);
    sum += r;
    ++st.cells;
  }
  st.mean_ratio = st.cells > 0 ? sum / double(st.cells) : 0.0;
  return st;
}

std::vector<SweepCurve> sweep_evaluate(const std::vector<const ModelGraph*>& black_boxes,
                                       const Tensor& x_adv, const std::vector<int>& labels,
                                       int stride_deg, std::vector<SweepCurve> meta_rows) {
  if (stride_deg <= 0 || 360 % stride_deg != 0)
    throw ConfigError("sweep stride " + std::to_string(stride_deg) + " does not divide 360");
  if (black_boxes.empty()) throw ConfigError("sweep: no black boxes");
  if (meta_rows.size() != black_boxes.size()) meta_rows.resize(black_boxes.size());
  std::vector<SweepCurve> curves = std::move(meta_rows);
  for (size_t bi = 0; bi < black_boxes.size(); ++bi) {
    curves[bi].black_box = black_boxes[bi]->name;
    curves[bi].stride_deg = stride_deg;
    curves[bi].image_count = x_adv.shape().b;
    curves[bi].points.clear();
  }
  for (int angle = 0; angle < 360; angle += stride_deg) {
    Tensor rotated = rotate(x_adv, float(angle));
    for (size_t bi = 0; bi < black_boxes.size(); ++bi)
      curves[bi].points.push_back(
          {double(angle), success_rate(*black_boxes[bi], rotated, labels)});
  }
  for (SweepCurve& c : curves) {
    int best = 0;
    for (int i = 1; i < int(c.points.size()); ++i)
      if (c.points[size_t(i)].rate > c.points[size_t(best)].rate) best = i;
    c.argmax_index = best;
  }
  return curves;
}

std::vector<SweepCurve> rotation_sweep(const ModelGraph& white_box,
                                       const std::vector<const ModelGraph*>& black_boxes,
                                       const Dataset& eval, const AttackConfig& cfg,
                                       int stride_deg) {
  check_disjoint({white_box.name}, black_boxes);
  Tensor x_adv = craft(white_box, eval.images, eval.labels, cfg);
  std::vector<SweepCurve> meta(black_boxes.size());
  for (SweepCurve& c : meta) {
    c.white_box = white_box.name;
    c.attack = attack_variant_name(cfg.variant);
    c.dataset_id = eval.id;
    c.seed = cfg.seed;
  }
  return sweep_evaluate(black_boxes, x_adv, eval.labels, stride_deg, std::move(meta));
}

std::vector<int> top_diff_channels(const Tensor& a, const Tensor& b, int k) {
  if (!(a.shape() == b.shape()))
    throw ConfigError("top_diff_channels: activation shapes differ: " + a.shape().str() +
                      " vs " + b.shape().str());
  const Shape s = a.shape();
  std::vector<double> diff(size_t(s.c), 0.0);
  const int64_t pixels = int64_t(s.b) * s.h * s.w;
  for (int64_t p = 0; p < pixels; ++p)
    for (int ch = 0; ch < s.c; ++ch)
      diff[size_t(ch)] += std::fabs(double(a.vec()[size_t(p * s.c + ch)]) -
                                    double(b.vec()[size_t(p * s.c + ch)]));
  std::vector<int> idx(size_t(s.c));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int x, int y) { return diff[size_t(x)] > diff[size_t(y)]; });
  idx.resize(size_t(std::min(k, s.c)));
  return idx;
}

namespace {

// Tiles the selected channels into a grayscale grid (4 columns, 1px white
// separators), rescaling values from [lo, hi] to [0, 1].
Tensor tile_grid(const Tensor& act, const std::vector<int>& channels, float lo, float hi) {
  const Shape s = act.shape();
  const int cols = std::min<int>(4, int(channels.size()));
  const int rows = (int(channels.size()) + cols - 1) / cols;
  const int gh = rows * (s.h + 1) + 1;
  const int gw = cols * (s.w + 1) + 1;
  Tensor grid = Tensor::full(Shape{1, gh, gw, 1}, 1.0f);
  const float range = hi - lo;
  for (int t = 0; t < int(channels.size()); ++t) {
    const int r = t / cols, c = t % cols;
    const int top = r * (s.h + 1) + 1, left = c * (s.w + 1) + 1;
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) {
        float v = act.at(0, i, j, channels[size_t(t)]);
        v = range > 0.0f ? (v - lo) / range : 0.0f;
        grid.at(0, top + i, left + j, 0) = std::min(1.0f, std::max(0.0f, v));
      }
  }
  return grid;
}

}  // namespace

FeatureDiffReport feature_diff(const ModelGraph& black_box, const Tensor& x_fail,
                               const Tensor& x_success, const std::string& layer, int k) {
  if (x_fail.shape().b != 1 || x_success.shape().b != 1)
    throw ConfigError("feature_diff expects single-image inputs");
  if (!(x_fail.shape() == x_success.shape()))
    throw ConfigError("feature_diff: input shapes differ");
  if (k < 1) throw ConfigError("feature_diff: k must be >= 1");

  Tensor act_fail = forward(black_box, x_fail, {layer}).activations.at(layer);
  Tensor act_succ = forward(black_box, x_success, {layer}).activations.at(layer);

  FeatureDiffReport report;
  report.layer = layer;
  report.k = k;
  const int channels = act_fail.shape().c;
  if (k > channels) {
    report.warning = "K=" + std::to_string(k) + " exceeds " + std::to_string(channels) +
                     " channels in layer '" + layer + "'; clamped";
  }
  report.channels = top_diff_channels(act_fail, act_succ, k);

  const Shape s = act_fail.shape();
  const int64_t pixels = int64_t(s.h) * s.w;
  Tensor diff(s);
  for (size_t i = 0; i < diff.size(); ++i)
    diff.vec()[i] = std::fabs(act_fail.vec()[i] - act_succ.vec()[i]);
  for (int ch : report.channels) {
    double sum = 0.0;
    for (int64_t p = 0; p < pixels; ++p) sum += diff.vec()[size_t(p * s.c + ch)];
    report.mean_abs_diff.push_back(sum / double(pixels));
  }

  float lo = 0.0f, hi = 0.0f;
  bool first = true;
  for (int ch : report.channels)
    for (int64_t p = 0; p < pixels; ++p) {
      float a = act_fail.vec()[size_t(p * s.c + ch)];
      float b = act_succ.vec()[size_t(p * s.c + ch)];
      if (first) {
        lo = std::min(a, b);
        hi = std::max(a, b);
        first = false;
      } else {
        lo = std::min(lo, std::min(a, b));
        hi = std::max(hi, std::max(a, b));
      }
    }
  float diff_hi = 0.0f;
  for (int ch : report.channels)
    for (int64_t p = 0; p < pixels; ++p)
      diff_hi = std::max(diff_hi, diff.vec()[size_t(p * s.c + ch)]);

  report.input_fail = x_fail;
  report.input_success = x_success;
  report.grid_without = tile_grid(act_fail, report.channels, lo, hi);
  report.grid_with = tile_grid(act_succ, report.channels, lo, hi);
  report.grid_diff = tile_grid(diff, report.channels, 0.0f, diff_hi);
  return report;
}

}  // namespace xpose
