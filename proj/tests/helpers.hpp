#pragma once

#include <cmath>
#include <vector>

#include "xpose/dataset.hpp"
#include "xpose/model.hpp"
#include "xpose/rng.hpp"
#include "xpose/zoo.hpp"

namespace xpose::test {

inline Tensor random_image(Shape s, Rng& rng, float lo = 0.0f, float hi = 1.0f) {
  Tensor t(s);
  for (float& v : t.vec()) v = rng.uniform(lo, hi);
  return t;
}

inline std::vector<int> random_labels(int n, int classes, Rng& rng) {
  std::vector<int> out(size_t(n), 0);
  for (int& v : out) v = rng.uniform_int(0, classes - 1);
  return out;
}

// double-precision cross-entropy reduction over the model's float logits;
// the finite-difference oracle uses this to keep quantization noise down
inline double loss_double(const ModelGraph& m, const Tensor& x,
                          const std::vector<int>& labels) {
  Tensor logits = forward(m, x).logits;
  const Shape s = logits.shape();
  double total = 0.0;
  for (int n = 0; n < s.b; ++n) {
    const float* l = logits.data() + logits.index(n, 0, 0, 0);
    double mx = l[0];
    for (int k = 1; k < s.c; ++k) mx = std::max(mx, double(l[k]));
    double z = 0.0;
    for (int k = 0; k < s.c; ++k) z += std::exp(double(l[k]) - mx);
    total += mx + std::log(z) - double(l[labels[size_t(n)]]);
  }
  return total / double(s.b);
}

// central finite differences w.r.t. the input, step h
inline Tensor fd_input_grad(const ModelGraph& m, const Tensor& x,
                            const std::vector<int>& labels, double h) {
  Tensor g(x.shape());
  Tensor xp = x;
  for (size_t i = 0; i < x.size(); ++i) {
    const float orig = xp.vec()[i];
    xp.vec()[i] = float(orig + h);
    double up = loss_double(m, xp, labels);
    xp.vec()[i] = float(orig - h);
    double dn = loss_double(m, xp, labels);
    xp.vec()[i] = orig;
    g.vec()[i] = float((up - dn) / (2.0 * h));
  }
  return g;
}

// central finite differences for every trainable parameter, in graph order
inline std::vector<Tensor> fd_param_grads(ModelGraph& m, const Tensor& x,
                                          const std::vector<int>& labels, double h) {
  std::vector<Tensor> out;
  for (Tensor* p : trainable_params(m)) {
    Tensor g(p->shape());
    for (size_t i = 0; i < p->size(); ++i) {
      const float orig = p->vec()[i];
      p->vec()[i] = float(orig + h);
      double up = loss_double(m, x, labels);
      p->vec()[i] = float(orig - h);
      double dn = loss_double(m, x, labels);
      p->vec()[i] = orig;
      g.vec()[i] = float((up - dn) / (2.0 * h));
    }
    out.push_back(std::move(g));
  }
  return out;
}

// max |a-f| relative to the gradient scale
inline double max_rel_err(const Tensor& analytic, const Tensor& fd) {
  double scale = std::max({double(max_abs(analytic)), double(max_abs(fd)), 1e-6});
  return double(max_abs_diff(analytic, fd)) / scale;
}

// Central differences are only a valid oracle away from ReLU/MaxPool kinks:
// a kink inside the +-h window blends the two one-sided slopes. These margins
// measure how close the forward pass comes to a kink so callers can reject
// (net, input) draws whose margins are inside the perturbation radius.
struct KinkMargins {
  double relu = 1e30;  // min |pre-activation| over every ReLU input
  double pool = 1e30;  // min (top1 - top2) over pool windows with top1 > 0
};

namespace detail {

inline void pool_window_margin(const MaxPool& p, const Tensor& in, KinkMargins& km) {
  const Shape s = in.shape();
  const int oh = (s.h - p.k) / p.s + 1, ow = (s.w - p.k) / p.s + 1;
  for (int n = 0; n < s.b; ++n)
    for (int oi = 0; oi < oh; ++oi)
      for (int oj = 0; oj < ow; ++oj)
        for (int c = 0; c < s.c; ++c) {
          float top1 = -1e30f, top2 = -1e30f;
          for (int ki = 0; ki < p.k; ++ki)
            for (int kj = 0; kj < p.k; ++kj) {
              float v = in.at(n, oi * p.s + ki, oj * p.s + kj, c);
              if (v > top1) {
                top2 = top1;
                top1 = v;
              } else if (v > top2) {
                top2 = v;
              }
            }
          // exact zero ties are dead relu cells with zero slope on both sides;
          // every other window contributes its runner-up gap
          if (!(top1 == 0.0f && top2 == 0.0f))
            km.pool = std::min(km.pool, double(top1) - double(top2));
        }
}

inline void kink_margins_walk(const std::vector<Layer>& layers, const Tape& tape,
                              KinkMargins& km) {
  for (size_t i = 0; i < layers.size(); ++i) {
    const TapeEntry& e = tape.entries[i];
    if (std::holds_alternative<ReLU>(layers[i].kind)) {
      for (float v : e.input.vec()) km.relu = std::min(km.relu, double(std::fabs(v)));
    } else if (auto* p = std::get_if<MaxPool>(&layers[i].kind)) {
      pool_window_margin(*p, e.input, km);
    } else if (auto* r = std::get_if<Residual>(&layers[i].kind)) {
      kink_margins_walk(r->branch, *e.branch, km);
    }
  }
}

}  // namespace detail

inline KinkMargins kink_margins(const ModelGraph& m, const Tensor& x) {
  Tape tape;
  forward_with_tape(m, x, tape);
  KinkMargins km;
  detail::kink_margins_walk(m.layers, tape, km);
  return km;
}

// Worst per-tensor relative error across a parameter gradient set. Tensors
// whose own gradient scale sits below 5% of the net-wide scale are measured
// against that shared floor; comparing FD noise against a vanishing
// per-tensor scale says nothing about correctness, while a genuinely wrong
// small tensor still shows up at rel ~ its error / floor.
inline double max_rel_err_set(const std::vector<Tensor>& analytic,
                              const std::vector<Tensor>& fd) {
  double global = 1e-6;
  for (size_t i = 0; i < analytic.size(); ++i)
    global = std::max({global, double(max_abs(analytic[i])), double(max_abs(fd[i]))});
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    double scale = std::max({double(max_abs(analytic[i])), double(max_abs(fd[i])),
                             0.05 * global});
    worst = std::max(worst, double(max_abs_diff(analytic[i], fd[i])) / scale);
  }
  return worst;
}

// small synthetic corpus shared by the attack/bench tests
inline const SplitDataset& tiny_dataset() {
  static SplitDataset ds = [] {
    SynthConfig cfg;
    cfg.train_count = 640;
    cfg.test_count = 160;
    cfg.seed = 99;
    return generate_synthetic_shapes(cfg);
  }();
  return ds;
}

// briefly trained plain model, memoized per test binary
inline const ModelGraph& tiny_trained_model() {
  static ModelGraph m = [] {
    ModelGraph g = build_arch("plain", InputSpec{32, 32, 3, 10});
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 32;
    tc.seed = 5;
    train(g, tiny_dataset(), tc);
    return g;
  }();
  return m;
}

}  // namespace xpose::test
