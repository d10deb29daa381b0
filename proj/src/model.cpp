#include "xpose/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace xpose {

namespace {

const char* kind_name(const LayerKind& k) {
  switch (k.index()) {
    case 0: return "Conv2d";
    case 1: return "MaxPool";
    case 2: return "AvgPoolGlobal";
    case 3: return "ReLU";
    case 4: return "BatchNormInference";
    case 5: return "Dense";
    case 6: return "Flatten";
    default: return "Residual";
  }
}

[[noreturn]] void shape_fail(const Layer& layer, const std::string& what) {
  throw ShapeError("layer '" + layer.name + "' (" + kind_name(layer.kind) + "): " + what);
}

Shape conv_out_shape(const Layer& layer, const Conv2d& c, const Shape& in) {
  if (c.kernel <= 0 || c.stride <= 0 || c.pad < 0 || c.out_ch <= 0)
    shape_fail(layer, "kernel/stride/out_ch must be positive, pad non-negative");
  int oh = (in.h + 2 * c.pad - c.kernel) / c.stride + 1;
  int ow = (in.w + 2 * c.pad - c.kernel) / c.stride + 1;
  if (in.h + 2 * c.pad < c.kernel || in.w + 2 * c.pad < c.kernel || oh < 1 || ow < 1)
    shape_fail(layer, "input " + in.str() + " too small for kernel " + std::to_string(c.kernel));
  return Shape{in.b, oh, ow, c.out_ch};
}

}  // namespace

Shape layer_out_shape(const Layer& layer, const Shape& in) {
  const LayerKind& k = layer.kind;
  if (auto* c = std::get_if<Conv2d>(&k)) {
    Shape expect{c->kernel, c->kernel, in.c, c->out_ch};
    if (!(c->weight.shape() == expect))
      shape_fail(layer, "weight shape " + c->weight.shape().str() + " != expected " + expect.str());
    return conv_out_shape(layer, *c, in);
  }
  if (auto* p = std::get_if<MaxPool>(&k)) {
    if (p->k <= 0 || p->s <= 0) shape_fail(layer, "pool kernel/stride must be positive");
    if (in.h < p->k || in.w < p->k)
      shape_fail(layer, "input " + in.str() + " smaller than pool window " + std::to_string(p->k));
    return Shape{in.b, (in.h - p->k) / p->s + 1, (in.w - p->k) / p->s + 1, in.c};
  }
  if (std::holds_alternative<AvgPoolGlobal>(k)) return Shape{in.b, 1, 1, in.c};
  if (std::holds_alternative<ReLU>(k)) return in;
  if (auto* bn = std::get_if<BatchNormInference>(&k)) {
    if (bn->eps <= 0) shape_fail(layer, "eps must be > 0");
    Shape expect{1, 1, 1, in.c};
    if (!(bn->gamma.shape() == expect))
      shape_fail(layer, "gamma shape " + bn->gamma.shape().str() + " != channels " + expect.str());
    return in;
  }
  if (auto* d = std::get_if<Dense>(&k)) {
    if (in.h != 1 || in.w != 1)
      shape_fail(layer, "expects flattened input [b,1,1,n], got " + in.str());
    Shape expect{1, 1, in.c, d->out_dim};
    if (!(d->weight.shape() == expect))
      shape_fail(layer, "weight shape " + d->weight.shape().str() + " != expected " + expect.str());
    return Shape{in.b, 1, 1, d->out_dim};
  }
  if (std::holds_alternative<Flatten>(k)) return Shape{in.b, 1, 1, in.h * in.w * in.c};
  // Residual
  const auto& r = std::get<Residual>(k);
  Shape s = in;
  for (const Layer& sub : r.branch) s = layer_out_shape(sub, s);
  if (!(s == in))
    shape_fail(layer, "branch output " + s.str() + " does not match input " + in.str());
  return in;
}

static void collect_names(const std::vector<Layer>& layers, std::set<std::string>& seen,
                          const std::string& scope) {
  for (const Layer& l : layers) {
    std::string full = scope.empty() ? l.name : scope + "." + l.name;
    if (!seen.insert(full).second)
      throw ShapeError("duplicate layer name '" + full + "'");
    if (auto* r = std::get_if<Residual>(&l.kind)) collect_names(r->branch, seen, full);
  }
}

void validate_model(const ModelGraph& m) {
  if (m.layers.empty()) throw ShapeError("model '" + m.name + "' has no layers");
  std::set<std::string> seen;
  collect_names(m.layers, seen, "");
  Shape s{1, m.input_spec.h, m.input_spec.w, m.input_spec.c};
  for (const Layer& l : m.layers) s = layer_out_shape(l, s);
  if (s.h != 1 || s.w != 1 || s.c != m.input_spec.num_classes)
    throw ShapeError("model '" + m.name + "' emits " + s.str() + ", expected [b,1,1," +
                     std::to_string(m.input_spec.num_classes) + "]");
}

// ---- layer forward ----------------------------------------------------------

namespace {

Tensor conv_forward(const Conv2d& c, const Tensor& x) {
  const Shape in = x.shape();
  const int k = c.kernel, st = c.stride, p = c.pad;
  const int oh = (in.h + 2 * p - k) / st + 1;
  const int ow = (in.w + 2 * p - k) / st + 1;
  Tensor out(Shape{in.b, oh, ow, c.out_ch});
  const float* W = c.weight.data();
  const float* B = c.bias.data();
  std::vector<float> acc(size_t(c.out_ch));
  for (int n = 0; n < in.b; ++n)
    for (int oi = 0; oi < oh; ++oi)
      for (int oj = 0; oj < ow; ++oj) {
        for (int co = 0; co < c.out_ch; ++co) acc[size_t(co)] = B[co];
        for (int ki = 0; ki < k; ++ki) {
          int ii = oi * st - p + ki;
          if (ii < 0 || ii >= in.h) continue;
          for (int kj = 0; kj < k; ++kj) {
            int jj = oj * st - p + kj;
            if (jj < 0 || jj >= in.w) continue;
            const float* xrow = x.data() + x.index(n, ii, jj, 0);
            const float* wrow = W + ((int64_t(ki) * k + kj) * in.c) * c.out_ch;
            for (int ci = 0; ci < in.c; ++ci) {
              float xv = xrow[ci];
              const float* wr = wrow + int64_t(ci) * c.out_ch;
              for (int co = 0; co < c.out_ch; ++co) acc[size_t(co)] += xv * wr[co];
            }
          }
        }
        float* orow = out.data() + out.index(n, oi, oj, 0);
        for (int co = 0; co < c.out_ch; ++co) orow[co] = acc[size_t(co)];
      }
  return out;
}

// dgrads layout matches trainable order: [weight, bias]
Tensor conv_backward(const Conv2d& c, const Tensor& x, const Tensor& dout,
                     Tensor* dw, Tensor* db) {
  const Shape in = x.shape();
  const int k = c.kernel, st = c.stride, p = c.pad;
  const Shape os = dout.shape();
  Tensor dx(in);
  const float* W = c.weight.data();
  for (int n = 0; n < in.b; ++n)
    for (int oi = 0; oi < os.h; ++oi)
      for (int oj = 0; oj < os.w; ++oj) {
        const float* g = dout.data() + dout.index(n, oi, oj, 0);
        if (db) {
          float* dbp = db->data();
          for (int co = 0; co < c.out_ch; ++co) dbp[co] += g[co];
        }
        for (int ki = 0; ki < k; ++ki) {
          int ii = oi * st - p + ki;
          if (ii < 0 || ii >= in.h) continue;
          for (int kj = 0; kj < k; ++kj) {
            int jj = oj * st - p + kj;
            if (jj < 0 || jj >= in.w) continue;
            const float* xrow = x.data() + x.index(n, ii, jj, 0);
            float* dxrow = dx.data() + dx.index(n, ii, jj, 0);
            const int64_t wbase = ((int64_t(ki) * k + kj) * in.c) * c.out_ch;
            for (int ci = 0; ci < in.c; ++ci) {
              const float* wr = W + wbase + int64_t(ci) * c.out_ch;
              float xv = xrow[ci];
              float a = 0.0f;
              if (dw) {
                float* dwr = dw->data() + wbase + int64_t(ci) * c.out_ch;
                for (int co = 0; co < c.out_ch; ++co) {
                  a += wr[co] * g[co];
                  dwr[co] += xv * g[co];
                }
              } else {
                for (int co = 0; co < c.out_ch; ++co) a += wr[co] * g[co];
              }
              dxrow[ci] += a;
            }
          }
        }
      }
  return dx;
}

Tensor maxpool_forward(const MaxPool& p, const Tensor& x, std::vector<int64_t>& argmax) {
  const Shape in = x.shape();
  const int oh = (in.h - p.k) / p.s + 1;
  const int ow = (in.w - p.k) / p.s + 1;
  Tensor out(Shape{in.b, oh, ow, in.c});
  argmax.assign(out.size(), 0);
  for (int n = 0; n < in.b; ++n)
    for (int oi = 0; oi < oh; ++oi)
      for (int oj = 0; oj < ow; ++oj)
        for (int ci = 0; ci < in.c; ++ci) {
          float best = -std::numeric_limits<float>::infinity();
          int64_t best_idx = 0;
          for (int ki = 0; ki < p.k; ++ki)
            for (int kj = 0; kj < p.k; ++kj) {
              int64_t idx = x.index(n, oi * p.s + ki, oj * p.s + kj, ci);
              float v = x.data()[idx];
              if (v > best) {
                best = v;
                best_idx = idx;
              }
            }
          int64_t oidx = out.index(n, oi, oj, ci);
          out.data()[oidx] = best;
          argmax[size_t(oidx)] = best_idx;
        }
  return out;
}

Tensor maxpool_backward(const Tensor& x, const Tensor& dout,
                        const std::vector<int64_t>& argmax) {
  Tensor dx(x.shape());
  for (size_t i = 0; i < dout.size(); ++i) dx.data()[argmax[i]] += dout.data()[i];
  return dx;
}

Tensor gap_forward(const Tensor& x) {
  const Shape in = x.shape();
  Tensor out(Shape{in.b, 1, 1, in.c});
  const float inv = 1.0f / float(in.h * in.w);
  for (int n = 0; n < in.b; ++n) {
    float* o = out.data() + out.index(n, 0, 0, 0);
    for (int i = 0; i < in.h; ++i)
      for (int j = 0; j < in.w; ++j) {
        const float* row = x.data() + x.index(n, i, j, 0);
        for (int ci = 0; ci < in.c; ++ci) o[ci] += row[ci];
      }
    for (int ci = 0; ci < in.c; ++ci) o[ci] *= inv;
  }
  return out;
}

Tensor gap_backward(const Tensor& x, const Tensor& dout) {
  const Shape in = x.shape();
  Tensor dx(in);
  const float inv = 1.0f / float(in.h * in.w);
  for (int n = 0; n < in.b; ++n) {
    const float* g = dout.data() + dout.index(n, 0, 0, 0);
    for (int i = 0; i < in.h; ++i)
      for (int j = 0; j < in.w; ++j) {
        float* row = dx.data() + dx.index(n, i, j, 0);
        for (int ci = 0; ci < in.c; ++ci) row[ci] = g[ci] * inv;
      }
  }
  return dx;
}

Tensor bn_forward(const BatchNormInference& bn, const Tensor& x,
                  const std::vector<float>& mean, const std::vector<float>& var) {
  const Shape in = x.shape();
  Tensor out(in);
  std::vector<float> scale(size_t(in.c), 0.0f), shift(size_t(in.c), 0.0f);
  for (int ci = 0; ci < in.c; ++ci) {
    float inv = 1.0f / std::sqrt(var[size_t(ci)] + bn.eps);
    scale[size_t(ci)] = bn.gamma.data()[ci] * inv;
    shift[size_t(ci)] = bn.beta.data()[ci] - mean[size_t(ci)] * scale[size_t(ci)];
  }
  const int64_t pixels = int64_t(in.b) * in.h * in.w;
  for (int64_t pidx = 0; pidx < pixels; ++pidx) {
    const float* xr = x.data() + pidx * in.c;
    float* orow = out.data() + pidx * in.c;
    for (int ci = 0; ci < in.c; ++ci) orow[ci] = xr[ci] * scale[size_t(ci)] + shift[size_t(ci)];
  }
  return out;
}

Tensor bn_backward(const BatchNormInference& bn, const TapeEntry& e, const Tensor& dout,
                   Tensor* dgamma, Tensor* dbeta) {
  const Tensor& x = e.input;
  const Shape in = x.shape();
  Tensor dx(in);
  const int64_t pixels = int64_t(in.b) * in.h * in.w;
  for (int ci = 0; ci < in.c; ++ci) {
    const float inv = 1.0f / std::sqrt(e.bn_var[size_t(ci)] + bn.eps);
    const float scale = bn.gamma.data()[ci] * inv;
    const float mean = e.bn_mean[size_t(ci)];
    float dg = 0.0f, db = 0.0f;
    for (int64_t pidx = 0; pidx < pixels; ++pidx) {
      float g = dout.data()[pidx * in.c + ci];
      dg += g * (x.data()[pidx * in.c + ci] - mean) * inv;
      db += g;
    }
    if (e.bn_batch_moments) {
      // moments depend on x: dx = (g/sigma) * (dy - mean(dy) - xhat * mean(dy*xhat))
      const float inv_n = 1.0f / float(pixels);
      for (int64_t pidx = 0; pidx < pixels; ++pidx) {
        float g = dout.data()[pidx * in.c + ci];
        float xhat = (x.data()[pidx * in.c + ci] - mean) * inv;
        dx.data()[pidx * in.c + ci] = scale * (g - db * inv_n - xhat * dg * inv_n);
      }
    } else {
      for (int64_t pidx = 0; pidx < pixels; ++pidx)
        dx.data()[pidx * in.c + ci] = dout.data()[pidx * in.c + ci] * scale;
    }
    if (dgamma) {
      dgamma->data()[ci] += dg;
      dbeta->data()[ci] += db;
    }
  }
  return dx;
}

Tensor relu_forward(const Tensor& x) {
  Tensor out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] > 0.0f ? x.data()[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& dout) {
  Tensor dx(x.shape());
  for (size_t i = 0; i < x.size(); ++i) dx.data()[i] = x.data()[i] > 0.0f ? dout.data()[i] : 0.0f;
  return dx;
}

Tensor dense_forward(const Dense& d, const Tensor& x) {
  const Shape in = x.shape();
  Tensor out(Shape{in.b, 1, 1, d.out_dim});
  const float* W = d.weight.data();
  for (int n = 0; n < in.b; ++n) {
    const float* xr = x.data() + x.index(n, 0, 0, 0);
    float* o = out.data() + out.index(n, 0, 0, 0);
    for (int oc = 0; oc < d.out_dim; ++oc) o[oc] = d.bias.data()[oc];
    for (int ic = 0; ic < in.c; ++ic) {
      float xv = xr[ic];
      const float* wr = W + int64_t(ic) * d.out_dim;
      for (int oc = 0; oc < d.out_dim; ++oc) o[oc] += xv * wr[oc];
    }
  }
  return out;
}

Tensor dense_backward(const Dense& d, const Tensor& x, const Tensor& dout,
                      Tensor* dw, Tensor* db) {
  const Shape in = x.shape();
  Tensor dx(in);
  const float* W = d.weight.data();
  for (int n = 0; n < in.b; ++n) {
    const float* g = dout.data() + dout.index(n, 0, 0, 0);
    const float* xr = x.data() + x.index(n, 0, 0, 0);
    float* dxr = dx.data() + dx.index(n, 0, 0, 0);
    if (db) {
      float* dbp = db->data();
      for (int oc = 0; oc < d.out_dim; ++oc) dbp[oc] += g[oc];
    }
    for (int ic = 0; ic < in.c; ++ic) {
      const float* wr = W + int64_t(ic) * d.out_dim;
      float a = 0.0f;
      if (dw) {
        float* dwr = dw->data() + int64_t(ic) * d.out_dim;
        float xv = xr[ic];
        for (int oc = 0; oc < d.out_dim; ++oc) {
          a += wr[oc] * g[oc];
          dwr[oc] += xv * g[oc];
        }
      } else {
        for (int oc = 0; oc < d.out_dim; ++oc) a += wr[oc] * g[oc];
      }
      dxr[ic] = a;
    }
  }
  return dx;
}

Tensor flatten_forward(const Tensor& x) {
  const Shape in = x.shape();
  return Tensor(Shape{in.b, 1, 1, in.h * in.w * in.c}, x.vec());
}

struct BnRefresh {
  float momentum = 0.1f;
};

int count_trainable(const LayerKind& k);

int count_trainable_list(const std::vector<Layer>& layers) {
  int n = 0;
  for (const Layer& l : layers) n += count_trainable(l.kind);
  return n;
}

int count_trainable(const LayerKind& k) {
  if (std::holds_alternative<Conv2d>(k) || std::holds_alternative<Dense>(k)) return 2;
  if (std::holds_alternative<BatchNormInference>(k)) return 2;
  if (auto* r = std::get_if<Residual>(&k)) return count_trainable_list(r->branch);
  return 0;
}

// Batch moments per channel; EMA-updates the stored running statistics and
// returns the batch moments for use in this step's forward.
void refresh_bn_stats(BatchNormInference& bn, const Tensor& x, float momentum,
                      std::vector<float>& mean_out, std::vector<float>& var_out) {
  const Shape in = x.shape();
  const int64_t pixels = int64_t(in.b) * in.h * in.w;
  mean_out.assign(size_t(in.c), 0.0f);
  var_out.assign(size_t(in.c), 0.0f);
  for (int ci = 0; ci < in.c; ++ci) {
    double s = 0.0, s2 = 0.0;
    for (int64_t pidx = 0; pidx < pixels; ++pidx) {
      double v = x.data()[pidx * in.c + ci];
      s += v;
      s2 += v * v;
    }
    double mean = s / double(pixels);
    double var = std::max(0.0, s2 / double(pixels) - mean * mean);
    mean_out[size_t(ci)] = float(mean);
    var_out[size_t(ci)] = float(var);
    float& rm = bn.running_mean.data()[ci];
    float& rv = bn.running_var.data()[ci];
    rm = (1.0f - momentum) * rm + momentum * float(mean);
    rv = (1.0f - momentum) * rv + momentum * float(var);
  }
}

// Walks one layer list. `mutable_layers` is non-null only in BN-refresh mode.
Tensor walk_forward(const std::vector<Layer>& layers, std::vector<Layer>* mutable_layers,
                    const Tensor& x, Tape& tape, const std::string& scope,
                    const std::set<std::string>* wanted,
                    std::map<std::string, Tensor>* taps_out, const BnRefresh* refresh) {
  Tensor cur = x;
  tape.entries.clear();
  tape.entries.resize(layers.size());
  for (size_t li = 0; li < layers.size(); ++li) {
    const Layer& layer = layers[li];
    TapeEntry& e = tape.entries[li];
    layer_out_shape(layer, cur.shape());  // shape errors name the layer
    e.input = cur;
    Tensor out;
    if (auto* c = std::get_if<Conv2d>(&layer.kind)) {
      out = conv_forward(*c, cur);
    } else if (auto* p = std::get_if<MaxPool>(&layer.kind)) {
      out = maxpool_forward(*p, cur, e.argmax);
    } else if (std::holds_alternative<AvgPoolGlobal>(layer.kind)) {
      out = gap_forward(cur);
    } else if (std::holds_alternative<ReLU>(layer.kind)) {
      out = relu_forward(cur);
    } else if (std::holds_alternative<BatchNormInference>(layer.kind)) {
      if (refresh) {
        auto& bn = std::get<BatchNormInference>((*mutable_layers)[li].kind);
        refresh_bn_stats(bn, cur, refresh->momentum, e.bn_mean, e.bn_var);
        e.bn_batch_moments = true;
        out = bn_forward(bn, cur, e.bn_mean, e.bn_var);
      } else {
        const auto& bn = std::get<BatchNormInference>(layer.kind);
        e.bn_mean.assign(bn.running_mean.data(), bn.running_mean.data() + bn.running_mean.size());
        e.bn_var.assign(bn.running_var.data(), bn.running_var.data() + bn.running_var.size());
        out = bn_forward(bn, cur, e.bn_mean, e.bn_var);
      }
    } else if (auto* d = std::get_if<Dense>(&layer.kind)) {
      out = dense_forward(*d, cur);
    } else if (std::holds_alternative<Flatten>(layer.kind)) {
      out = flatten_forward(cur);
    } else {
      auto& r = std::get<Residual>(layer.kind);
      e.branch = std::make_unique<Tape>();
      std::vector<Layer>* mb = nullptr;
      if (refresh) mb = &std::get<Residual>((*mutable_layers)[li].kind).branch;
      Tensor bout = walk_forward(r.branch, mb, cur, *e.branch,
                                 scope.empty() ? layer.name : scope + "." + layer.name,
                                 wanted, taps_out, refresh);
      out = Tensor(cur.shape());
      for (size_t i = 0; i < out.size(); ++i)
        out.data()[i] = cur.data()[i] + bout.data()[i];
    }
    std::string full = scope.empty() ? layer.name : scope + "." + layer.name;
    if (wanted && taps_out && wanted->count(full)) (*taps_out)[full] = out;
    cur = std::move(out);
  }
  return cur;
}

Tensor walk_backward(const std::vector<Layer>& layers, const Tape& tape, const Tensor& dout,
                     std::vector<Tensor>* pgrads, int base) {
  // per-layer offsets into the trainable-parameter list
  std::vector<int> offs(layers.size());
  int n = base;
  for (size_t i = 0; i < layers.size(); ++i) {
    offs[i] = n;
    n += count_trainable(layers[i].kind);
  }
  Tensor d = dout;
  for (size_t ri = layers.size(); ri-- > 0;) {
    const Layer& layer = layers[ri];
    const TapeEntry& e = tape.entries[ri];
    if (auto* c = std::get_if<Conv2d>(&layer.kind)) {
      Tensor* dw = pgrads ? &(*pgrads)[size_t(offs[ri])] : nullptr;
      Tensor* db = pgrads ? &(*pgrads)[size_t(offs[ri]) + 1] : nullptr;
      d = conv_backward(*c, e.input, d, dw, db);
    } else if (std::holds_alternative<MaxPool>(layer.kind)) {
      d = maxpool_backward(e.input, d, e.argmax);
    } else if (std::holds_alternative<AvgPoolGlobal>(layer.kind)) {
      d = gap_backward(e.input, d);
    } else if (std::holds_alternative<ReLU>(layer.kind)) {
      d = relu_backward(e.input, d);
    } else if (auto* bn = std::get_if<BatchNormInference>(&layer.kind)) {
      Tensor* dg = pgrads ? &(*pgrads)[size_t(offs[ri])] : nullptr;
      Tensor* db = pgrads ? &(*pgrads)[size_t(offs[ri]) + 1] : nullptr;
      d = bn_backward(*bn, e, d, dg, db);
    } else if (auto* dn = std::get_if<Dense>(&layer.kind)) {
      Tensor* dw = pgrads ? &(*pgrads)[size_t(offs[ri])] : nullptr;
      Tensor* db = pgrads ? &(*pgrads)[size_t(offs[ri]) + 1] : nullptr;
      d = dense_backward(*dn, e.input, d, dw, db);
    } else if (std::holds_alternative<Flatten>(layer.kind)) {
      d = Tensor(e.input.shape(), d.vec());
    } else {
      auto& r = std::get<Residual>(layer.kind);
      Tensor dbranch = walk_backward(r.branch, *e.branch, d, pgrads, offs[ri]);
      for (size_t i = 0; i < d.size(); ++i) d.data()[i] += dbranch.data()[i];
    }
  }
  return d;
}

void collect_layer_names(const std::vector<Layer>& layers, const std::string& scope,
                         std::vector<std::string>& out) {
  for (const Layer& l : layers) {
    std::string full = scope.empty() ? l.name : scope + "." + l.name;
    out.push_back(full);
    if (auto* r = std::get_if<Residual>(&l.kind)) collect_layer_names(r->branch, full, out);
  }
}

void collect_trainable_shapes(const std::vector<Layer>& layers, std::vector<Shape>& out) {
  for (const Layer& l : layers) {
    if (auto* c = std::get_if<Conv2d>(&l.kind)) {
      out.push_back(c->weight.shape());
      out.push_back(c->bias.shape());
    } else if (auto* bn = std::get_if<BatchNormInference>(&l.kind)) {
      out.push_back(bn->gamma.shape());
      out.push_back(bn->beta.shape());
    } else if (auto* d = std::get_if<Dense>(&l.kind)) {
      out.push_back(d->weight.shape());
      out.push_back(d->bias.shape());
    } else if (auto* r = std::get_if<Residual>(&l.kind)) {
      collect_trainable_shapes(r->branch, out);
    }
  }
}

}  // namespace

Tensor forward_with_tape(const ModelGraph& m, const Tensor& x, Tape& tape,
                         const std::vector<std::string>& tap_names,
                         std::map<std::string, Tensor>* taps_out) {
  Shape expect{x.shape().b, m.input_spec.h, m.input_spec.w, m.input_spec.c};
  if (!(x.shape() == expect))
    throw ShapeError("model '" + m.name + "': input " + x.shape().str() +
                     " does not match input spec " + expect.str());
  std::set<std::string> wanted(tap_names.begin(), tap_names.end());
  if (!wanted.empty()) {
    std::vector<std::string> valid;
    collect_layer_names(m.layers, "", valid);
    for (const std::string& t : wanted) {
      if (std::find(valid.begin(), valid.end(), t) == valid.end()) {
        std::string list;
        for (const auto& v : valid) list += (list.empty() ? "" : ", ") + v;
        throw ConfigError("unknown tap '" + t + "'; valid layer names: " + list);
      }
    }
  }
  return walk_forward(m.layers, nullptr, x, tape, "",
                      wanted.empty() ? nullptr : &wanted, taps_out, nullptr);
}

Tensor forward_refresh_bn(ModelGraph& m, const Tensor& x, Tape& tape, float bn_momentum) {
  Shape expect{x.shape().b, m.input_spec.h, m.input_spec.w, m.input_spec.c};
  if (!(x.shape() == expect))
    throw ShapeError("model '" + m.name + "': input " + x.shape().str() +
                     " does not match input spec " + expect.str());
  BnRefresh r{bn_momentum};
  return walk_forward(m.layers, &m.layers, x, tape, "", nullptr, nullptr, &r);
}

ForwardResult forward(const ModelGraph& m, const Tensor& x,
                      const std::vector<std::string>& tap_names) {
  ForwardResult res;
  Tape tape;
  res.logits = forward_with_tape(m, x, tape, tap_names, &res.activations);
  return res;
}

Tensor backward_with_tape(const ModelGraph& m, const Tape& tape, const Tensor& dout,
                          std::vector<Tensor>* param_grads) {
  if (param_grads) {
    param_grads->clear();
    std::vector<Shape> shapes;
    collect_trainable_shapes(m.layers, shapes);
    for (const Shape& s : shapes) param_grads->push_back(Tensor(s));
  }
  return walk_backward(m.layers, tape, dout, param_grads, 0);
}

// ---- losses ----------------------------------------------------------------

void check_labels(const std::vector<int>& labels, int num_classes, int batch) {
  if (int(labels.size()) != batch)
    throw ConfigError("label count " + std::to_string(labels.size()) +
                      " != batch size " + std::to_string(batch));
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw ConfigError("label " + std::to_string(labels[i]) + " out of range [0," +
                        std::to_string(num_classes) + ") at index " + std::to_string(i));
}

float cross_entropy_mean(const Tensor& logits, const std::vector<int>& labels) {
  const Shape s = logits.shape();
  check_labels(labels, s.c, s.b);
  double total = 0.0;
  for (int n = 0; n < s.b; ++n) {
    const float* l = logits.data() + logits.index(n, 0, 0, 0);
    float mx = l[0];
    for (int k = 1; k < s.c; ++k) mx = std::max(mx, l[k]);
    float lse = 0.0f;
    for (int k = 0; k < s.c; ++k) lse += std::exp(l[k] - mx);
    lse = mx + std::log(lse);
    total += double(lse) - double(l[labels[size_t(n)]]);
  }
  return float(total / double(s.b));
}

Tensor cross_entropy_grad(const Tensor& logits, const std::vector<int>& labels) {
  const Shape s = logits.shape();
  check_labels(labels, s.c, s.b);
  Tensor d(s);
  const float invb = 1.0f / float(s.b);
  for (int n = 0; n < s.b; ++n) {
    const float* l = logits.data() + logits.index(n, 0, 0, 0);
    float* g = d.data() + d.index(n, 0, 0, 0);
    float mx = l[0];
    for (int k = 1; k < s.c; ++k) mx = std::max(mx, l[k]);
    float z = 0.0f;
    for (int k = 0; k < s.c; ++k) z += std::exp(l[k] - mx);
    for (int k = 0; k < s.c; ++k) g[k] = std::exp(l[k] - mx) / z * invb;
    g[labels[size_t(n)]] -= invb;
  }
  return d;
}

Tensor backward_to_input(const ModelGraph& m, const Tensor& x,
                         const std::vector<int>& labels) {
  if (!x.requires_grad)
    throw ConfigError("backward_to_input: x.requires_grad is not set");
  check_labels(labels, m.input_spec.num_classes, x.shape().b);
  Tape tape;
  Tensor logits = forward_with_tape(m, x, tape);
  float loss = cross_entropy_mean(logits, labels);
  if (!std::isfinite(loss)) throw NumericError("non-finite loss in backward_to_input");
  return backward_with_tape(m, tape, cross_entropy_grad(logits, labels), nullptr);
}

std::vector<Tensor> backward_to_params(const ModelGraph& m, const Tensor& x,
                                       const std::vector<int>& labels) {
  check_labels(labels, m.input_spec.num_classes, x.shape().b);
  Tape tape;
  Tensor logits = forward_with_tape(m, x, tape);
  float loss = cross_entropy_mean(logits, labels);
  if (!std::isfinite(loss)) throw NumericError("non-finite loss in backward_to_params");
  std::vector<Tensor> pgrads;
  backward_with_tape(m, tape, cross_entropy_grad(logits, labels), &pgrads);
  return pgrads;
}

std::vector<int> predict(const ModelGraph& m, const Tensor& x) {
  Tensor logits = forward(m, x).logits;
  const Shape s = logits.shape();
  std::vector<int> out(size_t(s.b));
  for (int n = 0; n < s.b; ++n) {
    const float* l = logits.data() + logits.index(n, 0, 0, 0);
    int best = 0;
    for (int k = 1; k < s.c; ++k)
      if (l[k] > l[best]) best = k;
    out[size_t(n)] = best;
  }
  return out;
}

// ---- parameter enumeration --------------------------------------------------

static void collect_params(std::vector<Layer>& layers, const std::string& scope,
                           std::vector<ParamRef>& out) {
  for (Layer& l : layers) {
    std::string full = scope.empty() ? l.name : scope + "." + l.name;
    if (auto* c = std::get_if<Conv2d>(&l.kind)) {
      out.push_back({full + ".weight", &c->weight, true});
      out.push_back({full + ".bias", &c->bias, true});
    } else if (auto* bn = std::get_if<BatchNormInference>(&l.kind)) {
      out.push_back({full + ".gamma", &bn->gamma, true});
      out.push_back({full + ".beta", &bn->beta, true});
      out.push_back({full + ".running_mean", &bn->running_mean, false});
      out.push_back({full + ".running_var", &bn->running_var, false});
    } else if (auto* d = std::get_if<Dense>(&l.kind)) {
      out.push_back({full + ".weight", &d->weight, true});
      out.push_back({full + ".bias", &d->bias, true});
    } else if (auto* r = std::get_if<Residual>(&l.kind)) {
      collect_params(r->branch, full, out);
    }
  }
}

std::vector<ParamRef> model_params(ModelGraph& m) {
  std::vector<ParamRef> out;
  collect_params(m.layers, "", out);
  return out;
}

std::vector<Tensor*> trainable_params(ModelGraph& m) {
  std::vector<Tensor*> out;
  for (auto& p : model_params(m))
    if (p.trainable) out.push_back(p.tensor);
  return out;
}

}  // namespace xpose
