#include "xpose/attack.hpp"

#include <cmath>

#include "xpose/errors.hpp"
#include "xpose/rng.hpp"

namespace xpose {

AttackVariant attack_variant_from(const std::string& name) {
  if (name == "ifgsm") return AttackVariant::IFGSM;
  if (name == "mifgsm") return AttackVariant::MIFGSM;
  if (name == "dim") return AttackVariant::DIM;
  if (name == "tim") return AttackVariant::TIM;
  if (name == "sim") return AttackVariant::SIM;
  if (name == "pgn") return AttackVariant::PGN;
  if (name == "gifgsm") return AttackVariant::GIFGSM;
  throw ConfigError("unknown attack variant '" + name +
                    "' (want ifgsm|mifgsm|dim|tim|sim|pgn|gifgsm)");
}

std::string attack_variant_name(AttackVariant v) {
  switch (v) {
    case AttackVariant::IFGSM: return "ifgsm";
    case AttackVariant::MIFGSM: return "mifgsm";
    case AttackVariant::DIM: return "dim";
    case AttackVariant::TIM: return "tim";
    case AttackVariant::SIM: return "sim";
    case AttackVariant::PGN: return "pgn";
    case AttackVariant::GIFGSM: return "gifgsm";
  }
  return "mifgsm";
}

void AttackConfig::validate() const {
  // epsilon 0 is allowed as the degenerate no-perturbation case
  if (epsilon < 0.0f || epsilon > 1.0f) throw ConfigError("attack: epsilon must be in [0,1]");
  if (iters < 1) throw ConfigError("attack: iters must be >= 1");
  if (step < 0.0f) throw ConfigError("attack: step must be >= 0 (0 = epsilon/iters)");
  if (momentum < 0.0f) throw ConfigError("attack: momentum must be >= 0");
  if (dim_prob < 0.0f || dim_prob > 1.0f) throw ConfigError("attack: dim_prob must be in [0,1]");
  if (tim_kernel < 1 || tim_kernel % 2 == 0)
    throw ConfigError("attack: tim_kernel must be odd and >= 1");
  if (sim_copies < 1) throw ConfigError("attack: sim_copies must be >= 1");
  if (pgn_samples < 1) throw ConfigError("attack: pgn_samples must be >= 1");
  if (pgn_delta < 0.0f || pgn_delta > 1.0f)
    throw ConfigError("attack: pgn_delta must be in [0,1]");
  if (pgn_zeta <= 0.0f) throw ConfigError("attack: pgn_zeta must be > 0");
  if (gi_pre_iters < 0) throw ConfigError("attack: gi_pre_iters must be >= 0");
  if (gi_factor < 1.0f) throw ConfigError("attack: gi_factor must be >= 1");
}

void EnsembleSpec::validate() const {
  if (members.empty()) throw ConfigError("ensemble needs at least one model");
  for (const ModelGraph* m : members)
    if (!(m->input_spec == members[0]->input_spec))
      throw ConfigError("ensemble members disagree on input spec ('" + members[0]->name +
                        "' vs '" + m->name + "')");
}

std::string EnsembleSpec::id() const {
  std::string s;
  for (const ModelGraph* m : members) s += (s.empty() ? "" : "+") + m->name;
  return s;
}

Tensor ensemble_gradient(const EnsembleSpec& models, const Tensor& x,
                         const std::vector<int>& labels) {
  models.validate();
  if (models.members.size() == 1) {
    const ModelGraph& m = *models.members[0];
    Tape tape;
    Tensor logits = forward_with_tape(m, x, tape);
    return backward_with_tape(m, tape, cross_entropy_grad(logits, labels), nullptr);
  }
  const size_t count = models.members.size();
  std::vector<Tape> tapes(count);
  Tensor mean_logits;
  for (size_t i = 0; i < count; ++i) {
    Tensor logits = forward_with_tape(*models.members[i], x, tapes[i]);
    if (i == 0) {
      mean_logits = std::move(logits);
    } else {
      for (size_t k = 0; k < mean_logits.size(); ++k) mean_logits.vec()[k] += logits.vec()[k];
    }
  }
  const float inv = 1.0f / float(count);
  for (float& v : mean_logits.vec()) v *= inv;
  Tensor dlogits = cross_entropy_grad(mean_logits, labels);
  for (float& v : dlogits.vec()) v *= inv;  // d(mean logits)/d(member logits)
  Tensor grad;
  for (size_t i = 0; i < count; ++i) {
    Tensor g = backward_with_tape(*models.members[i], tapes[i], dlogits, nullptr);
    if (i == 0) {
      grad = std::move(g);
    } else {
      for (size_t k = 0; k < grad.size(); ++k) grad.vec()[k] += g.vec()[k];
    }
  }
  return grad;
}

DimDraw dim_draw(Rng& rng, int size) {
  DimDraw d;
  const int rmax = int(std::ceil(1.1 * double(size)));
  d.r = rng.uniform_int(size, rmax);
  d.content = std::max(1, int(std::lround(double(size) * size / double(d.r))));
  d.oy = rng.uniform_int(0, size - d.content);
  d.ox = rng.uniform_int(0, size - d.content);
  return d;
}

Tensor dim_transform(const Tensor& x, const DimDraw& d) {
  const Shape s = x.shape();
  Tensor out(s);
  for (int n = 0; n < s.b; ++n)
    for (int i = 0; i < d.content; ++i) {
      const int si = i * s.h / d.content;
      for (int j = 0; j < d.content; ++j) {
        const int sj = j * s.w / d.content;
        const float* src = x.data() + x.index(n, si, sj, 0);
        float* dst = out.data() + out.index(n, d.oy + i, d.ox + j, 0);
        for (int k = 0; k < s.c; ++k) dst[k] = src[k];
      }
    }
  return out;
}

Tensor dim_transform_adjoint(const Tensor& dout, const DimDraw& d) {
  const Shape s = dout.shape();
  Tensor dx(s);
  for (int n = 0; n < s.b; ++n)
    for (int i = 0; i < d.content; ++i) {
      const int si = i * s.h / d.content;
      for (int j = 0; j < d.content; ++j) {
        const int sj = j * s.w / d.content;
        const float* src = dout.data() + dout.index(n, d.oy + i, d.ox + j, 0);
        float* dst = dx.data() + dx.index(n, si, sj, 0);
        for (int k = 0; k < s.c; ++k) dst[k] += src[k];
      }
    }
  return dx;
}

std::vector<float> gaussian_kernel(int k) {
  if (k < 1 || k % 2 == 0) throw ConfigError("gaussian kernel size must be odd and >= 1");
  const double sigma = double(k) / 3.0;
  const int r = k / 2;
  std::vector<double> row(size_t(k), 0.0);
  for (int i = -r; i <= r; ++i) row[size_t(i + r)] = std::exp(-double(i * i) / (2.0 * sigma * sigma));
  std::vector<float> kern(size_t(k) * k);
  double sum = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) sum += row[size_t(i)] * row[size_t(j)];
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      kern[size_t(i) * k + j] = float(row[size_t(i)] * row[size_t(j)] / sum);
  return kern;
}

namespace {

// per-image L1 normalization; zero-norm images are left unchanged
void l1_normalize_per_image(Tensor& g) {
  const Shape s = g.shape();
  const int64_t stride = int64_t(s.h) * s.w * s.c;
  for (int n = 0; n < s.b; ++n) {
    float* p = g.data() + int64_t(n) * stride;
    double l1 = 0.0;
    for (int64_t i = 0; i < stride; ++i) l1 += std::fabs(p[i]);
    if (l1 > 0.0) {
      const float inv = float(1.0 / l1);
      for (int64_t i = 0; i < stride; ++i) p[i] *= inv;
    }
  }
}

void momentum_step(Tensor& g, const Tensor& ghat_normalized, float mu) {
  for (size_t i = 0; i < g.size(); ++i)
    g.vec()[i] = mu * g.vec()[i] + ghat_normalized.vec()[i];
}

void sign_update_clip(Tensor& x, const Tensor& g, const Tensor& x_clean, float alpha,
                      float eps) {
  for (size_t i = 0; i < x.size(); ++i) {
    float s = g.vec()[i] > 0.0f ? 1.0f : (g.vec()[i] < 0.0f ? -1.0f : 0.0f);
    float v = x.vec()[i] + alpha * s;
    const float lo = x_clean.vec()[i] - eps, hi = x_clean.vec()[i] + eps;
    v = std::min(hi, std::max(lo, v));
    x.vec()[i] = std::min(1.0f, std::max(0.0f, v));
  }
}

// depthwise same-padded convolution of the gradient with a k x k kernel
Tensor smooth_gradient(const Tensor& g, const std::vector<float>& kern, int k) {
  if (k == 1) return g;
  const Shape s = g.shape();
  Tensor out(s);
  const int r = k / 2;
  for (int n = 0; n < s.b; ++n)
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j)
        for (int ch = 0; ch < s.c; ++ch) {
          float acc = 0.0f;
          for (int ki = -r; ki <= r; ++ki) {
            const int ii = i + ki;
            if (ii < 0 || ii >= s.h) continue;
            for (int kj = -r; kj <= r; ++kj) {
              const int jj = j + kj;
              if (jj < 0 || jj >= s.w) continue;
              acc += kern[size_t(ki + r) * k + size_t(kj + r)] * g.at(n, ii, jj, ch);
            }
          }
          out.at(n, i, j, ch) = acc;
        }
  return out;
}

struct CraftContext {
  const EnsembleSpec& models;
  const std::vector<int>& labels;
  const AttackConfig& cfg;
  float alpha;
  Rng rng;
};

Tensor plain_gradient(CraftContext& ctx, const Tensor& x) {
  return ensemble_gradient(ctx.models, x, ctx.labels);
}

Tensor variant_gradient(CraftContext& ctx, const Tensor& x) {
  const AttackConfig& cfg = ctx.cfg;
  switch (cfg.variant) {
    case AttackVariant::DIM: {
      const double u = ctx.rng.next_unit();
      if (u < double(cfg.dim_prob)) {
        const DimDraw d = dim_draw(ctx.rng, x.shape().h);
        Tensor g = plain_gradient(ctx, dim_transform(x, d));
        return dim_transform_adjoint(g, d);
      }
      return plain_gradient(ctx, x);
    }
    case AttackVariant::TIM: {
      Tensor g = plain_gradient(ctx, x);
      return smooth_gradient(g, gaussian_kernel(cfg.tim_kernel), cfg.tim_kernel);
    }
    case AttackVariant::SIM: {
      Tensor acc;
      for (int i = 0; i < cfg.sim_copies; ++i) {
        Tensor xs = x;
        const float scale = 1.0f / float(1 << i);
        if (i > 0)
          for (float& v : xs.vec()) v *= scale;
        Tensor g = plain_gradient(ctx, xs);
        if (i == 0) {
          acc = std::move(g);
        } else {
          for (size_t k = 0; k < acc.size(); ++k) acc.vec()[k] += g.vec()[k];
        }
      }
      const float inv = 1.0f / float(cfg.sim_copies);
      for (float& v : acc.vec()) v *= inv;
      return acc;
    }
    case AttackVariant::PGN: {
      const float bound = cfg.pgn_zeta * cfg.epsilon;
      Tensor acc(x.shape());
      for (int s = 0; s < cfg.pgn_samples; ++s) {
        Tensor xp = x;
        for (float& v : xp.vec()) v += ctx.rng.uniform(-bound, bound);
        Tensor g1 = plain_gradient(ctx, xp);
        if (cfg.pgn_delta > 0.0f) {
          Tensor dir = g1;
          l1_normalize_per_image(dir);
          Tensor xpp = xp;
          for (size_t k = 0; k < xpp.size(); ++k) xpp.vec()[k] -= ctx.alpha * dir.vec()[k];
          Tensor g2 = plain_gradient(ctx, xpp);
          for (size_t k = 0; k < acc.size(); ++k)
            acc.vec()[k] += (1.0f - cfg.pgn_delta) * g1.vec()[k] + cfg.pgn_delta * g2.vec()[k];
        } else {
          for (size_t k = 0; k < acc.size(); ++k) acc.vec()[k] += g1.vec()[k];
        }
      }
      const float inv = 1.0f / float(cfg.pgn_samples);
      for (float& v : acc.vec()) v *= inv;
      return acc;
    }
    default:
      return plain_gradient(ctx, x);
  }
}

void check_gradient(const Tensor& g, int iteration) {
  if (!all_finite(g))
    throw NumericError("non-finite gradient at iteration " + std::to_string(iteration));
}

}  // namespace

Tensor craft(const EnsembleSpec& models, const Tensor& x_clean,
             const std::vector<int>& labels, const AttackConfig& cfg) {
  cfg.validate();
  models.validate();
  check_labels(labels, models.members[0]->input_spec.num_classes, x_clean.shape().b);
  for (float v : x_clean.vec())
    if (!(v >= 0.0f && v <= 1.0f))
      throw ConfigError("craft: clean images must lie in [0,1]");

  const float alpha = cfg.alpha();
  const float mu = cfg.variant == AttackVariant::IFGSM ? 0.0f : cfg.momentum;
  CraftContext ctx{models, labels, cfg, alpha, Rng(cfg.seed)};

  Tensor g(x_clean.shape());
  // GI-FGSM: pre-converge the momentum with enlarged steps, discard the
  // iterate, keep the accumulated direction as g0.
  if (cfg.variant == AttackVariant::GIFGSM && cfg.gi_pre_iters > 0) {
    Tensor x = x_clean;
    for (int t = 0; t < cfg.gi_pre_iters; ++t) {
      Tensor ghat = plain_gradient(ctx, x);
      check_gradient(ghat, t);
      l1_normalize_per_image(ghat);
      momentum_step(g, ghat, mu);
      sign_update_clip(x, g, x_clean, cfg.gi_factor * alpha, cfg.epsilon);
    }
  }

  Tensor x = x_clean;
  for (int t = 0; t < cfg.iters; ++t) {
    Tensor ghat = variant_gradient(ctx, x);
    check_gradient(ghat, t);
    l1_normalize_per_image(ghat);
    momentum_step(g, ghat, mu);
    sign_update_clip(x, g, x_clean, alpha, cfg.epsilon);
  }
  return x;
}

Tensor craft(const ModelGraph& model, const Tensor& x_clean,
             const std::vector<int>& labels, const AttackConfig& cfg) {
  EnsembleSpec single{{&model}};
  return craft(single, x_clean, labels, cfg);
}

}  // namespace xpose
