#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xpose/model.hpp"
#include "xpose/rng.hpp"

namespace xpose {

enum class AttackVariant { IFGSM, MIFGSM, DIM, TIM, SIM, PGN, GIFGSM };

AttackVariant attack_variant_from(const std::string& name);
std::string attack_variant_name(AttackVariant v);

// epsilon/alpha are in pixel units scaled to [0,1]; the conventional 16 and 4
// out of 255 map to 16/255 and 4/255. alpha defaults to epsilon/iters when
// step == 0.
struct AttackConfig {
  AttackVariant variant = AttackVariant::MIFGSM;
  float epsilon = 16.0f / 255.0f;
  int iters = 10;
  float step = 0.0f;  // 0 -> epsilon / iters
  float momentum = 1.0f;

  float dim_prob = 0.5f;    // DIM diversity probability p
  int tim_kernel = 7;       // TIM Gaussian kernel size k (odd)
  int sim_copies = 5;       // SIM scale copies m
  int pgn_samples = 20;     // PGN sample size N
  float pgn_delta = 0.5f;   // PGN balance coefficient
  float pgn_zeta = 3.0f;    // PGN neighborhood upper bound, in units of epsilon
  int gi_pre_iters = 5;     // GI-FGSM pre-convergence iterations
  float gi_factor = 10.0f;  // GI-FGSM global search factor (step multiplier)

  uint64_t seed = 0;

  float alpha() const { return step > 0.0f ? step : epsilon / float(iters); }
  void validate() const;  // throws ConfigError
};

// Mean-logit fusion of >= 1 models sharing an input spec.
struct EnsembleSpec {
  std::vector<const ModelGraph*> members;
  void validate() const;
  std::string id() const;  // member names joined with '+'
};

// Gradient of the mean cross-entropy of the fused (mean) logits w.r.t. x.
Tensor ensemble_gradient(const EnsembleSpec& models, const Tensor& x,
                         const std::vector<int>& labels);

// MI-FGSM backbone with per-variant gradient plugins. Non-targeted: ascends
// the cross-entropy of the true label. Per iteration:
//   ghat    = variant gradient at x_t
//   g_{t+1} = mu * g_t + ghat / ||ghat||_1   (per image; ||.||_1 = 0 keeps ghat)
//   x_{t+1} = clip_[0,1] clip_{Linf<=eps around x_clean}(x_t + alpha * sign(g))
Tensor craft(const EnsembleSpec& models, const Tensor& x_clean,
             const std::vector<int>& labels, const AttackConfig& cfg);
Tensor craft(const ModelGraph& model, const Tensor& x_clean,
             const std::vector<int>& labels, const AttackConfig& cfg);

// Normalized 2-D Gaussian kernel (size k, sigma = k/3), row-major k*k.
std::vector<float> gaussian_kernel(int k);

// DIM transform internals. r is drawn on a virtual canvas [S, ceil(1.1*S)];
// the content shrinks to round(S^2/r) via nearest neighbor and lands at a
// random offset in a zero S x S canvas. The adjoint routes gradients back
// through the resize/pad.
struct DimDraw {
  int r = 0, content = 0, oy = 0, ox = 0;
};
DimDraw dim_draw(Rng& rng, int size);
Tensor dim_transform(const Tensor& x, const DimDraw& d);
Tensor dim_transform_adjoint(const Tensor& dout, const DimDraw& d);

}  // namespace xpose
