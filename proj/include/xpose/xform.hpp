#pragma once

#include <string>

#include "xpose/tensor.hpp"

namespace xpose {

enum class TransformKind { Identity, Transpose, FlipLR, Rotate };

// Post-crafting input transform under test. Positive rotation angle is
// counter-clockwise ("left"); a 1-degree right rotation is 359.
struct TransformSpec {
  TransformKind kind = TransformKind::Identity;
  float angle_deg = 0.0f;  // Rotate only, in [0, 360)

  static TransformSpec identity() { return {}; }
  static TransformSpec transpose() { return {TransformKind::Transpose, 0.0f}; }
  static TransformSpec flip_lr() { return {TransformKind::FlipLR, 0.0f}; }
  static TransformSpec rotate(float deg) { return {TransformKind::Rotate, deg}; }

  // "identity" | "transpose" | "fliplr" | "rotate:<deg>"
  static TransformSpec parse(const std::string& s);
  std::string str() const;
  std::string file_tag() const;  // filename-safe form ("rotate1" etc.)
};

// out[n, j, i, k] = x[n, i, j, k]; shape [b, w, h, c]; bit-exact.
Tensor transpose_hw(const Tensor& x);

// out[n, i, j, k] = x[n, i, w-1-j, k]; bit-exact involution.
Tensor flip_lr(const Tensor& x);

// Inverse-mapped rotation about the image center ((h-1)/2, (w-1)/2) with
// bilinear interpolation and zero fill outside the frame; output clamped to
// [0, 1]. Grid-aligned source points (angle 0, or 90/180/270 on square
// images) reduce to exact index permutations.
Tensor rotate(const Tensor& x, float angle_deg);

Tensor apply_transform(const Tensor& x, const TransformSpec& spec);

}  // namespace xpose
