#include "xpose/xform.hpp"

#include <charconv>
#include <cmath>

#include "xpose/errors.hpp"

namespace xpose {

TransformSpec TransformSpec::parse(const std::string& s) {
  if (s == "identity") return identity();
  if (s == "transpose") return transpose();
  if (s == "fliplr") return flip_lr();
  if (s.rfind("rotate:", 0) == 0) {
    const char* first = s.c_str() + 7;
    const char* last = s.c_str() + s.size();
    float deg = 0.0f;
    auto [ptr, ec] = std::from_chars(first, last, deg);
    if (ec != std::errc{} || ptr != last || !std::isfinite(deg) || deg < 0.0f || deg >= 360.0f)
      throw ConfigError("bad rotation angle in transform '" + s + "' (want [0,360))");
    return rotate(deg);
  }
  throw ConfigError("unknown transform '" + s +
                    "' (want identity|transpose|fliplr|rotate:<deg>)");
}

static std::string format_angle(float deg) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof(buf), deg);
  return std::string(buf, r.ptr);
}

std::string TransformSpec::str() const {
  switch (kind) {
    case TransformKind::Identity: return "identity";
    case TransformKind::Transpose: return "transpose";
    case TransformKind::FlipLR: return "fliplr";
    case TransformKind::Rotate: return "rotate:" + format_angle(angle_deg);
  }
  return "identity";
}

std::string TransformSpec::file_tag() const {
  if (kind == TransformKind::Rotate) {
    std::string a = format_angle(angle_deg);
    for (char& ch : a)
      if (ch == '.') ch = 'p';
    return "rotate" + a;
  }
  return str();
}

Tensor transpose_hw(const Tensor& x) {
  const Shape s = x.shape();
  Tensor out(Shape{s.b, s.w, s.h, s.c});
  for (int n = 0; n < s.b; ++n)
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) {
        const float* src = x.data() + x.index(n, i, j, 0);
        float* dst = out.data() + out.index(n, j, i, 0);
        for (int k = 0; k < s.c; ++k) dst[k] = src[k];
      }
  return out;
}

Tensor flip_lr(const Tensor& x) {
  const Shape s = x.shape();
  Tensor out(s);
  for (int n = 0; n < s.b; ++n)
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) {
        const float* src = x.data() + x.index(n, i, s.w - 1 - j, 0);
        float* dst = out.data() + out.index(n, i, j, 0);
        for (int k = 0; k < s.c; ++k) dst[k] = src[k];
      }
  return out;
}

Tensor rotate(const Tensor& x, float angle_deg) {
  if (!std::isfinite(angle_deg)) throw ConfigError("rotate: non-finite angle");
  const Shape s = x.shape();
  Tensor out(s);
  const double theta = double(angle_deg) * 3.14159265358979323846 / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cy = (s.h - 1) / 2.0, cx = (s.w - 1) / 2.0;
  // Snap near-integral source coordinates so that grid-preserving angles
  // degenerate to exact permutations despite trig rounding.
  const double snap = 1e-5;
  for (int n = 0; n < s.b; ++n)
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) {
        const double oy = i - cy, ox = j - cx;
        double sy = oy * ct + ox * st + cy;
        double sx = -oy * st + ox * ct + cx;
        if (std::fabs(sy - std::round(sy)) < snap) sy = std::round(sy);
        if (std::fabs(sx - std::round(sx)) < snap) sx = std::round(sx);
        float* dst = out.data() + out.index(n, i, j, 0);
        const int i0 = int(std::floor(sy)), j0 = int(std::floor(sx));
        const double fy = sy - i0, fx = sx - j0;
        if (fy == 0.0 && fx == 0.0) {
          // grid point: pure copy, no arithmetic on the values
          if (i0 >= 0 && i0 < s.h && j0 >= 0 && j0 < s.w) {
            const float* src = x.data() + x.index(n, i0, j0, 0);
            for (int k = 0; k < s.c; ++k) dst[k] = src[k];
          }
          continue;
        }
        const int i1 = i0 + 1, j1 = j0 + 1;
        const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
        const double w10 = fy * (1 - fx), w11 = fy * fx;
        auto sample = [&](int ii, int jj, int k) -> double {
          if (ii < 0 || ii >= s.h || jj < 0 || jj >= s.w) return 0.0;
          return x.at(n, ii, jj, k);
        };
        for (int k = 0; k < s.c; ++k) {
          double v = w00 * sample(i0, j0, k) + w01 * sample(i0, j1, k) +
                     w10 * sample(i1, j0, k) + w11 * sample(i1, j1, k);
          dst[k] = float(std::min(1.0, std::max(0.0, v)));
        }
      }
  return out;
}

Tensor apply_transform(const Tensor& x, const TransformSpec& spec) {
  switch (spec.kind) {
    case TransformKind::Identity: return x;
    case TransformKind::Transpose: return transpose_hw(x);
    case TransformKind::FlipLR: return flip_lr(x);
    case TransformKind::Rotate: return rotate(x, spec.angle_deg);
  }
  return x;
}

}  // namespace xpose
