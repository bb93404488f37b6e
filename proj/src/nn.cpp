#include "semsplat/nn.hpp"

#include <algorithm>
#include <cmath>

#include "semsplat/common.hpp"

namespace semsplat {

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride) {
  const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int64_t O = weight.dim(0), KH = weight.dim(2), KW = weight.dim(3);
  if (weight.dim(1) != C) throw ValidationError("conv2d: channel mismatch");
  const int64_t pad_y = KH / 2, pad_x = KW / 2;
  const int64_t OH = (H + stride - 1) / stride, OW = (W + stride - 1) / stride;
  Tensor out({O, OH, OW});
  for (int64_t o = 0; o < O; ++o) {
    double b = bias.numel() ? bias[o] : 0.0;
    double* orow = out.data() + o * OH * OW;
    for (int64_t i = 0; i < OH * OW; ++i) orow[i] = b;
    for (int64_t c = 0; c < C; ++c) {
      const double* xc = x.data() + c * H * W;
      for (int64_t ky = 0; ky < KH; ++ky) {
        for (int64_t kx = 0; kx < KW; ++kx) {
          double wv = weight.at(o, c, ky, kx);
          if (wv == 0.0) continue;
          for (int64_t oy = 0; oy < OH; ++oy) {
            int64_t iy = oy * stride - pad_y + ky;
            if (iy < 0 || iy >= H) continue;
            const double* xr = xc + iy * W;
            double* dst = orow + oy * OW;
            int64_t base = -pad_x + kx;
            // valid ox: 0 <= ox*stride + base < W
            int64_t ox0 = base < 0 ? (-base + stride - 1) / stride : 0;
            for (int64_t ox = ox0; ox < OW; ++ox) {
              int64_t ix = ox * stride + base;
              if (ix >= W) break;
              dst[ox] += wv * xr[ix];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor leaky_relu(Tensor x, double slope) {
  for (int64_t i = 0; i < x.numel(); ++i)
    if (x[i] < 0) x[i] *= slope;
  return x;
}

Tensor silu(Tensor x) {
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = x[i] / (1.0 + std::exp(-x[i]));
  return x;
}

Tensor sigmoid(Tensor x) {
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return x;
}

Tensor instance_norm(const Tensor& x, double eps) {
  const int64_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  Tensor out = x;
  for (int64_t c = 0; c < C; ++c) {
    double* p = out.data() + c * HW;
    double mean = 0.0;
    for (int64_t i = 0; i < HW; ++i) mean += p[i];
    mean /= static_cast<double>(HW);
    double var = 0.0;
    for (int64_t i = 0; i < HW; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= static_cast<double>(HW);
    double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t i = 0; i < HW; ++i) p[i] = (p[i] - mean) * inv;
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ValidationError("add: shape mismatch");
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw ValidationError("concat_channels: spatial mismatch");
  Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data(), a.data() + a.numel(), out.data());
  std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  return out;
}

Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w) {
  const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor out({C, out_h, out_w});
  for (int64_t oy = 0; oy < out_h; ++oy) {
    double sy = (oy + 0.5) * static_cast<double>(H) / static_cast<double>(out_h) - 0.5;
    int64_t y0 = static_cast<int64_t>(std::floor(sy));
    double ay = sy - static_cast<double>(y0);
    int64_t y0c = std::clamp<int64_t>(y0, 0, H - 1), y1c = std::clamp<int64_t>(y0 + 1, 0, H - 1);
    for (int64_t ox = 0; ox < out_w; ++ox) {
      double sx = (ox + 0.5) * static_cast<double>(W) / static_cast<double>(out_w) - 0.5;
      int64_t x0 = static_cast<int64_t>(std::floor(sx));
      double ax = sx - static_cast<double>(x0);
      int64_t x0c = std::clamp<int64_t>(x0, 0, W - 1), x1c = std::clamp<int64_t>(x0 + 1, 0, W - 1);
      for (int64_t c = 0; c < C; ++c) {
        double v = (1 - ay) * ((1 - ax) * x.at(c, y0c, x0c) + ax * x.at(c, y0c, x1c)) +
                   ay * ((1 - ax) * x.at(c, y1c, x0c) + ax * x.at(c, y1c, x1c));
        out.at(c, oy, ox) = v;
      }
    }
  }
  return out;
}

void register_res_block(NetworkWeights& w, const std::string& name, int64_t cin, int64_t cout,
                        int stride) {
  w.add(name + ".conv1.w", {cout, cin, 3, 3});
  w.add(name + ".conv1.b", {cout}, false);
  w.add(name + ".conv2.w", {cout, cout, 3, 3});
  w.add(name + ".conv2.b", {cout}, false);
  if (cin != cout || stride != 1) {
    w.add(name + ".skip.w", {cout, cin, 1, 1});
    w.add(name + ".skip.b", {cout}, false);
  }
}

Tensor res_block(const Tensor& x, const NetworkWeights& w, const std::string& name, int stride) {
  Tensor h = conv2d(x, w.get(name + ".conv1.w"), w.get(name + ".conv1.b"), stride);
  h = leaky_relu(instance_norm(h));
  h = conv2d(h, w.get(name + ".conv2.w"), w.get(name + ".conv2.b"), 1);
  h = instance_norm(h);
  Tensor skip = w.has(name + ".skip.w")
                    ? conv2d(x, w.get(name + ".skip.w"), w.get(name + ".skip.b"), stride)
                    : x;
  return leaky_relu(add(h, skip));
}

}  // namespace semsplat
