#include "semsplat/depth.hpp"

#include <cmath>

#include "semsplat/common.hpp"
#include "semsplat/nn.hpp"

namespace semsplat {

void DepthCandidates::validate() const {
  if (values.size() < 2) throw ValidationError("DepthCandidates: need at least 2 candidates");
  if (!(near > 0) || !(near < far)) throw ValidationError("DepthCandidates: need 0 < near < far");
  if (!(near <= values.front()) || !(values.back() <= far))
    throw ValidationError("DepthCandidates: values outside [near, far]");
  for (size_t i = 1; i < values.size(); ++i)
    if (!(values[i] > values[i - 1]))
      throw ValidationError("DepthCandidates: values not strictly increasing");
}

DepthCandidates sample_candidates(double near, double far, int count) {
  if (!(near > 0) || !(near < far)) throw ValidationError("sample_candidates: need 0 < near < far");
  if (count < 2) throw ValidationError("sample_candidates: need L >= 2");
  DepthCandidates c;
  c.near = near;
  c.far = far;
  c.values.resize(static_cast<size_t>(count));
  double inv_near = 1.0 / near, inv_far = 1.0 / far;
  for (int m = 0; m < count; ++m) {
    // inverse depth linearly spaced from 1/near down to 1/far, so depth
    // increases with m
    double inv = inv_near + (inv_far - inv_near) * m / (count - 1);
    c.values[static_cast<size_t>(m)] = 1.0 / inv;
  }
  // pin the endpoints exactly despite inverse round-tripping
  c.values.front() = near;
  c.values.back() = far;
  c.validate();
  return c;
}

CostVolume build_cost_volume(const Tensor& features, const std::vector<CameraView>& cams,
                             const DepthCandidates& candidates, int ref_view) {
  candidates.validate();
  const int64_t N = features.dim(0), C = features.dim(1), H = features.dim(2), W = features.dim(3);
  if (N < 2) throw ValidationError("build_cost_volume: need at least 2 views");
  if (static_cast<int64_t>(cams.size()) != N)
    throw ValidationError("build_cost_volume: camera count mismatch");
  if (ref_view < 0 || ref_view >= N) throw ValidationError("build_cost_volume: bad ref_view");
  const int64_t L = candidates.count();

  Tensor ref({C, H, W});
  std::copy(features.data() + ref_view * C * H * W, features.data() + (ref_view + 1) * C * H * W,
            ref.data());

  CostVolume vol;
  vol.corr = Tensor({L, H, W});
  const double inv_sources = 1.0 / static_cast<double>(N - 1);
  parallel_for(L, [&](int64_t m) {
    double depth = candidates.values[static_cast<size_t>(m)];
    for (int64_t j = 0; j < N; ++j) {
      if (j == ref_view) continue;
      Tensor src({C, H, W});
      std::copy(features.data() + j * C * H * W, features.data() + (j + 1) * C * H * W, src.data());
      Tensor warped = warp_feature(src, cams[static_cast<size_t>(ref_view)],
                                   cams[static_cast<size_t>(j)], depth);
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          double dot = 0.0;
          for (int64_t c = 0; c < C; ++c) dot += warped.at(c, y, x) * ref.at(c, y, x);
          vol.corr.at(m, y, x) += dot / static_cast<double>(C) * inv_sources;
        }
    }
  });
  return vol;
}

Tensor refine_volume(const CostVolume& volume, const Tensor& ref_features,
                     const NetworkWeights& w) {
  const Tensor& v = volume.corr;
  if (v.dim(1) != ref_features.dim(1) || v.dim(2) != ref_features.dim(2))
    throw ValidationError("refine_volume: spatial shape mismatch");
  Tensor x = concat_channels(v, ref_features);
  Tensor e1 = leaky_relu(conv2d(x, w.get("unet.enc1.w"), w.get("unet.enc1.b"), 1));
  Tensor e2 = leaky_relu(conv2d(e1, w.get("unet.enc2.w"), w.get("unet.enc2.b"), 2));
  Tensor mid = leaky_relu(conv2d(e2, w.get("unet.mid.w"), w.get("unet.mid.b"), 1));
  Tensor up = bilinear_resize(mid, e1.dim(1), e1.dim(2));
  Tensor d1 = leaky_relu(conv2d(concat_channels(up, e1), w.get("unet.dec1.w"),
                                w.get("unet.dec1.b"), 1));
  Tensor out = conv2d(d1, w.get("unet.out.w"), w.get("unet.out.b"), 1);
  return add(v, out);
}

Tensor ncc_patch_features(const Tensor& image, int patch) {
  const int64_t H = image.dim(1), W = image.dim(2);
  const int r = patch / 2;
  Tensor gray({1, H, W});
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x)
      gray.at(0, y, x) = (image.at(0, y, x) + image.at(1, y, x) + image.at(2, y, x)) / 3.0;
  Tensor out({static_cast<int64_t>(patch) * patch, H, W});
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      double mean = 0.0;
      int c = 0;
      std::vector<double> vals(static_cast<size_t>(patch) * patch);
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx, ++c) {
          int64_t yy = std::clamp<int64_t>(y + dy, 0, H - 1);
          int64_t xx = std::clamp<int64_t>(x + dx, 0, W - 1);
          vals[static_cast<size_t>(c)] = gray.at(0, yy, xx);
          mean += vals[static_cast<size_t>(c)];
        }
      mean /= static_cast<double>(patch * patch);
      double norm = 0.0;
      for (auto& v : vals) {
        v -= mean;
        norm += v * v;
      }
      norm = std::sqrt(norm);
      if (norm > 1e-12)
        for (size_t i = 0; i < vals.size(); ++i)
          out.at(static_cast<int64_t>(i), y, x) = vals[i] / norm;
    }
  return out;
}

namespace {

Tensor to_gray(const Tensor& image) {
  const int64_t H = image.dim(1), W = image.dim(2);
  Tensor g({H, W});
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x)
      g.at(y, x) = (image.at(0, y, x) + image.at(1, y, x) + image.at(2, y, x)) / 3.0;
  return g;
}

// Patchwise NCC between two grayscale maps, clamped borders.
void local_ncc(const Tensor& a, const Tensor& b, int radius, Tensor& out) {
  const int64_t H = a.dim(0), W = a.dim(1);
  const double n = static_cast<double>((2 * radius + 1) * (2 * radius + 1));
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          int64_t yy = std::clamp<int64_t>(y + dy, 0, H - 1);
          int64_t xx = std::clamp<int64_t>(x + dx, 0, W - 1);
          double va = a.at(yy, xx), vb = b.at(yy, xx);
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      double cov = sab - sa * sb / n;
      double var_a = saa - sa * sa / n, var_b = sbb - sb * sb / n;
      double denom = std::sqrt(std::max(var_a, 0.0) * std::max(var_b, 0.0));
      out.at(y, x) = denom > 1e-10 ? cov / denom : 0.0;
    }
}

}  // namespace

DepthResult raw_feature_depth(const std::vector<Tensor>& images,
                              const std::vector<CameraView>& cams,
                              const DepthCandidates& candidates, int ref_view, int patch,
                              double gain) {
  if (images.size() < 2) throw ValidationError("raw_feature_depth: need at least 2 views");
  candidates.validate();
  if (ref_view < 0 || static_cast<size_t>(ref_view) >= images.size())
    throw ValidationError("raw_feature_depth: bad ref_view");
  const int64_t H = images[static_cast<size_t>(ref_view)].dim(1);
  const int64_t W = images[static_cast<size_t>(ref_view)].dim(2);
  const int64_t L = candidates.count();
  const int radius = patch / 2;
  Tensor ref_gray = to_gray(images[static_cast<size_t>(ref_view)]);
  // NCC is computed on the warped image rather than on warped precomputed
  // descriptors: interpolating descriptor channels biases the score toward
  // integer-pixel warps, while scoring the resampled image keeps the peak at
  // the true alignment.
  Tensor logits({L, H, W});
  const double inv_sources = 1.0 / static_cast<double>(images.size() - 1);
  parallel_for(L, [&](int64_t m) {
    double depth = candidates.values[static_cast<size_t>(m)];
    Tensor ncc({H, W});
    for (size_t j = 0; j < images.size(); ++j) {
      if (static_cast<int>(j) == ref_view) continue;
      Tensor warped = warp_feature(images[j], cams[static_cast<size_t>(ref_view)],
                                   cams[j], depth);
      local_ncc(ref_gray, to_gray(warped), radius, ncc);
      for (int64_t i = 0; i < ncc.numel(); ++i) logits[m * H * W + i] += gain * ncc[i] * inv_sources;
    }
  });
  return regress_depth(logits, candidates);
}

DepthResult regress_depth(const Tensor& logits, const DepthCandidates& candidates) {
  candidates.validate();
  const int64_t L = logits.dim(0), H = logits.dim(1), W = logits.dim(2);
  if (L != candidates.count()) throw ValidationError("regress_depth: candidate count mismatch");
  if (!logits.all_finite()) throw ValidationError("regress_depth: non-finite logits");
  DepthResult r;
  r.depth = Tensor({H, W});
  r.probs = Tensor({L, H, W});
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      double mx = -1e300;
      for (int64_t m = 0; m < L; ++m) mx = std::max(mx, logits.at(m, y, x));
      double sum = 0.0;
      for (int64_t m = 0; m < L; ++m) {
        double e = std::exp(logits.at(m, y, x) - mx);
        r.probs.at(m, y, x) = e;
        sum += e;
      }
      double expect = 0.0;
      for (int64_t m = 0; m < L; ++m) {
        r.probs.at(m, y, x) /= sum;
        expect += r.probs.at(m, y, x) * candidates.values[static_cast<size_t>(m)];
      }
      r.depth.at(y, x) = expect;
    }
  return r;
}

}  // namespace semsplat
