#include "semsplat/pipeline.hpp"

#include "semsplat/nn.hpp"

namespace semsplat {

namespace {

// Crop an upsampled map back to the unpadded pixel extent.
Tensor resize_and_crop(const Tensor& x, int64_t out_h, int64_t out_w, int64_t pad_h,
                       int64_t pad_w) {
  Tensor up = bilinear_resize(x, pad_h, pad_w);
  if (pad_h == out_h && pad_w == out_w) return up;
  Tensor out({x.dim(0), out_h, out_w});
  for (int64_t c = 0; c < x.dim(0); ++c)
    for (int64_t y = 0; y < out_h; ++y)
      for (int64_t x2 = 0; x2 < out_w; ++x2) out.at(c, y, x2) = up.at(c, y, x2);
  return out;
}

}  // namespace

ForwardResult forward(const Tensor& images, const std::vector<CameraView>& cams,
                      const PipelineConfig& cfg, const NetworkWeights& weights) {
  cfg.validate();
  const int64_t N = images.dim(0);
  if (N < 2) throw ValidationError("forward: need at least 2 input views");
  if (static_cast<int64_t>(cams.size()) != N)
    throw ValidationError("forward: camera count mismatch");
  for (const auto& c : cams) c.validate();
  const int64_t H = images.dim(2), W = images.dim(3);

  Tensor low = shared_cnn(images, weights, cfg);
  Tensor fc = color_branch(low, cams, weights, cfg);
  Tensor fs = semantic_branch(low, cams, weights, cfg);
  const int64_t HF = fc.dim(2), WF = fc.dim(3);
  const int64_t HP = HF * kDownsample, WP = WF * kDownsample;  // padded pixel extent

  DepthCandidates candidates = sample_candidates(cfg.near, cfg.far, cfg.depth_candidates);
  std::vector<DepthResult> per_view(static_cast<size_t>(N));
  for (int64_t i = 0; i < N; ++i) {
    CostVolume vol = build_cost_volume(fc, cams, candidates, static_cast<int>(i));
    Tensor fci({fc.dim(1), HF, WF});
    std::copy(fc.data() + i * fci.numel(), fc.data() + (i + 1) * fci.numel(), fci.data());
    Tensor logits = refine_volume(vol, fci, weights);
    per_view[static_cast<size_t>(i)] = regress_depth(logits, candidates);
  }

  const bool at_pixels = cfg.decode_at == DecodeGrid::Pixels;
  const int64_t DH = at_pixels ? H : HF, DW = at_pixels ? W : WF;

  std::vector<DepthResult> decode_depth(static_cast<size_t>(N));
  for (int64_t i = 0; i < N; ++i) {
    DepthResult& src = per_view[static_cast<size_t>(i)];
    if (!at_pixels) {
      decode_depth[static_cast<size_t>(i)] = src;
      continue;
    }
    DepthResult d;
    Tensor dm({1, src.depth.dim(0), src.depth.dim(1)});
    std::copy(src.depth.data(), src.depth.data() + src.depth.numel(), dm.data());
    Tensor up = resize_and_crop(dm, H, W, HP, WP);
    d.depth = Tensor({H, W});
    std::copy(up.data(), up.data() + up.numel(), d.depth.data());
    // bilinear interpolation of per-pixel simplices stays a simplex
    d.probs = resize_and_crop(src.probs, H, W, HP, WP);
    decode_depth[static_cast<size_t>(i)] = std::move(d);
  }

  ForwardResult result;
  result.gaussians = decode_shared(decode_depth, cams, weights);

  Tensor dec_images({N, 3, DH, DW});
  Tensor dec_fc({N, fc.dim(1), DH, DW});
  Tensor dec_fs({N, fs.dim(1), DH, DW});
  for (int64_t i = 0; i < N; ++i) {
    Tensor img({3, H, W});
    std::copy(images.data() + i * img.numel(), images.data() + (i + 1) * img.numel(), img.data());
    Tensor fci({fc.dim(1), HF, WF}), fsi({fs.dim(1), HF, WF});
    std::copy(fc.data() + i * fci.numel(), fc.data() + (i + 1) * fci.numel(), fci.data());
    std::copy(fs.data() + i * fsi.numel(), fs.data() + (i + 1) * fsi.numel(), fsi.data());
    Tensor img_d = at_pixels ? img : bilinear_resize(img, DH, DW);
    Tensor fc_d = at_pixels ? resize_and_crop(fci, H, W, HP, WP) : fci;
    Tensor fs_d = at_pixels ? resize_and_crop(fsi, H, W, HP, WP) : fsi;
    std::copy(img_d.data(), img_d.data() + img_d.numel(),
              dec_images.data() + i * img_d.numel());
    std::copy(fc_d.data(), fc_d.data() + fc_d.numel(), dec_fc.data() + i * fc_d.numel());
    std::copy(fs_d.data(), fs_d.data() + fs_d.numel(), dec_fs.data() + i * fs_d.numel());
  }
  decode_color_attrs(dec_images, dec_fc, weights, cfg, result.gaussians);
  decode_semantic_attrs(dec_images, dec_fs, weights, cfg, result.gaussians);
  result.gaussians.validate();
  result.depth = std::move(decode_depth);
  return result;
}

RenderedMaps render_novel(const GaussianSet& gaussians, const CameraView& target, int width,
                          int height) {
  return rasterize(gaussians, target, width, height).maps;
}

}  // namespace semsplat
