#pragma once

#include <vector>

#include "semsplat/geometry.hpp"
#include "semsplat/tensor.hpp"
#include "semsplat/weights.hpp"

namespace semsplat {

// Depth hypotheses, uniform in inverse depth, stored in increasing depth.
struct DepthCandidates {
  std::vector<double> values;
  double near = 0.0;
  double far = 0.0;

  int64_t count() const { return static_cast<int64_t>(values.size()); }
  void validate() const;
};

DepthCandidates sample_candidates(double near, double far, int count);

struct CostVolume {
  Tensor corr;  // L x H' x W'
};

// Plane-sweep volume for `ref_view`: each source view is warped to the
// reference at every candidate; per-pixel correlation = channel mean of the
// elementwise product with the reference feature; source views aggregated by
// arithmetic mean.
CostVolume build_cost_volume(const Tensor& features /* N x C x H' x W' */,
                             const std::vector<CameraView>& cams, const DepthCandidates& candidates,
                             int ref_view);

// 2-scale encoder/decoder on [volume ; features], global residual over the
// input volume, L logits per pixel.
Tensor refine_volume(const CostVolume& volume, const Tensor& ref_features,
                     const NetworkWeights& w);

struct DepthResult {
  Tensor depth;  // H' x W'
  Tensor probs;  // L x H' x W'
};

// Per-pixel softmax over candidates; depth = expectation over candidates.
DepthResult regress_depth(const Tensor& logits, const DepthCandidates& candidates);

// Zero-mean, L2-normalized grayscale patch descriptors (patch*patch channels
// per pixel). Correlating two of these gives patchwise NCC.
Tensor ncc_patch_features(const Tensor& image /* 3 x H x W */, int patch = 7);

// Backbone bypass: plane-sweep matching on the raw images. For each candidate
// the source image is warped into the reference and scored by patchwise NCC
// (computed on the warped image, not on warped descriptors, to avoid an
// interpolation bias toward integer-pixel warps); `gain` sharpens the scores
// before the softmax so the expectation concentrates near the best candidate.
DepthResult raw_feature_depth(const std::vector<Tensor>& images,
                              const std::vector<CameraView>& cams,
                              const DepthCandidates& candidates, int ref_view, int patch = 9,
                              double gain = 40.0);

}  // namespace semsplat
