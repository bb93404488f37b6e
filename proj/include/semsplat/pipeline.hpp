#pragma once

#include <vector>

#include "semsplat/backbone.hpp"
#include "semsplat/config.hpp"
#include "semsplat/depth.hpp"
#include "semsplat/gaussians.hpp"
#include "semsplat/rasterizer.hpp"

namespace semsplat {

// Single feed-forward pass: images + cameras -> features -> per-view depth ->
// dual Gaussians. Pure function of (images, cameras, config, weights).
struct ForwardResult {
  GaussianSet gaussians;
  std::vector<DepthResult> depth;  // at the decode grid
};

ForwardResult forward(const Tensor& images /* N x 3 x H x W */,
                      const std::vector<CameraView>& cams, const PipelineConfig& cfg,
                      const NetworkWeights& weights);

RenderedMaps render_novel(const GaussianSet& gaussians, const CameraView& target, int width,
                          int height);

}  // namespace semsplat
