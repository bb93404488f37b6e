#pragma once

#include <vector>

#include "semsplat/attention.hpp"
#include "semsplat/config.hpp"
#include "semsplat/geometry.hpp"
#include "semsplat/nn.hpp"
#include "semsplat/weights.hpp"

namespace semsplat {

// Channel plan of the shared CNN: two stride-2 stages inside 6 residual
// blocks, 3 -> 32 -> 32 -> 64 -> 64 -> 128 -> 128, output d channels at 1/4
// resolution.
constexpr int kDownsample = 4;

// Registers and randomizes every weight tensor of the model: shared CNN, both
// transformer branches, cost-volume U-Net, and the decoder heads.
NetworkWeights init_weights(uint64_t seed, const PipelineConfig& cfg);

// N x 3 x H x W -> N x d x H/4 x W/4 (input padded to a multiple of 4 first).
Tensor shared_cnn(const Tensor& images, const NetworkWeights& w, const PipelineConfig& cfg);

// Camera-aware transformer stacks. Each block: windowed self-attention
// (alternating shift 0 / window/2), cross-view attention, pointwise FFN, all
// with pre-norm residual connections.
Tensor color_branch(const Tensor& low_features, const std::vector<CameraView>& cams,
                    const NetworkWeights& w, const PipelineConfig& cfg);
Tensor semantic_branch(const Tensor& low_features, const std::vector<CameraView>& cams,
                       const NetworkWeights& w, const PipelineConfig& cfg);

// Exposed for invariance tests: attention weights of the first cross-view
// layer of the color branch.
MatX color_branch_first_cross_attention(const Tensor& low_features,
                                        const std::vector<CameraView>& cams,
                                        const NetworkWeights& w, const PipelineConfig& cfg);

}  // namespace semsplat
