#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "semsplat/gaussians.hpp"
#include "semsplat/geometry.hpp"
#include "semsplat/tensor.hpp"

namespace semsplat {

using Mat2 = Eigen::Matrix2d;

constexpr int kIgnoreLabel = -1;

struct RasterizeOptions {
  int tile_size = 16;
  double sigma_cutoff = 3.0;       // footprint radius in standard deviations
  double cov2d_floor = 0.3;        // px^2 eigenvalue floor
  double alpha_clamp = 0.999;
  double transmittance_eps = 1e-4;
  double alpha_floor = 1e-4;       // alpha_acc below this renders background
  double near_clip = 0.2;          // cull centers closer than this, scene units
};

struct Projected2D {
  Vec2 mean_px;
  Mat2 cov;
  double depth;
};

// EWA projection of one 3D covariance; nullopt when the center is behind the
// camera (culled). Covariance in pixel units with the eigenvalue floor applied.
std::optional<Projected2D> project_gaussian(const Vec3& position, const Mat3& cov3d,
                                            const CameraView& cam,
                                            const RasterizeOptions& opt = {});

struct RenderedMaps {
  Tensor rgb;          // 3 x H x W, in [0,1]
  Tensor sem_probs;    // K x H x W, blended class distributions
  std::vector<int> labels;  // H*W row-major, kIgnoreLabel where alpha_acc is ~0
  Tensor depth;        // H x W
  Tensor alpha_acc;    // H x W, semantic-branch accumulation
  Tensor alpha_color;  // H x W, color-branch accumulation
  int width = 0, height = 0, num_classes = 0;
};

// Per-pixel semantic blend weights, for the semantic gradient path. Tied to
// the producing rasterize call by pass_id.
struct BlendRecord {
  uint64_t pass_id = 0;
  int width = 0, height = 0;
  std::vector<std::vector<std::pair<int32_t, double>>> pixels;
};

struct RenderOutput {
  RenderedMaps maps;
  BlendRecord record;
};

// Depth-sorted tile-based front-to-back compositing of both branches. The
// color and semantic Gaussians of a pixel share depth, so a single sorted
// order drives both accumulations.
RenderOutput rasterize(const GaussianSet& gaussians, const CameraView& cam, int width, int height,
                       const RasterizeOptions& opt = {});

// argmax over classes, lowest index on ties; ignore where alpha_acc <= floor.
std::vector<int> render_label_map(const Tensor& sem_probs, const Tensor& alpha_acc,
                                  double alpha_floor = 1e-4);

struct SemanticGradients {
  std::vector<double> wrt_probs;   // n * K, gradient w.r.t. softmax(class_logits)
  std::vector<double> wrt_logits;  // n * K
};

// Blending is linear in the per-Gaussian class distributions, so
// d sem_probs(pixel) / d softmax(s_j) = w_j; the logit gradient chains
// through the per-Gaussian softmax Jacobian.
SemanticGradients backprop_semantic(const Tensor& grad_out, const BlendRecord& record,
                                    const RenderOutput& pass, const GaussianSet& gaussians);

// softmax of one Gaussian's class logits.
std::vector<double> class_distribution(const GaussianSet& g, int64_t j);

}  // namespace semsplat
