#pragma once

#include <vector>

#include "semsplat/config.hpp"
#include "semsplat/rasterizer.hpp"
#include "semsplat/tensor.hpp"

namespace semsplat {

// Ground-truth label map; values in [0, K) or kIgnoreLabel.
struct LabelMap {
  std::vector<int> labels;  // H*W row-major
  int width = 0, height = 0, num_classes = 0;

  int at(int64_t y, int64_t x) const { return labels[static_cast<size_t>(y) * width + x]; }
  void validate() const;
};

struct LossValue {
  double value = 0.0;
  Tensor grad;  // same shape as the prediction input
};

// Mean over non-ignore pixels of -log(clamp(pred at gt class)).
LossValue sem_ce(const LabelMap& gt, const Tensor& pred_probs, double prob_floor = 1e-8);

// Mean squared error over all channels and pixels.
LossValue color_mse(const Tensor& gt_image, const Tensor& pred_image);

// Sum over classes l and same-region down/right neighbor pairs of
// |pred^l(neighbor) - pred^l(pixel)|; no averaging. Subgradient 0 at ties.
LossValue regional_smoothness(const LabelMap& gt, const Tensor& pred_probs);

double total_loss(double l_sem, double l_c, double l_rs, const LossConfig& cfg);

struct SegmentationMetrics {
  double miou = 0.0;
  double acc = 0.0;
  double class_acc = 0.0;
  std::vector<int64_t> confusion;  // K*K, [gt*K + pred]
};

SegmentationMetrics segmentation_metrics(const LabelMap& gt, const LabelMap& pred, int num_classes);

// Toy descent on the semantic objective: gradient steps on class_logits only,
// supervised by rendering against the given views. The cross-entropy term is
// pixel-summed (matching the written form of the loss), smoothness is the
// bare sum.
struct FitResult {
  GaussianSet gaussians;
  std::vector<double> loss_trace;  // objective before each step, plus final
};

struct SupervisedView {
  LabelMap labels;
  CameraView camera;
};

FitResult fit_semantic_logits(const GaussianSet& gaussians,
                              const std::vector<SupervisedView>& views, int steps,
                              double step_size, const LossConfig& cfg = {});

// Objective and analytic logit gradient of one evaluation, exposed for the
// finite-difference harness.
double semantic_objective(const GaussianSet& gaussians, const std::vector<SupervisedView>& views,
                          const LossConfig& cfg, std::vector<double>* grad_logits = nullptr);

}  // namespace semsplat
