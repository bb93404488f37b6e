#include "semsplat/losses.hpp"

#include <algorithm>
#include <cmath>

namespace semsplat {

void LabelMap::validate() const {
  if (width <= 0 || height <= 0 ||
      static_cast<int64_t>(labels.size()) != static_cast<int64_t>(width) * height)
    throw ValidationError("LabelMap: size mismatch");
  for (int v : labels)
    if (v != kIgnoreLabel && (v < 0 || v >= num_classes))
      throw ValidationError("LabelMap: label out of range");
}

LossValue sem_ce(const LabelMap& gt, const Tensor& pred_probs, double prob_floor) {
  gt.validate();
  const int64_t K = pred_probs.dim(0), H = pred_probs.dim(1), W = pred_probs.dim(2);
  if (H != gt.height || W != gt.width || K != gt.num_classes)
    throw ValidationError("sem_ce: shape mismatch");
  int64_t count = 0;
  for (int v : gt.labels)
    if (v != kIgnoreLabel) ++count;
  if (count == 0) throw ValidationError("sem_ce: all pixels ignored");
  LossValue out;
  out.grad = Tensor({K, H, W});
  double inv_count = 1.0 / static_cast<double>(count);
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      int l = gt.at(y, x);
      if (l == kIgnoreLabel) continue;
      double p = std::clamp(pred_probs.at(l, y, x), prob_floor, 1.0);
      out.value += -std::log(p) * inv_count;
      // zero gradient where the floor clamp is active
      if (pred_probs.at(l, y, x) > prob_floor) out.grad.at(l, y, x) = -inv_count / p;
    }
  return out;
}

LossValue color_mse(const Tensor& gt_image, const Tensor& pred_image) {
  if (!gt_image.same_shape(pred_image)) throw ValidationError("color_mse: shape mismatch");
  LossValue out;
  out.grad = Tensor(pred_image.shape());
  const int64_t n = pred_image.numel();
  double inv = 1.0 / static_cast<double>(n);
  for (int64_t i = 0; i < n; ++i) {
    double d = pred_image[i] - gt_image[i];
    out.value += d * d * inv;
    out.grad[i] = 2.0 * d * inv;
  }
  return out;
}

LossValue regional_smoothness(const LabelMap& gt, const Tensor& pred_probs) {
  gt.validate();
  const int64_t K = pred_probs.dim(0), H = pred_probs.dim(1), W = pred_probs.dim(2);
  if (H != gt.height || W != gt.width || K != gt.num_classes)
    throw ValidationError("regional_smoothness: shape mismatch");
  LossValue out;
  out.grad = Tensor({K, H, W});
  auto accumulate = [&](int l, int64_t y0, int64_t x0, int64_t y1, int64_t x1) {
    double d = pred_probs.at(l, y1, x1) - pred_probs.at(l, y0, x0);
    out.value += std::abs(d);
    if (d > 0) {
      out.grad.at(l, y1, x1) += 1.0;
      out.grad.at(l, y0, x0) -= 1.0;
    } else if (d < 0) {
      out.grad.at(l, y1, x1) -= 1.0;
      out.grad.at(l, y0, x0) += 1.0;
    }
  };
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      int l = gt.at(y, x);
      if (l == kIgnoreLabel) continue;
      if (y + 1 < H && gt.at(y + 1, x) == l) accumulate(l, y, x, y + 1, x);
      if (x + 1 < W && gt.at(y, x + 1) == l) accumulate(l, y, x, y, x + 1);
    }
  return out;
}

double total_loss(double l_sem, double l_c, double l_rs, const LossConfig& cfg) {
  cfg.validate();
  return cfg.lambda_sem * l_sem + cfg.lambda_c * l_c + cfg.lambda_rs * l_rs;
}

SegmentationMetrics segmentation_metrics(const LabelMap& gt, const LabelMap& pred,
                                         int num_classes) {
  gt.validate();
  pred.validate();
  if (gt.width != pred.width || gt.height != pred.height)
    throw ValidationError("segmentation_metrics: size mismatch");
  SegmentationMetrics m;
  m.confusion.assign(static_cast<size_t>(num_classes) * num_classes, 0);
  int64_t total = 0;
  for (size_t i = 0; i < gt.labels.size(); ++i) {
    int g = gt.labels[i], p = pred.labels[i];
    if (g == kIgnoreLabel || p == kIgnoreLabel) continue;
    ++m.confusion[static_cast<size_t>(g) * num_classes + p];
    ++total;
  }
  if (total == 0) throw ValidationError("segmentation_metrics: zero non-ignore pixels");
  int64_t trace = 0;
  std::vector<double> ious, caccs;
  for (int c = 0; c < num_classes; ++c) {
    int64_t tp = m.confusion[static_cast<size_t>(c) * num_classes + c];
    int64_t fp = 0, fn = 0;
    for (int o = 0; o < num_classes; ++o) {
      if (o == c) continue;
      fp += m.confusion[static_cast<size_t>(o) * num_classes + c];
      fn += m.confusion[static_cast<size_t>(c) * num_classes + o];
    }
    trace += tp;
    if (tp + fp + fn > 0)  // classes absent from both sides are excluded
      ious.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp + fn));
    if (tp + fn > 0) caccs.push_back(static_cast<double>(tp) / static_cast<double>(tp + fn));
  }
  // sorted accumulation keeps the means bit-identical under class relabeling
  auto sorted_mean = [](std::vector<double>& v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  m.miou = sorted_mean(ious);
  m.acc = static_cast<double>(trace) / static_cast<double>(total);
  m.class_acc = sorted_mean(caccs);
  return m;
}

double semantic_objective(const GaussianSet& gaussians, const std::vector<SupervisedView>& views,
                          const LossConfig& cfg, std::vector<double>* grad_logits) {
  if (views.empty()) throw ValidationError("semantic_objective: need >= 1 supervised view");
  const int K = gaussians.num_classes;
  double objective = 0.0;
  if (grad_logits) grad_logits->assign(static_cast<size_t>(gaussians.size() * K), 0.0);
  for (const auto& view : views) {
    RenderOutput pass =
        rasterize(gaussians, view.camera, view.labels.width, view.labels.height);
    int64_t count = 0;
    for (int v : view.labels.labels)
      if (v != kIgnoreLabel) ++count;
    LossValue ce = sem_ce(view.labels, pass.maps.sem_probs, cfg.prob_floor);
    LossValue rs = regional_smoothness(view.labels, pass.maps.sem_probs);
    // pixel-summed cross-entropy: scale the mean-reduced loss back up
    double scale = static_cast<double>(count);
    objective += cfg.lambda_sem * ce.value * scale + cfg.lambda_rs * rs.value;
    if (grad_logits) {
      Tensor grad_probs(ce.grad.shape());
      for (int64_t i = 0; i < grad_probs.numel(); ++i)
        grad_probs[i] = cfg.lambda_sem * ce.grad[i] * scale + cfg.lambda_rs * rs.grad[i];
      SemanticGradients g = backprop_semantic(grad_probs, pass.record, pass, gaussians);
      for (size_t i = 0; i < g.wrt_logits.size(); ++i) (*grad_logits)[i] += g.wrt_logits[i];
    }
  }
  return objective;
}

FitResult fit_semantic_logits(const GaussianSet& gaussians,
                              const std::vector<SupervisedView>& views, int steps,
                              double step_size, const LossConfig& cfg) {
  FitResult r;
  r.gaussians = gaussians;
  std::vector<double> grad;
  for (int step = 0; step < steps; ++step) {
    double loss = semantic_objective(r.gaussians, views, cfg, &grad);
    r.loss_trace.push_back(loss);
    for (size_t i = 0; i < grad.size(); ++i) r.gaussians.class_logits[i] -= step_size * grad[i];
  }
  r.loss_trace.push_back(semantic_objective(r.gaussians, views, cfg, nullptr));
  return r;
}

}  // namespace semsplat
