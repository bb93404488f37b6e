#pragma once

#include <cstdint>

#include "semsplat/common.hpp"

namespace semsplat {

struct LossConfig {
  double lambda_sem = 0.1;
  double lambda_c = 1.0;
  double lambda_rs = 0.001;
  double prob_floor = 1e-8;

  void validate() const {
    if (lambda_sem < 0 || lambda_c < 0 || lambda_rs < 0)
      throw ValidationError("LossConfig: negative loss weight");
    if (!(prob_floor > 0)) throw ValidationError("LossConfig: prob_floor must be positive");
  }
};

enum class DecodeGrid { Pixels, Features };

struct PipelineConfig {
  int d = 128;              // feature/embedding dimension
  int depth_candidates = 128;  // L
  double near = 0.5;
  double far = 15.0;
  int num_classes = 20;  // K
  int sh_degree = 1;     // 0, 1 or 2
  int window_size = 8;
  uint64_t seed = 0;
  DecodeGrid decode_at = DecodeGrid::Pixels;
  LossConfig loss;

  int sh_basis() const { return (sh_degree + 1) * (sh_degree + 1); }

  void validate() const {
    if (d <= 0 || d % 8 != 0) throw ValidationError("PipelineConfig: d must be divisible by 8");
    if (depth_candidates < 2) throw ValidationError("PipelineConfig: L must be >= 2");
    if (!(0 < near && near < far)) throw ValidationError("PipelineConfig: need 0 < near < far");
    if (num_classes < 2) throw ValidationError("PipelineConfig: need >= 2 classes");
    if (sh_degree < 0 || sh_degree > 2) throw ValidationError("PipelineConfig: sh_degree in 0..2");
    if (window_size <= 0) throw ValidationError("PipelineConfig: window_size must be positive");
    loss.validate();
  }
};

}  // namespace semsplat
