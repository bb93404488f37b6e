#pragma once

#include <string>
#include <vector>

#include "semsplat/config.hpp"
#include "semsplat/depth.hpp"
#include "semsplat/geometry.hpp"
#include "semsplat/weights.hpp"

namespace semsplat {

// Dual Gaussians in structure-of-arrays form. Position and opacity are stored
// once and shared by the color and semantic Gaussian of a pixel; the branch
// attributes live side by side. Quaternions are (w, x, y, z).
struct GaussianSet {
  std::vector<Vec3> position;
  std::vector<double> opacity;

  std::vector<Vec3> color_scale;
  std::vector<Vec4> color_rotation;
  std::vector<double> sh_coeffs;  // 3 * sh_basis per Gaussian, channel-major
  int sh_basis = 4;

  std::vector<Vec3> sem_scale;
  std::vector<Vec4> sem_rotation;
  std::vector<double> class_logits;  // num_classes per Gaussian
  int num_classes = 0;

  struct Provenance {
    int32_t view;
    int32_t pixel;
  };
  std::vector<Provenance> provenance;

  int64_t size() const { return static_cast<int64_t>(position.size()); }
  const double* sh(int64_t j) const { return sh_coeffs.data() + j * 3 * sh_basis; }
  const double* logits(int64_t j) const { return class_logits.data() + j * num_classes; }
  double* logits(int64_t j) { return class_logits.data() + j * num_classes; }

  void validate() const;

  void save(const std::string& path) const;
  static GaussianSet load(const std::string& path);
};

// R(q) * diag(scale^2) * R(q)^T
Mat3 covariance_from(const Vec3& scale, const Vec4& quaternion);

// Real spherical harmonics basis values for a unit direction, degree 0..2.
void sh_basis_eval(const Vec3& dir, int basis, double* out);
// Per-channel SH dot product for one Gaussian, unclamped.
Vec3 sh_eval_color(const double* coeffs, int basis, const Vec3& dir);
// DC normalization: a pixel color c maps to DC coefficient c / Y00.
double sh_dc_scale();

// Back-projects every pixel of every view at its regressed depth and predicts
// opacity from the depth probability vector with a small conv head. Fills the
// shared attributes and provenance of a fresh set sized N*H*W.
GaussianSet decode_shared(const std::vector<DepthResult>& depth_results,
                          const std::vector<CameraView>& cams, const NetworkWeights& w);

// Branch heads operate on [image ; features] at the decode grid resolution.
// Scales go through softplus + 1e-4 floor, quaternions through an identity
// offset and normalization, SH DC is offset by the input pixel color.
void decode_color_attrs(const Tensor& images, const Tensor& color_features,
                        const NetworkWeights& w, const PipelineConfig& cfg, GaussianSet& out);
void decode_semantic_attrs(const Tensor& images, const Tensor& sem_features,
                           const NetworkWeights& w, const PipelineConfig& cfg, GaussianSet& out);

}  // namespace semsplat
