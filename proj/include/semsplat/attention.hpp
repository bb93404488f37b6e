#pragma once

#include <Eigen/Dense>
#include <vector>

#include "semsplat/geometry.hpp"
#include "semsplat/tensor.hpp"

namespace semsplat {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Per-view patch embeddings: N_views x H' x W' x d. Token (v, y, x) carries
// its patch-grid coordinates for the rotary part of the transform.
struct TokenGrid {
  Tensor embeddings;  // N x H' x W' x d
  int64_t views() const { return embeddings.dim(0); }
  int64_t rows() const { return embeddings.dim(1); }
  int64_t cols() const { return embeddings.dim(2); }
  int64_t dim() const { return embeddings.dim(3); }
};

// dim x dim block-diagonal 2x2 rotation matrix with angles
// position * base^(-2k/dim), k = 0..dim/2-1.
MatX rope_matrix(double position, int dim, double base = 10000.0);

// Block-diagonal geometric transform for one token:
//   G = diag(I_{d/8} (x) P,  RoPE(x_t),  RoPE(y_t))
// with the projective block of size d/2 and each rotary block of size d/4.
// Stored in factored form; apply_* run in O(d).
class TokenTransform {
 public:
  TokenTransform() = default;
  TokenTransform(double x, double y, const ProjectiveMatrix& view_proj, int d,
                 double rope_base = 10000.0);

  static TokenTransform identity(int d);

  int dim() const { return d_; }

  // G^T v (queries)
  VecX apply_transpose(const VecX& v) const;
  // G^-1 v (keys and values)
  VecX apply_inverse(const VecX& v) const;

  // Dense d x d matrix, for oracle tests and invariant checks.
  MatX materialize() const;

  const Mat4& proj() const { return proj_; }

 private:
  int d_ = 0;
  Mat4 proj_ = Mat4::Identity();
  Mat4 proj_inv_ = Mat4::Identity();
  // Rotary angles: d/8 for the x block followed by d/8 for the y block.
  std::vector<double> cos_, sin_;
};

// Builds the transform for token at patch coords (x, y) of a view.
TokenTransform build_token_transform(double x, double y, const ProjectiveMatrix& view_proj, int d);

// GTA attention over one token set:
//   Q'_t = G_t^T Q_t, K'_u = G_u^-1 K_u, V'_u = G_u^-1 V_u
//   A = softmax(Q' K'^T / sqrt(d)), O_t = sum_u A_{t,u} V'_u
// Rows of Q/K/V are tokens. When `weights_out` is non-null the attention
// matrix is copied there.
MatX gta_attention(const MatX& queries, const MatX& keys, const MatX& values,
                   const std::vector<TokenTransform>& q_transforms,
                   const std::vector<TokenTransform>& kv_transforms, MatX* weights_out = nullptr);

inline MatX gta_attention(const MatX& queries, const MatX& keys, const MatX& values,
                          const std::vector<TokenTransform>& transforms,
                          MatX* weights_out = nullptr) {
  return gta_attention(queries, keys, values, transforms, transforms, weights_out);
}

// Swin-style windowed attention within each view. Tokens are cyclically
// shifted by `shift`, partitioned into window_size x window_size windows,
// attended independently per window, then unshifted. Q = K = V = embeddings;
// transforms are built per token from its original patch coordinates.
TokenGrid windowed_attention(const TokenGrid& grid,
                             const std::vector<ProjectiveMatrix>& view_projs, int window_size,
                             int shift, double rope_base = 10000.0);

// Cross-view attention: queries from each token's own view, keys/values from
// all tokens of the other views. Single view passes through unchanged.
TokenGrid cross_view_attention(const TokenGrid& grid,
                               const std::vector<ProjectiveMatrix>& view_projs,
                               double rope_base = 10000.0);

// Variants with separate query/key/value grids (used by the backbone, whose
// Q/K/V come from learned projections of the same token grid).
TokenGrid windowed_attention_qkv(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                                 const std::vector<ProjectiveMatrix>& view_projs, int window_size,
                                 int shift, double rope_base = 10000.0);
TokenGrid cross_view_attention_qkv(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                                   const std::vector<ProjectiveMatrix>& view_projs,
                                   double rope_base = 10000.0);

}  // namespace semsplat
