#include "semsplat/attention.hpp"

#include <cmath>

#include "semsplat/common.hpp"

namespace semsplat {

MatX rope_matrix(double position, int dim, double base) {
  if (dim <= 0 || dim % 2 != 0) throw ValidationError("rope_matrix: dim must be even positive");
  MatX m = MatX::Zero(dim, dim);
  for (int k = 0; k < dim / 2; ++k) {
    double angle = position * std::pow(base, -2.0 * k / dim);
    double c = std::cos(angle), s = std::sin(angle);
    m(2 * k, 2 * k) = c;
    m(2 * k, 2 * k + 1) = -s;
    m(2 * k + 1, 2 * k) = s;
    m(2 * k + 1, 2 * k + 1) = c;
  }
  return m;
}

TokenTransform::TokenTransform(double x, double y, const ProjectiveMatrix& view_proj, int d,
                               double rope_base) {
  if (d % 8 != 0 || d <= 0) throw ValidationError("TokenTransform: d must be divisible by 8");
  d_ = d;
  proj_ = view_proj.m;
  proj_inv_ = view_proj.m.inverse();
  int pairs = d / 8;  // per rotary block of size d/4
  cos_.resize(static_cast<size_t>(2 * pairs));
  sin_.resize(static_cast<size_t>(2 * pairs));
  for (int k = 0; k < pairs; ++k) {
    double freq = std::pow(rope_base, -2.0 * k / (d / 4.0));
    double ax = x * freq, ay = y * freq;
    cos_[static_cast<size_t>(k)] = std::cos(ax);
    sin_[static_cast<size_t>(k)] = std::sin(ax);
    cos_[static_cast<size_t>(pairs + k)] = std::cos(ay);
    sin_[static_cast<size_t>(pairs + k)] = std::sin(ay);
  }
}

TokenTransform TokenTransform::identity(int d) {
  ProjectiveMatrix p;  // identity
  return TokenTransform(0.0, 0.0, p, d);
}

VecX TokenTransform::apply_transpose(const VecX& v) const {
  if (v.size() != d_) throw ValidationError("TokenTransform: size mismatch");
  VecX out(d_);
  int half = d_ / 2;
  for (int b = 0; b < d_ / 8; ++b)
    out.segment<4>(4 * b) = proj_.transpose() * v.segment<4>(4 * b);
  // Rotary blocks are orthogonal: transpose = inverse = rotation by -angle.
  int pairs = d_ / 8;
  for (int k = 0; k < 2 * pairs; ++k) {
    double c = cos_[static_cast<size_t>(k)], s = sin_[static_cast<size_t>(k)];
    double a = v[half + 2 * k], b = v[half + 2 * k + 1];
    out[half + 2 * k] = c * a + s * b;
    out[half + 2 * k + 1] = -s * a + c * b;
  }
  return out;
}

VecX TokenTransform::apply_inverse(const VecX& v) const {
  if (v.size() != d_) throw ValidationError("TokenTransform: size mismatch");
  VecX out(d_);
  int half = d_ / 2;
  for (int b = 0; b < d_ / 8; ++b) out.segment<4>(4 * b) = proj_inv_ * v.segment<4>(4 * b);
  int pairs = d_ / 8;
  for (int k = 0; k < 2 * pairs; ++k) {
    double c = cos_[static_cast<size_t>(k)], s = sin_[static_cast<size_t>(k)];
    double a = v[half + 2 * k], b = v[half + 2 * k + 1];
    out[half + 2 * k] = c * a + s * b;
    out[half + 2 * k + 1] = -s * a + c * b;
  }
  return out;
}

MatX TokenTransform::materialize() const {
  MatX g = MatX::Zero(d_, d_);
  for (int b = 0; b < d_ / 8; ++b) g.block<4, 4>(4 * b, 4 * b) = proj_;
  int half = d_ / 2;
  int pairs = d_ / 8;
  for (int k = 0; k < 2 * pairs; ++k) {
    double c = cos_[static_cast<size_t>(k)], s = sin_[static_cast<size_t>(k)];
    g(half + 2 * k, half + 2 * k) = c;
    g(half + 2 * k, half + 2 * k + 1) = -s;
    g(half + 2 * k + 1, half + 2 * k) = s;
    g(half + 2 * k + 1, half + 2 * k + 1) = c;
  }
  return g;
}

TokenTransform build_token_transform(double x, double y, const ProjectiveMatrix& view_proj,
                                     int d) {
  return TokenTransform(x, y, view_proj, d);
}

MatX gta_attention(const MatX& queries, const MatX& keys, const MatX& values,
                   const std::vector<TokenTransform>& q_transforms,
                   const std::vector<TokenTransform>& kv_transforms, MatX* weights_out) {
  const int64_t nq = queries.rows(), nk = keys.rows();
  const int d = static_cast<int>(queries.cols());
  if (keys.cols() != d || values.cols() != d) throw ValidationError("gta_attention: dim mismatch");
  if (static_cast<int64_t>(q_transforms.size()) != nq ||
      static_cast<int64_t>(kv_transforms.size()) != nk || keys.rows() != values.rows())
    throw ValidationError("gta_attention: transform/sequence length mismatch");
  if (!queries.allFinite() || !keys.allFinite() || !values.allFinite())
    throw ValidationError("gta_attention: non-finite input");

  MatX qp(nq, d), kp(nk, d), vp(nk, d);
  for (int64_t t = 0; t < nq; ++t)
    qp.row(t) = q_transforms[static_cast<size_t>(t)].apply_transpose(queries.row(t).transpose());
  for (int64_t u = 0; u < nk; ++u) {
    const auto& g = kv_transforms[static_cast<size_t>(u)];
    kp.row(u) = g.apply_inverse(keys.row(u).transpose());
    vp.row(u) = g.apply_inverse(values.row(u).transpose());
  }

  MatX scores = qp * kp.transpose() / std::sqrt(static_cast<double>(d));
  for (int64_t t = 0; t < nq; ++t) {
    double mx = scores.row(t).maxCoeff();
    double sum = 0.0;
    for (int64_t u = 0; u < nk; ++u) {
      scores(t, u) = std::exp(scores(t, u) - mx);
      sum += scores(t, u);
    }
    scores.row(t) /= sum;
  }
  if (weights_out) *weights_out = scores;
  return scores * vp;
}

namespace {

struct TokenRef {
  int64_t view, y, x;
};

TokenGrid run_windowed(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                       const std::vector<ProjectiveMatrix>& view_projs, int window_size, int shift,
                       double rope_base) {
  const int64_t N = q.views(), H = q.rows(), W = q.cols();
  const int d = static_cast<int>(q.dim());
  if (static_cast<int64_t>(view_projs.size()) != N)
    throw ValidationError("windowed_attention: one projective matrix per view required");
  if (window_size > H || window_size > W)
    throw ValidationError("windowed_attention: window larger than grid");
  if (H % window_size != 0 || W % window_size != 0)
    throw ValidationError("windowed_attention: window must divide grid extent");

  TokenGrid out;
  out.embeddings = Tensor({N, H, W, d});
  const int64_t wy_n = H / window_size, wx_n = W / window_size;
  const int64_t n_jobs = N * wy_n * wx_n;

  parallel_for(n_jobs, [&](int64_t job) {
    int64_t view = job / (wy_n * wx_n);
    int64_t wy = (job / wx_n) % wy_n;
    int64_t wx = job % wx_n;
    const int64_t count = static_cast<int64_t>(window_size) * window_size;
    MatX Q(count, d), K(count, d), V(count, d);
    std::vector<TokenTransform> transforms;
    transforms.reserve(static_cast<size_t>(count));
    std::vector<TokenRef> refs(static_cast<size_t>(count));
    int64_t idx = 0;
    for (int64_t sy = wy * window_size; sy < (wy + 1) * window_size; ++sy) {
      for (int64_t sx = wx * window_size; sx < (wx + 1) * window_size; ++sx) {
        // cyclic shift: shifted slot (sy,sx) holds original token
        // ((sy+shift) mod H, (sx+shift) mod W)
        int64_t oy = (sy + shift) % H;
        int64_t ox = (sx + shift) % W;
        refs[static_cast<size_t>(idx)] = {view, oy, ox};
        for (int c = 0; c < d; ++c) {
          Q(idx, c) = q.embeddings.at(view, oy, ox, c);
          K(idx, c) = k.embeddings.at(view, oy, ox, c);
          V(idx, c) = v.embeddings.at(view, oy, ox, c);
        }
        transforms.emplace_back(static_cast<double>(ox), static_cast<double>(oy),
                                view_projs[static_cast<size_t>(view)], d, rope_base);
        ++idx;
      }
    }
    MatX O = gta_attention(Q, K, V, transforms, transforms);
    for (int64_t t = 0; t < count; ++t) {
      const TokenRef& r = refs[static_cast<size_t>(t)];
      for (int c = 0; c < d; ++c) out.embeddings.at(r.view, r.y, r.x, c) = O(t, c);
    }
  });
  return out;
}

TokenGrid run_cross_view(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                         const std::vector<ProjectiveMatrix>& view_projs, double rope_base) {
  const int64_t N = q.views(), H = q.rows(), W = q.cols();
  const int d = static_cast<int>(q.dim());
  if (static_cast<int64_t>(view_projs.size()) != N)
    throw ValidationError("cross_view_attention: one projective matrix per view required");
  if (N < 2) return q;  // single view: pass-through

  TokenGrid out;
  out.embeddings = Tensor({N, H, W, d});
  parallel_for(N, [&](int64_t view) {
    const int64_t nq = H * W, nk = (N - 1) * H * W;
    MatX Q(nq, d), K(nk, d), V(nk, d);
    std::vector<TokenTransform> qt, kt;
    qt.reserve(static_cast<size_t>(nq));
    kt.reserve(static_cast<size_t>(nk));
    int64_t qi = 0;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        for (int c = 0; c < d; ++c) Q(qi, c) = q.embeddings.at(view, y, x, c);
        qt.emplace_back(static_cast<double>(x), static_cast<double>(y),
                        view_projs[static_cast<size_t>(view)], d, rope_base);
        ++qi;
      }
    int64_t ki = 0;
    for (int64_t other = 0; other < N; ++other) {
      if (other == view) continue;
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          for (int c = 0; c < d; ++c) {
            K(ki, c) = k.embeddings.at(other, y, x, c);
            V(ki, c) = v.embeddings.at(other, y, x, c);
          }
          kt.emplace_back(static_cast<double>(x), static_cast<double>(y),
                          view_projs[static_cast<size_t>(other)], d, rope_base);
          ++ki;
        }
    }
    MatX O = gta_attention(Q, K, V, qt, kt);
    qi = 0;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x, ++qi)
        for (int c = 0; c < d; ++c) out.embeddings.at(view, y, x, c) = O(qi, c);
  });
  return out;
}

}  // namespace

TokenGrid windowed_attention(const TokenGrid& grid, const std::vector<ProjectiveMatrix>& view_projs,
                             int window_size, int shift, double rope_base) {
  return run_windowed(grid, grid, grid, view_projs, window_size, shift, rope_base);
}

TokenGrid windowed_attention_qkv(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                                 const std::vector<ProjectiveMatrix>& view_projs, int window_size,
                                 int shift, double rope_base) {
  return run_windowed(q, k, v, view_projs, window_size, shift, rope_base);
}

TokenGrid cross_view_attention(const TokenGrid& grid,
                               const std::vector<ProjectiveMatrix>& view_projs, double rope_base) {
  return run_cross_view(grid, grid, grid, view_projs, rope_base);
}

TokenGrid cross_view_attention_qkv(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                                   const std::vector<ProjectiveMatrix>& view_projs,
                                   double rope_base) {
  return run_cross_view(q, k, v, view_projs, rope_base);
}

}  // namespace semsplat
