#include <random>

#include "doctest.h"
#include "semsplat/attention.hpp"

using namespace semsplat;

namespace {

std::mt19937_64 rng(133);

double uni(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Mat3 random_rotation() {
  Eigen::Quaterniond q(uni(-1, 1), uni(-1, 1), uni(-1, 1), uni(-1, 1));
  q.normalize();
  return q.toRotationMatrix();
}

CameraView random_camera() {
  return make_camera(uni(0.6, 1.8), uni(0.6, 1.8), uni(0.3, 0.7), uni(0.3, 0.7),
                     random_rotation(), Vec3(uni(-1, 1), uni(-1, 1), uni(-1, 1)), 64, 64);
}

MatX random_matrix(int64_t rows, int64_t cols) {
  MatX m(rows, cols);
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) m(i, j) = uni(-1, 1);
  return m;
}

// Literal evaluation with materialized G matrices and generic dense inverses.
MatX dense_gta_oracle(const MatX& q, const MatX& k, const MatX& v,
                      const std::vector<TokenTransform>& qt,
                      const std::vector<TokenTransform>& kt, MatX* weights_out = nullptr) {
  const int64_t nq = q.rows(), nk = k.rows();
  const int d = static_cast<int>(q.cols());
  MatX qp(nq, d), kp(nk, d), vp(nk, d);
  for (int64_t t = 0; t < nq; ++t)
    qp.row(t) = (qt[static_cast<size_t>(t)].materialize().transpose() * q.row(t).transpose())
                    .transpose();
  for (int64_t u = 0; u < nk; ++u) {
    MatX ginv = kt[static_cast<size_t>(u)].materialize().inverse();
    kp.row(u) = (ginv * k.row(u).transpose()).transpose();
    vp.row(u) = (ginv * v.row(u).transpose()).transpose();
  }
  MatX scores = qp * kp.transpose() / std::sqrt(static_cast<double>(d));
  MatX a(nq, nk);
  for (int64_t t = 0; t < nq; ++t) {
    double mx = scores.row(t).maxCoeff(), sum = 0.0;
    for (int64_t u = 0; u < nk; ++u) sum += (a(t, u) = std::exp(scores(t, u) - mx));
    a.row(t) /= sum;
  }
  if (weights_out) *weights_out = a;
  return a * vp;
}

TokenGrid random_grid(int64_t views, int64_t h, int64_t w, int d) {
  TokenGrid g;
  g.embeddings = Tensor({views, h, w, d});
  for (int64_t i = 0; i < g.embeddings.numel(); ++i) g.embeddings[i] = uni(-1, 1);
  return g;
}

}  // namespace

TEST_CASE("rope_matrix at position zero is the identity") {
  MatX m = rope_matrix(0.0, 6);
  CHECK((m - MatX::Identity(6, 6)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rope_matrix position 1, dim 2 is a plain rotation by one radian") {
  MatX m = rope_matrix(1.0, 2);
  MatX expect(2, 2);
  expect << std::cos(1.0), -std::sin(1.0), std::sin(1.0), std::cos(1.0);
  CHECK((m - expect).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("rope_matrix is orthogonal") {
  for (int i = 0; i < 10; ++i) {
    MatX m = rope_matrix(uni(-20, 20), 8);
    CHECK((m.transpose() * m - MatX::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("rope_matrix rejects odd dimension") {
  CHECK_THROWS_AS(rope_matrix(1.0, 3), ValidationError);
}

TEST_CASE("token transform with identity camera at the origin is the identity") {
  ProjectiveMatrix p;  // identity
  TokenTransform g = build_token_transform(0.0, 0.0, p, 16);
  CHECK((g.materialize() - MatX::Identity(16, 16)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("token transform d=8 carries exactly one projective block") {
  ProjectiveMatrix p = build_projective(random_camera());
  MatX g = build_token_transform(0.0, 0.0, p, 8).materialize();
  CHECK((g.block<4, 4>(0, 0) - p.m).cwiseAbs().maxCoeff() == 0.0);
  // rotary half at coords (0,0) is identity
  CHECK((g.block<4, 4>(4, 4) - MatX::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("token transform d=16 matches an explicitly assembled block matrix") {
  ProjectiveMatrix p = build_projective(random_camera());
  const double x = 3.0, y = 5.0;
  const int d = 16;
  MatX expect = MatX::Zero(d, d);
  expect.block<4, 4>(0, 0) = p.m;
  expect.block<4, 4>(4, 4) = p.m;  // I_{d/8} (x) P with d/8 = 2 copies
  expect.block(8, 8, 4, 4) = rope_matrix(x, 4);
  expect.block(12, 12, 4, 4) = rope_matrix(y, 4);
  TokenTransform g = build_token_transform(x, y, p, d);
  CHECK((g.materialize() - expect).cwiseAbs().maxCoeff() <= 1e-15);

  // factored applications agree with the dense matrix
  VecX v = random_matrix(d, 1);
  CHECK((g.apply_transpose(v) - expect.transpose() * v).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((g.apply_inverse(v) - expect.inverse() * v).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("token transform requires d divisible by 8") {
  ProjectiveMatrix p;
  CHECK_THROWS_AS(build_token_transform(0, 0, p, 12), ValidationError);
}

TEST_CASE("gta_attention singleton with identity transform returns V") {
  const int d = 8;
  MatX q = random_matrix(1, d), k = random_matrix(1, d), v = random_matrix(1, d);
  std::vector<TokenTransform> t{TokenTransform::identity(d)};
  MatX o = gta_attention(q, k, v, t);
  CHECK((o - v).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("gta_attention matches the dense oracle on 2 and 8 tokens") {
  for (int n : {2, 8}) {
    const int d = 8;
    MatX q = random_matrix(n, d), k = random_matrix(n, d), v = random_matrix(n, d);
    std::vector<TokenTransform> t;
    for (int i = 0; i < n; ++i)
      t.push_back(build_token_transform(i % 3, i / 3, build_projective(random_camera()), d));
    MatX w_got, w_want;
    MatX got = gta_attention(q, k, v, t, t, &w_got);
    MatX want = dense_gta_oracle(q, k, v, t, t, &w_want);
    CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((w_got - w_want).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("gta_attention rows of the weight matrix sum to 1") {
  const int n = 5, d = 16;
  std::vector<TokenTransform> t;
  for (int i = 0; i < n; ++i)
    t.push_back(build_token_transform(i, 2 * i, build_projective(random_camera()), d));
  MatX w;
  gta_attention(random_matrix(n, d), random_matrix(n, d), random_matrix(n, d), t, t, &w);
  for (int i = 0; i < n; ++i) CHECK(std::abs(w.row(i).sum() - 1.0) <= 1e-9);
}

TEST_CASE("gta_attention rejects non-finite input") {
  const int d = 8;
  MatX q = random_matrix(2, d), k = random_matrix(2, d), v = random_matrix(2, d);
  q(0, 0) = std::numeric_limits<double>::quiet_NaN();
  std::vector<TokenTransform> t{TokenTransform::identity(d), TokenTransform::identity(d)};
  CHECK_THROWS_AS(gta_attention(q, k, v, t), ValidationError);
}

TEST_CASE("attention weights invariant under common rigid world re-basing") {
  const int d = 8;
  CameraView a = random_camera(), b = random_camera();
  Mat3 rw = random_rotation();
  Vec3 tw(uni(-2, 2), uni(-2, 2), uni(-2, 2));
  auto rebased = [&](const CameraView& c) {
    CameraView r = c;
    r.rotation = c.rotation * rw.transpose();
    r.translation = c.translation - r.rotation * tw;
    return r;
  };
  MatX q = random_matrix(4, d), k = random_matrix(4, d), v = random_matrix(4, d);
  auto transforms = [&](const CameraView& c0, const CameraView& c1) {
    std::vector<TokenTransform> t;
    for (int i = 0; i < 4; ++i)
      t.push_back(build_token_transform(i % 2, i / 2, build_projective(i < 2 ? c0 : c1), d));
    return t;
  };
  MatX w_before, w_after;
  auto t0 = transforms(a, b);
  auto t1 = transforms(rebased(a), rebased(b));
  gta_attention(q, k, v, t0, t0, &w_before);
  gta_attention(q, k, v, t1, t1, &w_after);
  CHECK((w_before - w_after).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("windowed_attention with one full window equals gta_attention per view") {
  const int d = 8;
  TokenGrid grid = random_grid(2, 4, 4, d);
  std::vector<ProjectiveMatrix> projs{build_projective(random_camera()),
                                      build_projective(random_camera())};
  TokenGrid out = windowed_attention(grid, projs, 4, 0);
  for (int64_t view = 0; view < 2; ++view) {
    MatX q(16, d);
    std::vector<TokenTransform> t;
    int64_t idx = 0;
    for (int64_t y = 0; y < 4; ++y)
      for (int64_t x = 0; x < 4; ++x, ++idx) {
        for (int c = 0; c < d; ++c) q(idx, c) = grid.embeddings.at(view, y, x, c);
        t.push_back(build_token_transform(static_cast<double>(x), static_cast<double>(y),
                                          projs[static_cast<size_t>(view)], d));
      }
    MatX want = gta_attention(q, q, q, t);
    idx = 0;
    for (int64_t y = 0; y < 4; ++y)
      for (int64_t x = 0; x < 4; ++x, ++idx)
        for (int c = 0; c < d; ++c)
          CHECK(std::abs(out.embeddings.at(view, y, x, c) - want(idx, c)) <= 1e-12);
  }
}

TEST_CASE("windowed_attention shift round trip preserves token positions") {
  // with the window spanning the whole grid, the cyclic shift is a
  // permutation inside one attention set, so the unshifted output must equal
  // the unshifted run
  const int d = 8;
  TokenGrid grid = random_grid(1, 4, 4, d);
  std::vector<ProjectiveMatrix> projs{build_projective(random_camera())};
  TokenGrid plain = windowed_attention(grid, projs, 4, 0);
  TokenGrid shifted = windowed_attention(grid, projs, 4, 2);
  for (int64_t i = 0; i < plain.embeddings.numel(); ++i)
    CHECK(std::abs(plain.embeddings[i] - shifted.embeddings[i]) <= 1e-9);
}

TEST_CASE("windowed_attention 8x8 grid, window 4, shift 2 matches the partition oracle") {
  const int d = 8, H = 8, W = 8, win = 4, shift = 2;
  TokenGrid grid = random_grid(2, H, W, d);
  std::vector<ProjectiveMatrix> projs{build_projective(random_camera()),
                                      build_projective(random_camera())};
  TokenGrid got = windowed_attention(grid, projs, win, shift);

  Tensor want({2, H, W, d});
  for (int64_t view = 0; view < 2; ++view) {
    for (int64_t wy = 0; wy < H / win; ++wy)
      for (int64_t wx = 0; wx < W / win; ++wx) {
        MatX q(win * win, d);
        std::vector<TokenTransform> t;
        std::vector<std::pair<int64_t, int64_t>> origin;
        int64_t idx = 0;
        for (int64_t sy = wy * win; sy < (wy + 1) * win; ++sy)
          for (int64_t sx = wx * win; sx < (wx + 1) * win; ++sx, ++idx) {
            // the rolled grid holds original token (sy+shift, sx+shift)
            int64_t oy = (sy + shift) % H, ox = (sx + shift) % W;
            origin.emplace_back(oy, ox);
            for (int c = 0; c < d; ++c) q(idx, c) = grid.embeddings.at(view, oy, ox, c);
            t.push_back(build_token_transform(static_cast<double>(ox), static_cast<double>(oy),
                                              projs[static_cast<size_t>(view)], d));
          }
        MatX o = dense_gta_oracle(q, q, q, t, t);
        for (int64_t i = 0; i < win * win; ++i)
          for (int c = 0; c < d; ++c)
            want.at(view, origin[static_cast<size_t>(i)].first,
                    origin[static_cast<size_t>(i)].second, c) = o(i, c);
      }
  }
  for (int64_t i = 0; i < want.numel(); ++i)
    CHECK(std::abs(got.embeddings[i] - want[i]) <= 1e-9);
}

TEST_CASE("windowed_attention rejects a window larger than the grid") {
  TokenGrid grid = random_grid(1, 4, 4, 8);
  std::vector<ProjectiveMatrix> projs{ProjectiveMatrix{}};
  CHECK_THROWS_AS(windowed_attention(grid, projs, 8, 0), ValidationError);
}

TEST_CASE("cross_view_attention on two identical 1x1 views reduces to plain attention") {
  // single token per view at coords (0,0) with identity cameras: the output
  // for view 0 is plain softmax attention against view 1's (single) token
  const int d = 8;
  TokenGrid grid = random_grid(2, 1, 1, d);
  std::vector<ProjectiveMatrix> projs{ProjectiveMatrix{}, ProjectiveMatrix{}};
  TokenGrid out = cross_view_attention(grid, projs);
  for (int c = 0; c < d; ++c) {
    CHECK(std::abs(out.embeddings.at(0, 0, 0, c) - grid.embeddings.at(1, 0, 0, c)) <= 1e-12);
    CHECK(std::abs(out.embeddings.at(1, 0, 0, c) - grid.embeddings.at(0, 0, 0, c)) <= 1e-12);
  }
}

TEST_CASE("cross_view_attention N=3 matches the dense cross-view oracle") {
  const int d = 8, H = 2, W = 3, N = 3;
  TokenGrid grid = random_grid(N, H, W, d);
  std::vector<ProjectiveMatrix> projs;
  for (int i = 0; i < N; ++i) projs.push_back(build_projective(random_camera()));
  TokenGrid got = cross_view_attention(grid, projs);

  for (int64_t view = 0; view < N; ++view) {
    MatX q(H * W, d), k((N - 1) * H * W, d), v((N - 1) * H * W, d);
    std::vector<TokenTransform> qt, kt;
    int64_t qi = 0;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x, ++qi) {
        for (int c = 0; c < d; ++c) q(qi, c) = grid.embeddings.at(view, y, x, c);
        qt.push_back(build_token_transform(static_cast<double>(x), static_cast<double>(y),
                                           projs[static_cast<size_t>(view)], d));
      }
    int64_t ki = 0;
    for (int64_t other = 0; other < N; ++other) {
      if (other == view) continue;
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x, ++ki) {
          for (int c = 0; c < d; ++c) {
            k(ki, c) = grid.embeddings.at(other, y, x, c);
            v(ki, c) = grid.embeddings.at(other, y, x, c);
          }
          kt.push_back(build_token_transform(static_cast<double>(x), static_cast<double>(y),
                                             projs[static_cast<size_t>(other)], d));
        }
    }
    MatX want = dense_gta_oracle(q, k, v, qt, kt);
    qi = 0;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x, ++qi)
        for (int c = 0; c < d; ++c)
          CHECK(std::abs(got.embeddings.at(view, y, x, c) - want(qi, c)) <= 1e-9);
  }
}

TEST_CASE("cross_view_attention with a single view passes through unchanged") {
  TokenGrid grid = random_grid(1, 2, 2, 8);
  std::vector<ProjectiveMatrix> projs{build_projective(random_camera())};
  TokenGrid out = cross_view_attention(grid, projs);
  for (int64_t i = 0; i < grid.embeddings.numel(); ++i)
    CHECK(out.embeddings[i] == grid.embeddings[i]);
}

TEST_CASE("degenerate cameras and zero coordinates reduce to plain attention") {
  const int d = 16, n = 4;
  // identity intrinsics and extrinsics make the projective block the
  // identity, so G = I and GTA attention is plain scaled dot-product
  CameraView cam = make_camera(1, 1, 0, 0, Mat3::Identity(), Vec3::Zero(), 8, 8);
  std::vector<TokenTransform> t(static_cast<size_t>(n),
                                build_token_transform(0, 0, build_projective(cam), d));
  MatX q = random_matrix(n, d), k = random_matrix(n, d), v = random_matrix(n, d);
  MatX got = gta_attention(q, k, v, t);

  MatX scores = q * k.transpose() / std::sqrt(static_cast<double>(d));
  MatX a(n, n);
  for (int i = 0; i < n; ++i) {
    double mx = scores.row(i).maxCoeff(), sum = 0.0;
    for (int j = 0; j < n; ++j) sum += (a(i, j) = std::exp(scores(i, j) - mx));
    a.row(i) /= sum;
  }
  CHECK((got - a * v).cwiseAbs().maxCoeff() <= 1e-9);
}
