#include <cstdio>
#include <random>

#include "doctest.h"
#include "semsplat/backbone.hpp"
#include "semsplat/gaussians.hpp"
#include "semsplat/rasterizer.hpp"

using namespace semsplat;

namespace {

std::mt19937_64 rng(401);

double uni(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec4 random_unit_quat() {
  Vec4 q(uni(-1, 1), uni(-1, 1), uni(-1, 1), uni(-1, 1));
  return q / q.norm();
}

PipelineConfig head_cfg() {
  PipelineConfig cfg;
  cfg.d = 16;
  cfg.depth_candidates = 4;
  cfg.window_size = 4;
  cfg.num_classes = 5;
  return cfg;
}

// One uniform DepthResult at constant depth on an H x W grid with L candidates.
DepthResult flat_depth(int64_t h, int64_t w, int64_t l, double depth) {
  DepthResult d;
  d.depth = Tensor({h, w});
  d.depth.fill(depth);
  d.probs = Tensor({l, h, w});
  d.probs.fill(1.0 / static_cast<double>(l));
  return d;
}

}  // namespace

TEST_CASE("covariance_from identity rotation and unit scale is the identity") {
  Mat3 cov = covariance_from(Vec3(1, 1, 1), Vec4(1, 0, 0, 0));
  CHECK((cov - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("covariance_from 90-degree z rotation with scale (2,1,1) is diag(1,4,1)") {
  const double s = std::sqrt(0.5);
  Mat3 cov = covariance_from(Vec3(2, 1, 1), Vec4(s, 0, 0, s));
  Mat3 expect = Vec3(1, 4, 1).asDiagonal();
  CHECK((cov - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("covariance_from is symmetric with eigenvalues equal to squared scales") {
  for (int i = 0; i < 20; ++i) {
    Vec3 scale(uni(0.1, 2), uni(0.1, 2), uni(0.1, 2));
    Mat3 cov = covariance_from(scale, random_unit_quat());
    CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    Vec3 want = scale.cwiseProduct(scale);
    std::sort(want.data(), want.data() + 3);
    CHECK((es.eigenvalues() - want).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(Eigen::LLT<Mat3>(cov).info() == Eigen::Success);
  }
}

TEST_CASE("covariance_from rejects near-zero quaternions and nonpositive scales") {
  CHECK_THROWS_AS(covariance_from(Vec3(1, 1, 1), Vec4(1e-10, 0, 0, 0)), ValidationError);
  CHECK_THROWS_AS(covariance_from(Vec3(0, 1, 1), Vec4(1, 0, 0, 0)), ValidationError);
}

TEST_CASE("sh_basis_eval at the +z direction matches the polynomial values") {
  double b[9];
  sh_basis_eval(Vec3(0, 0, 1), 9, b);
  CHECK(std::abs(b[0] - 0.28209479177387814) <= 1e-15);
  CHECK(b[1] == 0.0);
  CHECK(std::abs(b[2] - 0.4886025119029199) <= 1e-15);
  CHECK(b[3] == 0.0);
  CHECK(b[4] == 0.0);
  CHECK(b[5] == 0.0);
  CHECK(std::abs(b[6] - 0.31539156525252005 * 2.0) <= 1e-15);
  CHECK(b[7] == 0.0);
  CHECK(b[8] == 0.0);
}

TEST_CASE("sh_eval_color matches an explicit basis expansion") {
  double coeffs[12];
  for (double& c : coeffs) c = uni(-1, 1);
  Vec3 dir = Vec3(uni(-1, 1), uni(-1, 1), uni(0.2, 1)).normalized();
  Vec3 got = sh_eval_color(coeffs, 4, dir);
  double b[4];
  sh_basis_eval(dir, 4, b);
  for (int c = 0; c < 3; ++c) {
    double want = 0.0;
    for (int k = 0; k < 4; ++k) want += coeffs[c * 4 + k] * b[k];
    CHECK(std::abs(got[c] - want) <= 1e-15);
  }
}

TEST_CASE("decode_shared with a zeroed opacity head gives alpha 0.5 everywhere") {
  PipelineConfig cfg = head_cfg();
  NetworkWeights w = init_weights(2, cfg);
  for (auto& e : w.entries())
    if (e.name.rfind("opacity.", 0) == 0) e.tensor.fill(0.0);
  CameraView cam = make_camera(1, 1, 0.5, 0.5, Mat3::Identity(), Vec3::Zero(), 8, 8);
  GaussianSet set = decode_shared({flat_depth(8, 8, cfg.depth_candidates, 2.5)}, {cam}, w);
  REQUIRE(set.size() == 64);
  for (double a : set.opacity) CHECK(a == 0.5);
}

TEST_CASE("decode_shared places a planar depth map on the plane") {
  PipelineConfig cfg = head_cfg();
  NetworkWeights w = init_weights(2, cfg);
  Eigen::Quaterniond q(0.9, 0.2, -0.1, 0.3);
  q.normalize();
  CameraView cam = make_camera(1.2, 1.1, 0.5, 0.45, q.toRotationMatrix(), Vec3(0.4, -0.2, 1.0),
                               8, 8);
  const double depth = 2.5;
  GaussianSet set = decode_shared({flat_depth(8, 8, cfg.depth_candidates, depth)}, {cam}, w);
  for (int64_t iy = 0; iy < 8; ++iy)
    for (int64_t ix = 0; ix < 8; ++ix) {
      const Vec3& mu = set.position[static_cast<size_t>(iy * 8 + ix)];
      Projection p = project(mu, cam);
      CHECK(std::abs(p.depth - depth) <= 1e-9);  // all points on the z = depth camera plane
      Vec2 center = pixel_center(static_cast<int>(ix), static_cast<int>(iy), 8, 8);
      CHECK((p.uv - center).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("decode_shared emits one Gaussian per pixel of every view") {
  PipelineConfig cfg = head_cfg();
  NetworkWeights w = init_weights(2, cfg);
  CameraView cam = make_camera(1, 1, 0.5, 0.5, Mat3::Identity(), Vec3::Zero(), 6, 4);
  std::vector<DepthResult> drs{flat_depth(4, 6, cfg.depth_candidates, 2.0),
                               flat_depth(4, 6, cfg.depth_candidates, 3.0)};
  GaussianSet set = decode_shared(drs, {cam, cam}, w);
  CHECK(set.size() == 2 * 4 * 6);
  CHECK(set.provenance.front().view == 0);
  CHECK(set.provenance.back().view == 1);
}

TEST_CASE("decode_color_attrs zero head defaults: floored scales, identity rotation, DC color") {
  PipelineConfig cfg = head_cfg();
  NetworkWeights w = init_weights(2, cfg);
  for (auto& e : w.entries())
    if (e.name.rfind("colorhead.", 0) == 0) e.tensor.fill(0.0);
  const int64_t H = 4, W = 4;
  CameraView cam = make_camera(1, 1, 0.5, 0.5, Mat3::Identity(), Vec3::Zero(), 4, 4);
  GaussianSet set = decode_shared({flat_depth(H, W, cfg.depth_candidates, 2.0)}, {cam}, w);
  Tensor images({1, 3, H, W});
  for (int64_t i = 0; i < images.numel(); ++i) images[i] = uni(0, 1);
  Tensor feats({1, cfg.d, H, W});
  for (int64_t i = 0; i < feats.numel(); ++i) feats[i] = uni(-1, 1);
  decode_color_attrs(images, feats, w, cfg, set);

  const double want_scale = std::log1p(std::exp(0.0)) + 1e-4;  // softplus(0) + floor
  const int B = cfg.sh_basis();
  for (int64_t j = 0; j < set.size(); ++j) {
    CHECK((set.color_scale[static_cast<size_t>(j)] - Vec3::Constant(want_scale))
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
    CHECK((set.color_rotation[static_cast<size_t>(j)] - Vec4(1, 0, 0, 0)).cwiseAbs().maxCoeff() <=
          1e-12);
    // DC-only coefficients evaluate to the input pixel color in any direction
    Vec3 rgb = sh_eval_color(set.sh(j), B, Vec3(0.3, -0.2, 0.9).normalized());
    int64_t iy = j / W, ix = j % W;
    for (int c = 0; c < 3; ++c) CHECK(std::abs(rgb[c] - images.at(0, c, iy, ix)) <= 1e-12);
  }
}

TEST_CASE("decode_semantic_attrs zero head gives the uniform class distribution") {
  PipelineConfig cfg = head_cfg();
  NetworkWeights w = init_weights(2, cfg);
  for (auto& e : w.entries())
    if (e.name.rfind("semhead.", 0) == 0) e.tensor.fill(0.0);
  const int64_t H = 4, W = 4;
  CameraView cam = make_camera(1, 1, 0.5, 0.5, Mat3::Identity(), Vec3::Zero(), 4, 4);
  GaussianSet set = decode_shared({flat_depth(H, W, cfg.depth_candidates, 2.0)}, {cam}, w);
  Tensor images({1, 3, H, W});
  Tensor feats({1, cfg.d, H, W});
  decode_semantic_attrs(images, feats, w, cfg, set);
  // default class count comes from the pipeline config; paper-scale is 20
  CHECK(PipelineConfig{}.num_classes == 20);
  CHECK(set.num_classes == cfg.num_classes);
  std::vector<double> p = class_distribution(set, 0);
  for (double v : p) CHECK(std::abs(v - 1.0 / cfg.num_classes) <= 1e-12);
}

TEST_CASE("decoded attributes pass all type invariants with random weights") {
  PipelineConfig cfg = head_cfg();
  NetworkWeights w = init_weights(77, cfg);
  const int64_t H = 6, W = 6;
  CameraView cam = make_camera(1, 1, 0.5, 0.5, Mat3::Identity(), Vec3::Zero(), 6, 6);
  GaussianSet set = decode_shared({flat_depth(H, W, cfg.depth_candidates, 2.0)}, {cam}, w);
  Tensor images({1, 3, H, W});
  for (int64_t i = 0; i < images.numel(); ++i) images[i] = uni(0, 1);
  Tensor feats({1, cfg.d, H, W});
  for (int64_t i = 0; i < feats.numel(); ++i) feats[i] = uni(-1, 1);
  decode_color_attrs(images, feats, w, cfg, set);
  decode_semantic_attrs(images, feats, w, cfg, set);
  CHECK_NOTHROW(set.validate());
  for (int64_t j = 0; j < set.size(); ++j) {
    CHECK(std::abs(set.color_rotation[static_cast<size_t>(j)].norm() - 1.0) <= 1e-12);
    CHECK(std::abs(set.sem_rotation[static_cast<size_t>(j)].norm() - 1.0) <= 1e-12);
    std::vector<double> p = class_distribution(set, j);
    double sum = 0.0;
    for (double v : p) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("GaussianSet snapshot save/load round trip") {
  PipelineConfig cfg = head_cfg();
  NetworkWeights w = init_weights(8, cfg);
  const int64_t H = 4, W = 4;
  CameraView cam = make_camera(1, 1, 0.5, 0.5, Mat3::Identity(), Vec3::Zero(), 4, 4);
  GaussianSet set = decode_shared({flat_depth(H, W, cfg.depth_candidates, 2.0)}, {cam}, w);
  Tensor images({1, 3, H, W});
  for (int64_t i = 0; i < images.numel(); ++i) images[i] = uni(0, 1);
  Tensor feats({1, cfg.d, H, W});
  for (int64_t i = 0; i < feats.numel(); ++i) feats[i] = uni(-1, 1);
  decode_color_attrs(images, feats, w, cfg, set);
  decode_semantic_attrs(images, feats, w, cfg, set);

  std::string path = std::string(std::getenv("TMPDIR") ? std::getenv("TMPDIR") : "/tmp") +
                     "/semsplat_test_gaussians.bin";
  set.save(path);
  GaussianSet r = GaussianSet::load(path);
  std::remove(path.c_str());
  REQUIRE(r.size() == set.size());
  CHECK(r.num_classes == set.num_classes);
  CHECK(r.sh_basis == set.sh_basis);
  // payload is float32 on disk
  for (int64_t j = 0; j < set.size(); ++j) {
    CHECK((r.position[static_cast<size_t>(j)] - set.position[static_cast<size_t>(j)])
              .cwiseAbs()
              .maxCoeff() <= 1e-5);
    CHECK(std::abs(r.opacity[static_cast<size_t>(j)] - set.opacity[static_cast<size_t>(j)]) <=
          1e-5);
    CHECK(r.provenance[static_cast<size_t>(j)].view == set.provenance[static_cast<size_t>(j)].view);
    CHECK(r.provenance[static_cast<size_t>(j)].pixel ==
          set.provenance[static_cast<size_t>(j)].pixel);
  }
  for (size_t i = 0; i < set.sh_coeffs.size(); ++i)
    CHECK(std::abs(r.sh_coeffs[i] - set.sh_coeffs[i]) <= 1e-5);
  for (size_t i = 0; i < set.class_logits.size(); ++i)
    CHECK(std::abs(r.class_logits[i] - set.class_logits[i]) <= 1e-5);
}
