#include <random>

#include "doctest.h"
#include "semsplat/backbone.hpp"
#include "semsplat/depth.hpp"
#include "semsplat/scene.hpp"

using namespace semsplat;

namespace {

std::mt19937_64 rng(301);

double uni(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Tensor random_features(std::vector<int64_t> shape) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = uni(-1, 1);
  return t;
}

}  // namespace

TEST_CASE("sample_candidates rejects a degenerate range") {
  CHECK_THROWS_AS(sample_candidates(1.0, 1.0, 8), ValidationError);
  CHECK_THROWS_AS(sample_candidates(0.0, 2.0, 8), ValidationError);
  CHECK_THROWS_AS(sample_candidates(1.0, 2.0, 1), ValidationError);
}

TEST_CASE("sample_candidates near=1 far=4 L=3 gives inverse-depth nodes {1, 1.6, 4}") {
  DepthCandidates c = sample_candidates(1.0, 4.0, 3);
  REQUIRE(c.count() == 3);
  CHECK(c.values[0] == 1.0);
  CHECK(std::abs(c.values[1] - 1.6) <= 1e-12);
  CHECK(c.values[2] == 4.0);
}

TEST_CASE("default candidate count is 128") {
  PipelineConfig cfg;
  CHECK(cfg.depth_candidates == 128);
  CHECK(sample_candidates(cfg.near, cfg.far, cfg.depth_candidates).count() == 128);
}

TEST_CASE("candidates are strictly increasing and pinned to the range") {
  DepthCandidates c = sample_candidates(0.5, 15.0, 64);
  CHECK(c.values.front() == 0.5);
  CHECK(c.values.back() == 15.0);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("cost volume with identical cameras and features is the mean squared feature") {
  const int64_t C = 4, H = 6, W = 6;
  CameraView cam = make_camera(1, 1, 0.5, 0.5, Mat3::Identity(), Vec3::Zero(), 6, 6);
  Tensor feats({2, C, H, W});
  Tensor one = random_features({C, H, W});
  std::copy(one.data(), one.data() + one.numel(), feats.data());
  std::copy(one.data(), one.data() + one.numel(), feats.data() + one.numel());
  DepthCandidates cand = sample_candidates(1.0, 4.0, 5);
  CostVolume vol = build_cost_volume(feats, {cam, cam}, cand, 0);
  for (int64_t m = 0; m < 5; ++m)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        double expect = 0.0;
        for (int64_t c = 0; c < C; ++c) expect += one.at(c, y, x) * one.at(c, y, x);
        expect /= static_cast<double>(C);
        CHECK(std::abs(vol.corr.at(m, y, x) - expect) <= 1e-12);
      }
}

TEST_CASE("cost volume argmax picks the candidate nearest the plane depth") {
  PlanePair pair = textured_plane_pair(3.0, 0.3, 64, 9);
  // patchwise NCC descriptors make the correlation a normalized match score
  const int patch = 7;
  Tensor f0 = ncc_patch_features(pair.images[0], patch);
  Tensor f1 = ncc_patch_features(pair.images[1], patch);
  Tensor feats({2, f0.dim(0), 64, 64});
  std::copy(f0.data(), f0.data() + f0.numel(), feats.data());
  std::copy(f1.data(), f1.data() + f1.numel(), feats.data() + f0.numel());
  DepthCandidates cand = sample_candidates(1.0, 9.0, 16);
  CostVolume vol = build_cost_volume(feats, pair.cameras, cand, 0);

  int64_t nearest = 0;
  for (int64_t m = 1; m < cand.count(); ++m)
    if (std::abs(cand.values[static_cast<size_t>(m)] - 3.0) <
        std::abs(cand.values[static_cast<size_t>(nearest)] - 3.0))
      nearest = m;
  const int margin = 8;
  int64_t total = 0, good = 0;
  for (int64_t y = margin; y < 64 - margin; ++y)
    for (int64_t x = margin; x < 64 - margin; ++x) {
      int64_t best = 0;
      for (int64_t m = 1; m < cand.count(); ++m)
        if (vol.corr.at(m, y, x) > vol.corr.at(best, y, x)) best = m;
      ++total;
      if (best == nearest) ++good;
    }
  CHECK(static_cast<double>(good) / static_cast<double>(total) >= 0.95);
}

TEST_CASE("cost volume with zero source features is zero") {
  const int64_t C = 3, H = 4, W = 4;
  CameraView cam0 = make_camera(1, 1, 0.5, 0.5, Mat3::Identity(), Vec3::Zero(), 4, 4);
  CameraView cam1 = make_camera(1, 1, 0.5, 0.5, Mat3::Identity(), Vec3(-0.1, 0, 0), 4, 4);
  Tensor feats({2, C, H, W});
  Tensor ref = random_features({C, H, W});
  std::copy(ref.data(), ref.data() + ref.numel(), feats.data());  // source view stays zero
  CostVolume vol = build_cost_volume(feats, {cam0, cam1}, sample_candidates(1, 4, 3), 0);
  for (int64_t i = 0; i < vol.corr.numel(); ++i) CHECK(vol.corr[i] == 0.0);
}

TEST_CASE("cost volume needs at least two views") {
  Tensor feats({1, 2, 4, 4});
  CameraView cam = make_camera(1, 1, 0.5, 0.5, Mat3::Identity(), Vec3::Zero(), 4, 4);
  CHECK_THROWS_AS(build_cost_volume(feats, {cam}, sample_candidates(1, 4, 3), 0),
                  ValidationError);
}

TEST_CASE("cost volume invariant under common rigid world re-basing") {
  const int64_t C = 3, H = 8, W = 8;
  CameraView cam0 = make_camera(1, 1, 0.5, 0.5, Mat3::Identity(), Vec3::Zero(), 8, 8);
  CameraView cam1 = make_camera(1, 1, 0.5, 0.5, Mat3::Identity(), Vec3(-0.2, 0.05, 0), 8, 8);
  Tensor feats = random_features({2, C, H, W});
  DepthCandidates cand = sample_candidates(1.0, 6.0, 4);
  CostVolume before = build_cost_volume(feats, {cam0, cam1}, cand, 0);

  Eigen::Quaterniond qw(0.9, 0.1, -0.3, 0.2);
  qw.normalize();
  Mat3 rw = qw.toRotationMatrix();
  Vec3 tw(1.0, -0.4, 0.6);
  std::vector<CameraView> rebased{cam0, cam1};
  for (auto& c : rebased) {
    c.rotation = c.rotation * rw.transpose();
    c.translation = c.translation - c.rotation * tw;
  }
  CostVolume after = build_cost_volume(feats, rebased, cand, 0);
  for (int64_t i = 0; i < before.corr.numel(); ++i)
    CHECK(std::abs(before.corr[i] - after.corr[i]) <= 1e-6);
}

TEST_CASE("refine_volume shape contract and skip-only identity") {
  PipelineConfig cfg;
  cfg.d = 16;
  cfg.depth_candidates = 6;
  cfg.window_size = 4;
  NetworkWeights w = init_weights(5, cfg);
  CostVolume vol;
  vol.corr = random_features({6, 8, 8});
  Tensor feats = random_features({16, 8, 8});
  Tensor out = refine_volume(vol, feats, w);
  CHECK(out.shape() == std::vector<int64_t>({6, 8, 8}));

  for (auto& e : w.entries())
    if (e.name.rfind("unet.", 0) == 0) e.tensor.fill(0.0);
  Tensor identity = refine_volume(vol, feats, w);
  for (int64_t i = 0; i < identity.numel(); ++i) CHECK(identity[i] == vol.corr[i]);
}

TEST_CASE("refine_volume derivative is consistent across finite-difference steps") {
  PipelineConfig cfg;
  cfg.d = 16;
  cfg.depth_candidates = 4;
  cfg.window_size = 4;
  NetworkWeights w = init_weights(5, cfg);
  CostVolume vol;
  vol.corr = random_features({4, 6, 6});
  Tensor feats = random_features({16, 6, 6});
  auto probe = [&](double delta) {
    NetworkWeights wp = w;
    wp.get("unet.enc1.w")[0] += delta;
    Tensor out = refine_volume(vol, feats, wp);
    double s = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) s += out[i];
    return s;
  };
  const double h = 1e-4;
  double g1 = (probe(h) - probe(-h)) / (2 * h);
  double g2 = (probe(h / 2) - probe(-h / 2)) / h;
  CHECK(std::abs(g1 - g2) <= 1e-3 * std::max(1.0, std::abs(g2)));
}

TEST_CASE("regress_depth one-hot logits select that candidate") {
  DepthCandidates cand = sample_candidates(1.0, 4.0, 3);
  Tensor logits({3, 1, 1});
  logits.at(1, 0, 0) = 1e4;
  DepthResult r = regress_depth(logits, cand);
  CHECK(std::abs(r.depth.at(0, 0) - cand.values[1]) <= 1e-12);
}

TEST_CASE("regress_depth uniform logits over {1,2,4} give 7/3") {
  DepthCandidates cand;
  cand.near = 1.0;
  cand.far = 4.0;
  cand.values = {1.0, 2.0, 4.0};
  Tensor logits({3, 2, 2});  // all zero: uniform
  DepthResult r = regress_depth(logits, cand);
  for (int64_t i = 0; i < 4; ++i) CHECK(std::abs(r.depth[i] - 7.0 / 3.0) <= 1e-12);
}

TEST_CASE("regress_depth probabilities sum to 1 and depth stays in the candidate hull") {
  DepthCandidates cand = sample_candidates(0.5, 15.0, 8);
  Tensor logits = random_features({8, 5, 5});
  for (int64_t i = 0; i < logits.numel(); ++i) logits[i] *= 4.0;
  DepthResult r = regress_depth(logits, cand);
  for (int64_t y = 0; y < 5; ++y)
    for (int64_t x = 0; x < 5; ++x) {
      double sum = 0.0;
      for (int64_t m = 0; m < 8; ++m) {
        CHECK(r.probs.at(m, y, x) >= 0.0);
        sum += r.probs.at(m, y, x);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-6);
      CHECK(r.depth.at(y, x) >= cand.values.front());
      CHECK(r.depth.at(y, x) <= cand.values.back());
    }
}

TEST_CASE("regress_depth rejects non-finite logits") {
  DepthCandidates cand = sample_candidates(1.0, 4.0, 3);
  Tensor logits({3, 1, 1});
  logits[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(regress_depth(logits, cand), ValidationError);
}

TEST_CASE("raw photometric depth recovers the plane within 2% on 90% of interior pixels") {
  PlanePair pair = textured_plane_pair(3.0, 0.3, 64, 4);
  DepthCandidates cand = sample_candidates(0.5, 15.0, 64);
  DepthResult r = raw_feature_depth(pair.images, pair.cameras, cand, 0);
  const int margin = 8;
  int64_t total = 0, good = 0;
  for (int64_t y = margin; y < 64 - margin; ++y)
    for (int64_t x = margin; x < 64 - margin; ++x) {
      ++total;
      if (std::abs(r.depth.at(y, x) - 3.0) / 3.0 <= 0.02) ++good;
    }
  CHECK(static_cast<double>(good) / static_cast<double>(total) >= 0.90);
}
