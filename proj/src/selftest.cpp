#include "semsplat/selftest.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "semsplat/attention.hpp"
#include "semsplat/io.hpp"
#include "semsplat/losses.hpp"
#include "semsplat/pipeline.hpp"
#include "semsplat/scene.hpp"

namespace semsplat {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

CameraView random_camera(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 axis(u(rng), u(rng), u(rng));
  if (axis.norm() < 1e-6) axis = Vec3::UnitY();
  Mat3 R(Eigen::AngleAxisd(0.3 * u(rng), axis.normalized()));
  return make_camera(1.1 + 0.2 * u(rng), 1.1 + 0.2 * u(rng), 0.5 + 0.05 * u(rng),
                     0.5 + 0.05 * u(rng), R, Vec3(u(rng), u(rng), 0.5 * u(rng)), 64, 64);
}

MatX random_matrix(int64_t rows, int64_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatX m(rows, cols);
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

// Dense reference for GTA attention built from materialized transforms.
MatX dense_gta_oracle(const MatX& Q, const MatX& K, const MatX& V,
                      const std::vector<TokenTransform>& tf) {
  const int64_t n = Q.rows(), d = Q.cols();
  MatX Qp(n, d), Kp(n, d), Vp(n, d);
  for (int64_t t = 0; t < n; ++t) {
    MatX G = tf[static_cast<size_t>(t)].materialize();
    Qp.row(t) = (G.transpose() * Q.row(t).transpose()).transpose();
    Kp.row(t) = (G.inverse() * K.row(t).transpose()).transpose();
    Vp.row(t) = (G.inverse() * V.row(t).transpose()).transpose();
  }
  MatX scores = Qp * Kp.transpose() / std::sqrt(static_cast<double>(d));
  MatX A(n, n);
  for (int64_t i = 0; i < n; ++i) {
    double mx = scores.row(i).maxCoeff();
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      A(i, j) = std::exp(scores(i, j) - mx);
      sum += A(i, j);
    }
    A.row(i) /= sum;
  }
  return A * Vp;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

GaussianSet tiny_scene_gaussians(int K, int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GaussianSet g;
  g.num_classes = K;
  g.sh_basis = 1;
  for (int i = 0; i < n; ++i) {
    g.position.push_back(Vec3(0.4 * u(rng), 0.4 * u(rng), 2.0 + 0.5 * u(rng)));
    g.opacity.push_back(0.7 + 0.2 * u(rng) * 0.2);
    g.color_scale.push_back(Vec3(0.15, 0.15, 0.15));
    g.color_rotation.push_back(Vec4(1, 0, 0, 0));
    for (int c = 0; c < 3; ++c) g.sh_coeffs.push_back(0.5 * (1.0 + u(rng)) * sh_dc_scale());
    g.sem_scale.push_back(Vec3(0.15, 0.15, 0.15));
    g.sem_rotation.push_back(Vec4(1, 0, 0, 0));
    for (int c = 0; c < K; ++c) g.class_logits.push_back(u(rng));
    g.provenance.push_back({0, i});
  }
  return g;
}

CameraView front_camera(int res) {
  return make_camera(1.0, 1.0, 0.5, 0.5, Mat3::Identity(), Vec3::Zero(), res, res);
}

double fd_central(const std::function<double(double)>& f, double x0, double eps) {
  return (f(x0 + eps) - f(x0 - eps)) / (2.0 * eps);
}

double rel_err(double a, double b) {
  double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

}  // namespace

std::vector<CheckResult> run_selftest(bool timing) {
  std::vector<CheckResult> results;
  auto check = [&](const std::string& name, bool pass, const std::string& detail = "") {
    results.push_back({name, pass, detail});
  };

  std::mt19937_64 rng(20240817);

  // Rotary blocks compose additively and stay orthonormal.
  {
    MatX a = rope_matrix(0.7, 8), b = rope_matrix(1.9, 8), ab = rope_matrix(2.6, 8);
    double comp = (a * b - ab).cwiseAbs().maxCoeff();
    double orth = (a * a.transpose() - MatX::Identity(8, 8)).cwiseAbs().maxCoeff();
    check("rope_composition", comp < 1e-12 && orth < 1e-12, fmt(std::max(comp, orth)));
  }

  // Factored transform application matches the dense matrix.
  {
    const int d = 16;
    CameraView cam = random_camera(rng);
    TokenTransform tf = build_token_transform(0.3, 0.8, build_projective(cam), d);
    MatX G = tf.materialize();
    VecX v = random_matrix(d, 1, rng);
    double e1 = (tf.apply_transpose(v) - G.transpose() * v).cwiseAbs().maxCoeff();
    double e2 = (tf.apply_inverse(v) - G.inverse() * v).cwiseAbs().maxCoeff();
    check("token_transform_factored", std::max(e1, e2) < 1e-9, fmt(std::max(e1, e2)));
  }

  // GTA attention against the dense oracle.
  {
    const int d = 16, n = 6;
    MatX Q = random_matrix(n, d, rng), K = random_matrix(n, d, rng), V = random_matrix(n, d, rng);
    std::vector<TokenTransform> tf;
    for (int t = 0; t < n; ++t)
      tf.push_back(build_token_transform(0.25 * t, 0.5 - 0.1 * t,
                                         build_projective(random_camera(rng)), d));
    MatX got = gta_attention(Q, K, V, tf);
    MatX want = dense_gta_oracle(Q, K, V, tf);
    double err = (got - want).cwiseAbs().maxCoeff();
    check("gta_dense_oracle", err < 1e-9, fmt(err));
  }

  // Identity transforms reduce to plain scaled dot-product attention.
  {
    const int d = 16, n = 5;
    MatX Q = random_matrix(n, d, rng), K = random_matrix(n, d, rng), V = random_matrix(n, d, rng);
    std::vector<TokenTransform> tf(n, TokenTransform::identity(d));
    MatX got = gta_attention(Q, K, V, tf);
    MatX scores = Q * K.transpose() / std::sqrt(static_cast<double>(d));
    MatX A(n, n);
    for (int i = 0; i < n; ++i) {
      double mx = scores.row(i).maxCoeff(), sum = 0.0;
      for (int j = 0; j < n; ++j) sum += (A(i, j) = std::exp(scores(i, j) - mx));
      A.row(i) /= sum;
    }
    double err = (got - A * V).cwiseAbs().maxCoeff();
    check("plain_attention_reduction", err < 1e-9, fmt(err));
  }

  // Attention weights unchanged under a common rigid world re-basing.
  {
    const int d = 16, n = 4;
    MatX Q = random_matrix(n, d, rng), K = random_matrix(n, d, rng), V = random_matrix(n, d, rng);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Mat3 Rw(Eigen::AngleAxisd(0.9, Vec3(u(rng), u(rng), u(rng)).normalized()));
    Vec3 tw(u(rng), u(rng), u(rng));
    double err = 0.0;
    for (int rep = 0; rep < 3; ++rep) {
      CameraView c0 = random_camera(rng), c1 = random_camera(rng);
      auto weights_for = [&](const CameraView& a, const CameraView& b) {
        std::vector<TokenTransform> tf = {
            build_token_transform(0.2, 0.4, build_projective(a), d),
            build_token_transform(0.6, 0.1, build_projective(a), d),
            build_token_transform(0.3, 0.9, build_projective(b), d),
            build_token_transform(0.8, 0.5, build_projective(b), d)};
        MatX A;
        gta_attention(Q, K, V, tf, &A);
        return A;
      };
      MatX before = weights_for(c0, c1);
      CameraView r0 = c0, r1 = c1;
      r0.translation = c0.translation - c0.rotation * (Rw.transpose() * tw);
      r0.rotation = c0.rotation * Rw.transpose();
      r1.translation = c1.translation - c1.rotation * (Rw.transpose() * tw);
      r1.rotation = c1.rotation * Rw.transpose();
      MatX after = weights_for(r0, r1);
      err = std::max(err, (before - after).cwiseAbs().maxCoeff());
    }
    check("rigid_rebase_invariance", err < 1e-6, fmt(err));
  }

  // Projection round trip.
  {
    CameraView cam = random_camera(rng);
    double err = 0.0;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 32; ++i) {
      Vec3 p = cam.center() + cam.rotation.transpose() * Vec3(u(rng), u(rng), 2.0 + u(rng));
      Projection pr = project(p, cam);
      err = std::max(err, (back_project(pr.uv, pr.depth, cam) - p).norm());
    }
    check("project_backproject_roundtrip", err < 1e-9, fmt(err));
  }

  // Inverse-depth uniform candidates.
  {
    DepthCandidates c = sample_candidates(0.5, 15.0, 16);
    double err = 0.0;
    for (size_t i = 1; i + 1 < c.values.size(); ++i)
      err = std::max(err, std::abs((1.0 / c.values[i - 1] - 1.0 / c.values[i]) -
                                   (1.0 / c.values[i]) + 1.0 / c.values[i + 1]));
    bool endpoints = std::abs(c.values.front() - 0.5) < 1e-12 &&
                     std::abs(c.values.back() - 15.0) < 1e-12;
    check("inverse_depth_candidates", err < 1e-12 && endpoints, fmt(err));
  }

  // Softmax expectation depth regression on a peaked volume.
  {
    DepthCandidates c = sample_candidates(1.0, 8.0, 8);
    Tensor logits({8, 2, 2});
    for (int64_t y = 0; y < 2; ++y)
      for (int64_t x = 0; x < 2; ++x) logits.at(5, y, x) = 40.0;
    DepthResult r = regress_depth(logits, c);
    double err = std::abs(r.depth.at(0, 0) - c.values[5]);
    check("depth_regression_peak", err < 1e-9, fmt(err));
  }

  // Single-Gaussian center alpha and compositing permutation invariance.
  {
    GaussianSet g = tiny_scene_gaussians(3, 8, 99);
    CameraView cam = front_camera(48);
    RenderOutput a = rasterize(g, cam, 48, 48);
    GaussianSet perm = g;
    // reverse the gaussian order
    for (int64_t j = 0; j < g.size(); ++j) {
      int64_t k = g.size() - 1 - j;
      perm.position[j] = g.position[k];
      perm.opacity[j] = g.opacity[k];
      perm.color_scale[j] = g.color_scale[k];
      perm.color_rotation[j] = g.color_rotation[k];
      perm.sem_scale[j] = g.sem_scale[k];
      perm.sem_rotation[j] = g.sem_rotation[k];
      perm.provenance[j] = g.provenance[k];
      for (int c = 0; c < 3; ++c) perm.sh_coeffs[j * 3 + c] = g.sh_coeffs[k * 3 + c];
      for (int c = 0; c < 3; ++c) perm.class_logits[j * 3 + c] = g.class_logits[k * 3 + c];
    }
    RenderOutput b = rasterize(perm, cam, 48, 48);
    double err = 0.0;
    for (int64_t i = 0; i < a.maps.rgb.numel(); ++i)
      err = std::max(err, std::abs(a.maps.rgb[i] - b.maps.rgb[i]));
    for (int64_t i = 0; i < a.maps.sem_probs.numel(); ++i)
      err = std::max(err, std::abs(a.maps.sem_probs[i] - b.maps.sem_probs[i]));
    check("rasterize_permutation_invariance", err < 1e-9, fmt(err));

    double sumerr = 0.0;
    for (int64_t y = 0; y < 48; ++y)
      for (int64_t x = 0; x < 48; ++x) {
        double s = 0.0;
        for (int64_t k = 0; k < 3; ++k) s += a.maps.sem_probs.at(k, y, x);
        sumerr = std::max(sumerr, std::abs(s - a.maps.alpha_acc.at(y, x)));
      }
    check("sem_probs_sum_alpha", sumerr < 1e-9, fmt(sumerr));
  }

  // Hand-checkable loss values.
  {
    LabelMap gt;
    gt.width = 1;
    gt.height = 1;
    gt.num_classes = 2;
    gt.labels = {0};
    Tensor p({2, 1, 1});
    p.at(0, 0, 0) = 0.5;
    p.at(1, 0, 0) = 0.5;
    double err = std::abs(sem_ce(gt, p).value + std::log(0.5));
    check("ce_half_prob", err < 1e-9, fmt(err));
  }

  // Metrics sanity: identical maps give perfect scores.
  {
    LabelMap m;
    m.width = 4;
    m.height = 4;
    m.num_classes = 3;
    m.labels.assign(16, 0);
    for (int i = 0; i < 16; ++i) m.labels[static_cast<size_t>(i)] = i % 3;
    SegmentationMetrics sm = segmentation_metrics(m, m, 3);
    check("metrics_identity", std::abs(sm.miou - 1.0) < 1e-12 && std::abs(sm.acc - 1.0) < 1e-12,
          fmt(sm.miou));
  }

  // Bundle round trip through the on-disk formats.
  {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "semsplat_selftest_bundle";
    SyntheticScene scene = generate_room(3, 4, 2, 32, 3);
    SceneBundle bundle;
    bundle.cameras = scene.cameras;
    bundle.images = scene.gt_rgb;
    bundle.labels = scene.gt_labels;
    bundle.depths = scene.gt_depth;
    bundle.class_names = scene.class_names;
    bundle.near = scene.near;
    bundle.far = scene.far;
    save_bundle(bundle, dir.string());
    SceneBundle back = load_bundle(dir.string());
    bool ok = back.cameras.size() == bundle.cameras.size();
    double err = 0.0;
    for (size_t v = 0; ok && v < back.cameras.size(); ++v) {
      for (int64_t i = 0; i < back.images[v].numel(); ++i) {
        double q = std::round(bundle.images[v][i] * 255.0) / 255.0;  // quantized original
        err = std::max(err, std::abs(back.images[v][i] - q));
      }
      ok = ok && back.labels[v].labels == bundle.labels[v].labels;
    }
    fs::remove_all(dir);
    check("bundle_roundtrip", ok && err < 1e-12, fmt(err));
  }

  // Small end-to-end forward: Gaussian count and determinism.
  {
    PipelineConfig cfg;
    cfg.d = 16;
    cfg.depth_candidates = 8;
    cfg.num_classes = 4;
    cfg.window_size = 4;
    cfg.seed = 11;
    NetworkWeights w = init_weights(cfg.seed, cfg);
    const int res = 16;
    Tensor images({2, 3, res, res});
    std::mt19937_64 r2(5);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int64_t i = 0; i < images.numel(); ++i) images[i] = u01(r2);
    std::vector<CameraView> cams = {front_camera(res),
                                    make_camera(1.0, 1.0, 0.5, 0.5, Mat3::Identity(),
                                                Vec3(-0.3, 0, 0), res, res)};
    ForwardResult a = forward(images, cams, cfg, w);
    ForwardResult b = forward(images, cams, cfg, w);
    bool count_ok = a.gaussians.size() == 2 * res * res;
    double err = 0.0;
    for (int64_t j = 0; j < a.gaussians.size(); ++j) {
      err = std::max(err, (a.gaussians.position[static_cast<size_t>(j)] -
                           b.gaussians.position[static_cast<size_t>(j)]).norm());
      err = std::max(err, std::abs(a.gaussians.opacity[static_cast<size_t>(j)] -
                                   b.gaussians.opacity[static_cast<size_t>(j)]));
    }
    check("forward_count_determinism", count_ok && err == 0.0, fmt(err));
  }

  if (timing) {
    PipelineConfig cfg;
    cfg.d = 128;
    cfg.depth_candidates = 32;
    cfg.num_classes = 20;
    cfg.seed = 3;
    NetworkWeights w = init_weights(cfg.seed, cfg);
    const int res = 64;
    Tensor images({2, 3, res, res});
    std::mt19937_64 r2(7);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int64_t i = 0; i < images.numel(); ++i) images[i] = u01(r2);
    std::vector<CameraView> cams = {front_camera(res),
                                    make_camera(1.0, 1.0, 0.5, 0.5, Mat3::Identity(),
                                                Vec3(-0.3, 0, 0), res, res)};
    auto t0 = Clock::now();
    ForwardResult fr = forward(images, cams, cfg, w);
    render_novel(fr.gaussians, cams[0], res, res);
    double dt = seconds_since(t0);
    check("timing_forward_render_64", dt < 5.0, fmt(dt) + " s (budget 5 s)");
  }

  return results;
}

std::vector<GradCheckReport> run_gradcheck() {
  std::vector<GradCheckReport> reports;
  std::mt19937_64 rng(424242);
  std::uniform_real_distribution<double> u01(0.05, 1.0);

  const int K = 3, H = 5, W = 4;
  LabelMap gt;
  gt.width = W;
  gt.height = H;
  gt.num_classes = K;
  gt.labels.resize(static_cast<size_t>(H * W));
  for (auto& l : gt.labels) l = static_cast<int>(rng() % K);
  gt.labels[3] = kIgnoreLabel;

  Tensor probs({K, H, W});
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      double sum = 0.0;
      for (int64_t c = 0; c < K; ++c) sum += (probs.at(c, y, x) = u01(rng));
      for (int64_t c = 0; c < K; ++c) probs.at(c, y, x) /= sum;
    }

  // sem_ce: analytic vs central differences on every entry.
  {
    GradCheckReport r{"sem_ce", 0.0, 1e-6};
    LossValue lv = sem_ce(gt, probs);
    for (int64_t i = 0; i < probs.numel(); ++i) {
      Tensor p = probs;
      auto f = [&](double v) {
        p[i] = v;
        return sem_ce(gt, p).value;
      };
      double fd = fd_central(f, probs[i], 1e-6);
      if (std::abs(fd) > 1e-12 || std::abs(lv.grad[i]) > 1e-12)
        r.max_rel_err = std::max(r.max_rel_err, rel_err(fd, lv.grad[i]));
    }
    reports.push_back(r);
  }

  // color_mse.
  {
    GradCheckReport r{"color_mse", 0.0, 1e-6};
    Tensor a({3, H, W}), b({3, H, W});
    for (int64_t i = 0; i < a.numel(); ++i) {
      a[i] = u01(rng);
      b[i] = u01(rng);
    }
    LossValue lv = color_mse(a, b);
    for (int64_t i = 0; i < b.numel(); ++i) {
      Tensor p = b;
      auto f = [&](double v) {
        p[i] = v;
        return color_mse(a, p).value;
      };
      r.max_rel_err = std::max(r.max_rel_err, rel_err(fd_central(f, b[i], 1e-6), lv.grad[i]));
    }
    reports.push_back(r);
  }

  // regional smoothness; random continuous values keep us away from ties.
  {
    GradCheckReport r{"regional_smoothness", 0.0, 1e-6};
    LossValue lv = regional_smoothness(gt, probs);
    for (int64_t i = 0; i < probs.numel(); ++i) {
      Tensor p = probs;
      auto f = [&](double v) {
        p[i] = v;
        return regional_smoothness(gt, p).value;
      };
      double fd = fd_central(f, probs[i], 1e-7);
      if (std::abs(fd) > 1e-12 || std::abs(lv.grad[i]) > 1e-12)
        r.max_rel_err = std::max(r.max_rel_err, rel_err(fd, lv.grad[i]));
    }
    reports.push_back(r);
  }

  // Rendered semantic objective: analytic logit gradient vs FD.
  {
    GradCheckReport r{"semantic_objective", 0.0, 1e-4};
    GaussianSet g = tiny_scene_gaussians(K, 6, 31);
    SupervisedView view;
    view.camera = front_camera(16);
    RenderOutput pass = rasterize(g, view.camera, 16, 16);
    view.labels.width = 16;
    view.labels.height = 16;
    view.labels.num_classes = K;
    view.labels.labels = pass.maps.labels;
    std::vector<SupervisedView> views = {view};
    LossConfig cfg;
    std::vector<double> grad;
    semantic_objective(g, views, cfg, &grad);
    for (size_t idx : {size_t(0), size_t(4), size_t(7), size_t(11), size_t(16)}) {
      GaussianSet p = g;
      auto f = [&](double v) {
        p.class_logits[idx] = v;
        return semantic_objective(p, views, cfg);
      };
      double fd = fd_central(f, g.class_logits[idx], 1e-5);
      if (std::abs(fd) > 1e-10 || std::abs(grad[idx]) > 1e-10)
        r.max_rel_err = std::max(r.max_rel_err, rel_err(fd, grad[idx]));
    }
    reports.push_back(r);
  }

  // backprop_semantic against FD of a linear functional of sem_probs.
  {
    GradCheckReport r{"backprop_semantic", 0.0, 1e-5};
    GaussianSet g = tiny_scene_gaussians(K, 6, 77);
    CameraView cam = front_camera(16);
    RenderOutput pass = rasterize(g, cam, 16, 16);
    Tensor grad_out({K, 16, 16});
    for (int64_t i = 0; i < grad_out.numel(); ++i) grad_out[i] = u01(rng);
    SemanticGradients sg = backprop_semantic(grad_out, pass.record, pass, g);
    auto objective = [&](const GaussianSet& s) {
      RenderOutput p2 = rasterize(s, cam, 16, 16);
      double total = 0.0;
      for (int64_t i = 0; i < grad_out.numel(); ++i) total += grad_out[i] * p2.maps.sem_probs[i];
      return total;
    };
    for (size_t idx : {size_t(1), size_t(5), size_t(9), size_t(14)}) {
      GaussianSet p = g;
      auto f = [&](double v) {
        p.class_logits[idx] = v;
        return objective(p);
      };
      double fd = fd_central(f, g.class_logits[idx], 1e-5);
      if (std::abs(fd) > 1e-10 || std::abs(sg.wrt_logits[idx]) > 1e-10)
        r.max_rel_err = std::max(r.max_rel_err, rel_err(fd, sg.wrt_logits[idx]));
    }
    reports.push_back(r);
  }

  return reports;
}

}  // namespace semsplat
