#include "semsplat/rasterizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "semsplat/common.hpp"

namespace semsplat {

namespace {

Mat2 floor_eigenvalues(const Mat2& cov, double floor) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
  Vec2 ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

std::atomic<uint64_t> g_pass_counter{1};

struct Splat {
  int32_t id;
  double depth;
  Vec2 mean_c, mean_s;          // pixel-space centers (identical; kept per branch)
  Mat2 inv_c, inv_s;            // inverse 2D covariances
  double radius;                // max footprint radius over both branches, px
  double alpha;
  Vec3 color;                   // SH-evaluated, clamped to [0,1]
};

}  // namespace

std::optional<Projected2D> project_gaussian(const Vec3& position, const Mat3& cov3d,
                                            const CameraView& cam, const RasterizeOptions& opt) {
  Vec3 pc = cam.rotation * position + cam.translation;
  if (pc.z() <= opt.near_clip) return std::nullopt;
  Mat3 cam_cov = cam.rotation * cov3d * cam.rotation.transpose();
  // cull when the Gaussian's depth support reaches the camera plane: the EWA
  // linearization of such a Gaussian degenerates and its projected footprint
  // would smear across the whole image. The center-depth / depth-sigma ratio
  // also bounds the Mahalanobis distance of laterally distant pixels, so
  // anything passing this gate stays local on screen.
  if (pc.z() < opt.sigma_cutoff * std::sqrt(cam_cov(2, 2))) return std::nullopt;
  const Mat3& k = cam.intrinsics;
  double z = pc.z(), x = pc.x(), y = pc.y();
  double wscale = static_cast<double>(cam.width), hscale = static_cast<double>(cam.height);
  Vec2 mean((k(0, 0) * x + k(0, 1) * y + k(0, 2) * z) / z * wscale,
            (k(1, 1) * y + k(1, 2) * z) / z * hscale);
  Eigen::Matrix<double, 2, 3> jac;
  jac << k(0, 0) / z * wscale, k(0, 1) / z * wscale,
      -(k(0, 0) * x + k(0, 1) * y) / (z * z) * wscale,
      0.0, k(1, 1) / z * hscale, -k(1, 1) * y / (z * z) * hscale;
  Mat2 cov = jac * cam_cov * jac.transpose();
  cov = 0.5 * (cov + cov.transpose());
  cov = floor_eigenvalues(cov, opt.cov2d_floor);
  return Projected2D{mean, cov, z};
}

RenderOutput rasterize(const GaussianSet& gaussians, const CameraView& cam, int width, int height,
                       const RasterizeOptions& opt) {
  cam.validate();
  CameraView pxcam = cam;
  pxcam.width = width;
  pxcam.height = height;
  const int K = gaussians.num_classes;
  const int64_t n = gaussians.size();

  RenderOutput out;
  RenderedMaps& maps = out.maps;
  maps.width = width;
  maps.height = height;
  maps.num_classes = K;
  maps.rgb = Tensor({3, height, width});
  maps.sem_probs = Tensor({K, height, width});
  maps.depth = Tensor({height, width});
  maps.alpha_acc = Tensor({height, width});
  maps.alpha_color = Tensor({height, width});
  out.record.pass_id = g_pass_counter.fetch_add(1);
  out.record.width = width;
  out.record.height = height;
  out.record.pixels.assign(static_cast<size_t>(width) * height, {});

  // project and cull
  std::vector<Splat> splats;
  std::vector<std::vector<double>> dists;
  splats.reserve(static_cast<size_t>(n));
  for (int64_t j = 0; j < n; ++j) {
    Mat3 cov_c = covariance_from(gaussians.color_scale[static_cast<size_t>(j)],
                                 gaussians.color_rotation[static_cast<size_t>(j)]);
    Mat3 cov_s = covariance_from(gaussians.sem_scale[static_cast<size_t>(j)],
                                 gaussians.sem_rotation[static_cast<size_t>(j)]);
    auto pc = project_gaussian(gaussians.position[static_cast<size_t>(j)], cov_c, pxcam, opt);
    if (!pc) continue;  // behind camera: culled
    auto ps = project_gaussian(gaussians.position[static_cast<size_t>(j)], cov_s, pxcam, opt);
    Splat s;
    s.id = static_cast<int32_t>(j);
    s.depth = pc->depth;
    s.mean_c = pc->mean_px;
    s.mean_s = ps->mean_px;
    s.inv_c = pc->cov.inverse();
    s.inv_s = ps->cov.inverse();
    double lam = std::max(Eigen::SelfAdjointEigenSolver<Mat2>(pc->cov).eigenvalues().maxCoeff(),
                          Eigen::SelfAdjointEigenSolver<Mat2>(ps->cov).eigenvalues().maxCoeff());
    s.radius = opt.sigma_cutoff * std::sqrt(lam);
    s.alpha = gaussians.opacity[static_cast<size_t>(j)];
    Vec3 dir = gaussians.position[static_cast<size_t>(j)] - cam.center();
    double dn = dir.norm();
    dir = dn > 1e-12 ? Vec3(dir / dn) : Vec3(0, 0, 1);
    Vec3 rgb = sh_eval_color(gaussians.sh(j), gaussians.sh_basis, dir);
    s.color = rgb.cwiseMax(0.0).cwiseMin(1.0);
    splats.push_back(s);
  }
  // stable front-to-back order; ties broken by input index
  std::sort(splats.begin(), splats.end(), [](const Splat& a, const Splat& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.id < b.id;
  });

  // tile binning after sorting keeps per-tile lists in composite order
  const int ts = opt.tile_size;
  const int tiles_x = (width + ts - 1) / ts, tiles_y = (height + ts - 1) / ts;
  std::vector<std::vector<int32_t>> tile_lists(static_cast<size_t>(tiles_x) * tiles_y);
  for (size_t si = 0; si < splats.size(); ++si) {
    const Splat& s = splats[si];
    double cx = 0.5 * (s.mean_c.x() + s.mean_s.x());
    double cy = 0.5 * (s.mean_c.y() + s.mean_s.y());
    int tx0 = std::max(0, static_cast<int>(std::floor((cx - s.radius) / ts)));
    int tx1 = std::min(tiles_x - 1, static_cast<int>(std::floor((cx + s.radius) / ts)));
    int ty0 = std::max(0, static_cast<int>(std::floor((cy - s.radius) / ts)));
    int ty1 = std::min(tiles_y - 1, static_cast<int>(std::floor((cy + s.radius) / ts)));
    if (tx1 < 0 || ty1 < 0 || tx0 >= tiles_x || ty0 >= tiles_y) continue;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        tile_lists[static_cast<size_t>(ty) * tiles_x + tx].push_back(static_cast<int32_t>(si));
  }

  std::vector<double> probs_cache;  // per-splat distributions, computed once
  std::vector<double> all_probs(static_cast<size_t>(splats.size()) * K);
  for (size_t si = 0; si < splats.size(); ++si) {
    auto p = class_distribution(gaussians, splats[si].id);
    std::copy(p.begin(), p.end(), all_probs.begin() + static_cast<int64_t>(si) * K);
  }

  parallel_for(static_cast<int64_t>(tile_lists.size()), [&](int64_t tile) {
    const auto& list = tile_lists[static_cast<size_t>(tile)];
    if (list.empty()) return;
    int tx = static_cast<int>(tile % tiles_x), ty = static_cast<int>(tile / tiles_x);
    int px0 = tx * ts, px1 = std::min(width, px0 + ts);
    int py0 = ty * ts, py1 = std::min(height, py0 + ts);
    for (int py = py0; py < py1; ++py) {
      for (int px = px0; px < px1; ++px) {
        Vec2 p(px + 0.5, py + 0.5);
        double t_c = 1.0, t_s = 1.0;
        double depth_num = 0.0;
        auto& rec = out.record.pixels[static_cast<size_t>(py) * width + px];
        for (int32_t si : list) {
          if (t_c < opt.transmittance_eps && t_s < opt.transmittance_eps) break;
          const Splat& s = splats[static_cast<size_t>(si)];
          if (t_c >= opt.transmittance_eps) {
            Vec2 d = p - s.mean_c;
            double power = -0.5 * d.dot(s.inv_c * d);
            if (power > -0.5 * opt.sigma_cutoff * opt.sigma_cutoff) {
              double a = std::min(s.alpha * std::exp(power), opt.alpha_clamp);
              if (a > 1e-7) {
                double w = a * t_c;
                for (int c = 0; c < 3; ++c) maps.rgb.at(c, py, px) += w * s.color[c];
                depth_num += w * s.depth;
                maps.alpha_color.at(py, px) += w;
                t_c *= 1.0 - a;
              }
            }
          }
          if (t_s >= opt.transmittance_eps) {
            Vec2 d = p - s.mean_s;
            double power = -0.5 * d.dot(s.inv_s * d);
            if (power > -0.5 * opt.sigma_cutoff * opt.sigma_cutoff) {
              double a = std::min(s.alpha * std::exp(power), opt.alpha_clamp);
              if (a > 1e-7) {
                double w = a * t_s;
                const double* pr = all_probs.data() + static_cast<int64_t>(si) * K;
                for (int k = 0; k < K; ++k) maps.sem_probs.at(k, py, px) += w * pr[k];
                maps.alpha_acc.at(py, px) += w;
                rec.emplace_back(s.id, w);
                t_s *= 1.0 - a;
              }
            }
          }
        }
        double ac = maps.alpha_color.at(py, px);
        maps.depth.at(py, px) = ac > opt.alpha_floor ? depth_num / ac : 0.0;
      }
    }
  });

  maps.labels = render_label_map(maps.sem_probs, maps.alpha_acc, opt.alpha_floor);
  (void)probs_cache;
  return out;
}

std::vector<int> render_label_map(const Tensor& sem_probs, const Tensor& alpha_acc,
                                  double alpha_floor) {
  const int64_t K = sem_probs.dim(0), H = sem_probs.dim(1), W = sem_probs.dim(2);
  if (alpha_acc.dim(0) != H || alpha_acc.dim(1) != W)
    throw ValidationError("render_label_map: shape mismatch");
  std::vector<int> labels(static_cast<size_t>(H * W), kIgnoreLabel);
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      if (alpha_acc.at(y, x) <= alpha_floor) continue;
      int best = 0;
      double bv = sem_probs.at(0, y, x);
      for (int64_t k = 1; k < K; ++k)
        if (sem_probs.at(k, y, x) > bv) {  // strict: ties keep the lowest index
          bv = sem_probs.at(k, y, x);
          best = static_cast<int>(k);
        }
      labels[static_cast<size_t>(y * W + x)] = best;
    }
  return labels;
}

std::vector<double> class_distribution(const GaussianSet& g, int64_t j) {
  const int K = g.num_classes;
  std::vector<double> p(static_cast<size_t>(K));
  const double* lg = g.logits(j);
  double mx = *std::max_element(lg, lg + K);
  double sum = 0.0;
  for (int k = 0; k < K; ++k) {
    p[static_cast<size_t>(k)] = std::exp(lg[k] - mx);
    sum += p[static_cast<size_t>(k)];
  }
  for (int k = 0; k < K; ++k) p[static_cast<size_t>(k)] /= sum;
  return p;
}

SemanticGradients backprop_semantic(const Tensor& grad_out, const BlendRecord& record,
                                    const RenderOutput& pass, const GaussianSet& gaussians) {
  if (record.pass_id != pass.record.pass_id)
    throw ValidationError("backprop_semantic: stale blend record");
  const int K = gaussians.num_classes;
  const int64_t n = gaussians.size();
  if (grad_out.dim(0) != K || grad_out.dim(1) != record.height || grad_out.dim(2) != record.width)
    throw ValidationError("backprop_semantic: gradient shape mismatch");
  SemanticGradients g;
  g.wrt_probs.assign(static_cast<size_t>(n * K), 0.0);
  g.wrt_logits.assign(static_cast<size_t>(n * K), 0.0);
  for (int64_t y = 0; y < record.height; ++y)
    for (int64_t x = 0; x < record.width; ++x) {
      const auto& rec = record.pixels[static_cast<size_t>(y) * record.width + x];
      for (const auto& [id, w] : rec)
        for (int k = 0; k < K; ++k)
          g.wrt_probs[static_cast<size_t>(id) * K + k] += w * grad_out.at(k, y, x);
    }
  for (int64_t j = 0; j < n; ++j) {
    auto p = class_distribution(gaussians, j);
    const double* gp = g.wrt_probs.data() + j * K;
    double dot = 0.0;
    for (int k = 0; k < K; ++k) dot += gp[k] * p[static_cast<size_t>(k)];
    for (int k = 0; k < K; ++k)
      g.wrt_logits[static_cast<size_t>(j * K + k)] = p[static_cast<size_t>(k)] * (gp[k] - dot);
  }
  return g;
}

}  // namespace semsplat
