#include "semsplat/gaussians.hpp"

#include <cmath>
#include <fstream>

#include "semsplat/nn.hpp"

namespace semsplat {

namespace {

double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }
constexpr double kScaleFloor = 1e-4;

Vec4 normalized_quat(const Vec4& raw) {
  Vec4 q = raw;
  double n = q.norm();
  if (n < 1e-8) throw ValidationError("quaternion too close to zero");
  return q / n;
}

Mat3 quat_to_rot(const Vec4& q) {
  double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
      2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
      2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
  return r;
}

}  // namespace

Mat3 covariance_from(const Vec3& scale, const Vec4& quaternion) {
  if (!(scale.minCoeff() > 0)) throw ValidationError("covariance_from: nonpositive scale");
  Vec4 q = normalized_quat(quaternion);
  Mat3 r = quat_to_rot(q);
  Mat3 cov = r * scale.cwiseProduct(scale).asDiagonal() * r.transpose();
  return 0.5 * (cov + cov.transpose());
}

void sh_basis_eval(const Vec3& dir, int basis, double* out) {
  const double x = dir.x(), y = dir.y(), z = dir.z();
  out[0] = 0.28209479177387814;
  if (basis >= 4) {
    const double c1 = 0.4886025119029199;
    out[1] = -c1 * y;
    out[2] = c1 * z;
    out[3] = -c1 * x;
  }
  if (basis >= 9) {
    out[4] = 1.0925484305920792 * x * y;
    out[5] = -1.0925484305920792 * y * z;
    out[6] = 0.31539156525252005 * (2 * z * z - x * x - y * y);
    out[7] = -1.0925484305920792 * x * z;
    out[8] = 0.5462742152960396 * (x * x - y * y);
  }
}

Vec3 sh_eval_color(const double* coeffs, int basis, const Vec3& dir) {
  double b[9];
  sh_basis_eval(dir, basis, b);
  Vec3 rgb = Vec3::Zero();
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < basis; ++k) rgb[c] += coeffs[c * basis + k] * b[k];
  return rgb;
}

double sh_dc_scale() { return 1.0 / 0.28209479177387814; }

void GaussianSet::validate() const {
  const int64_t n = size();
  if (static_cast<int64_t>(opacity.size()) != n ||
      static_cast<int64_t>(color_scale.size()) != n ||
      static_cast<int64_t>(color_rotation.size()) != n ||
      static_cast<int64_t>(sem_scale.size()) != n ||
      static_cast<int64_t>(sem_rotation.size()) != n ||
      static_cast<int64_t>(provenance.size()) != n ||
      static_cast<int64_t>(sh_coeffs.size()) != n * 3 * sh_basis ||
      static_cast<int64_t>(class_logits.size()) != n * num_classes)
    throw ValidationError("GaussianSet: inconsistent array lengths");
  for (int64_t j = 0; j < n; ++j) {
    if (!(opacity[j] >= 0 && opacity[j] <= 1))
      throw ValidationError("GaussianSet: opacity outside [0,1]");
    if (!(color_scale[j].minCoeff() > 0) || !(sem_scale[j].minCoeff() > 0))
      throw ValidationError("GaussianSet: nonpositive scale");
    if (std::abs(color_rotation[j].norm() - 1.0) > 1e-9 ||
        std::abs(sem_rotation[j].norm() - 1.0) > 1e-9)
      throw ValidationError("GaussianSet: non-unit quaternion");
    Eigen::LLT<Mat3> llt_c(covariance_from(color_scale[j], color_rotation[j]));
    Eigen::LLT<Mat3> llt_s(covariance_from(sem_scale[j], sem_rotation[j]));
    if (llt_c.info() != Eigen::Success || llt_s.info() != Eigen::Success)
      throw ValidationError("GaussianSet: covariance not SPD");
  }
}

GaussianSet decode_shared(const std::vector<DepthResult>& depth_results,
                          const std::vector<CameraView>& cams, const NetworkWeights& w) {
  if (depth_results.empty() || depth_results.size() != cams.size())
    throw ValidationError("decode_shared: view count mismatch");
  GaussianSet set;
  for (size_t v = 0; v < depth_results.size(); ++v) {
    const DepthResult& dr = depth_results[v];
    const int64_t H = dr.depth.dim(0), W = dr.depth.dim(1);
    Tensor alpha_logit = conv2d(dr.probs, w.get("opacity.c1.w"), w.get("opacity.c1.b"), 1);
    alpha_logit = leaky_relu(std::move(alpha_logit));
    alpha_logit = conv2d(alpha_logit, w.get("opacity.c2.w"), w.get("opacity.c2.b"), 1);
    Tensor alpha = sigmoid(std::move(alpha_logit));
    for (int64_t iy = 0; iy < H; ++iy)
      for (int64_t ix = 0; ix < W; ++ix) {
        Vec2 uv = pixel_center(static_cast<int>(ix), static_cast<int>(iy), static_cast<int>(W),
                               static_cast<int>(H));
        set.position.push_back(back_project(uv, dr.depth.at(iy, ix), cams[v]));
        set.opacity.push_back(alpha.at(0, iy, ix));
        set.provenance.push_back(
            {static_cast<int32_t>(v), static_cast<int32_t>(iy * W + ix)});
      }
  }
  return set;
}

namespace {

// Shared shape of the two branch heads: 3x3 conv on [image ; features],
// leaky relu, 1x1 conv to the raw parameter stack.
Tensor run_head(const Tensor& image, const Tensor& features, const NetworkWeights& w,
                const std::string& prefix) {
  Tensor x = concat_channels(image, features);
  Tensor h = leaky_relu(conv2d(x, w.get(prefix + ".c1.w"), w.get(prefix + ".c1.b"), 1));
  return conv2d(h, w.get(prefix + ".c2.w"), w.get(prefix + ".c2.b"), 1);
}

}  // namespace

void decode_color_attrs(const Tensor& images, const Tensor& color_features,
                        const NetworkWeights& w, const PipelineConfig& cfg, GaussianSet& out) {
  const int64_t N = images.dim(0), H = images.dim(2), W = images.dim(3);
  const int B = cfg.sh_basis();
  out.sh_basis = B;
  if (out.size() != N * H * W)
    throw ValidationError("decode_color_attrs: set size does not match pixel grid");
  out.color_scale.assign(static_cast<size_t>(out.size()), Vec3::Zero());
  out.color_rotation.assign(static_cast<size_t>(out.size()), Vec4::Zero());
  out.sh_coeffs.assign(static_cast<size_t>(out.size() * 3 * B), 0.0);
  const double dc = sh_dc_scale();
  for (int64_t n = 0; n < N; ++n) {
    Tensor img({3, H, W}), feat({color_features.dim(1), H, W});
    std::copy(images.data() + n * 3 * H * W, images.data() + (n + 1) * 3 * H * W, img.data());
    std::copy(color_features.data() + n * feat.numel(),
              color_features.data() + (n + 1) * feat.numel(), feat.data());
    Tensor raw = run_head(img, feat, w, "colorhead");
    for (int64_t iy = 0; iy < H; ++iy)
      for (int64_t ix = 0; ix < W; ++ix) {
        int64_t j = n * H * W + iy * W + ix;
        double* sh = out.sh_coeffs.data() + j * 3 * B;
        for (int c = 0; c < 3; ++c)
          for (int k = 0; k < B; ++k) {
            sh[c * B + k] = raw.at(c * B + k, iy, ix);
            if (k == 0) sh[c * B + k] += img.at(c, iy, ix) * dc;
          }
        Vec3 scale(raw.at(3 * B + 0, iy, ix), raw.at(3 * B + 1, iy, ix),
                   raw.at(3 * B + 2, iy, ix));
        out.color_scale[static_cast<size_t>(j)] =
            scale.unaryExpr([](double v) { return softplus(v) + kScaleFloor; });
        Vec4 q(1.0 + raw.at(3 * B + 3, iy, ix), raw.at(3 * B + 4, iy, ix),
               raw.at(3 * B + 5, iy, ix), raw.at(3 * B + 6, iy, ix));
        out.color_rotation[static_cast<size_t>(j)] = normalized_quat(q);
      }
  }
}

void decode_semantic_attrs(const Tensor& images, const Tensor& sem_features,
                           const NetworkWeights& w, const PipelineConfig& cfg, GaussianSet& out) {
  const int64_t N = images.dim(0), H = images.dim(2), W = images.dim(3);
  const int K = cfg.num_classes;
  out.num_classes = K;
  if (out.size() != N * H * W)
    throw ValidationError("decode_semantic_attrs: set size does not match pixel grid");
  out.sem_scale.assign(static_cast<size_t>(out.size()), Vec3::Zero());
  out.sem_rotation.assign(static_cast<size_t>(out.size()), Vec4::Zero());
  out.class_logits.assign(static_cast<size_t>(out.size() * K), 0.0);
  for (int64_t n = 0; n < N; ++n) {
    Tensor img({3, H, W}), feat({sem_features.dim(1), H, W});
    std::copy(images.data() + n * 3 * H * W, images.data() + (n + 1) * 3 * H * W, img.data());
    std::copy(sem_features.data() + n * feat.numel(),
              sem_features.data() + (n + 1) * feat.numel(), feat.data());
    Tensor raw = run_head(img, feat, w, "semhead");
    for (int64_t iy = 0; iy < H; ++iy)
      for (int64_t ix = 0; ix < W; ++ix) {
        int64_t j = n * H * W + iy * W + ix;
        double* lg = out.class_logits.data() + j * K;
        for (int k = 0; k < K; ++k) lg[k] = raw.at(k, iy, ix);
        Vec3 scale(raw.at(K + 0, iy, ix), raw.at(K + 1, iy, ix), raw.at(K + 2, iy, ix));
        out.sem_scale[static_cast<size_t>(j)] =
            scale.unaryExpr([](double v) { return softplus(v) + kScaleFloor; });
        Vec4 q(1.0 + raw.at(K + 3, iy, ix), raw.at(K + 4, iy, ix), raw.at(K + 5, iy, ix),
               raw.at(K + 6, iy, ix));
        out.sem_rotation[static_cast<size_t>(j)] = normalized_quat(q);
      }
  }
}

namespace {

void write_floats(std::ofstream& f, const double* src, int64_t count) {
  std::vector<float> buf(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) buf[static_cast<size_t>(i)] = static_cast<float>(src[i]);
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void read_floats(std::ifstream& f, double* dst, int64_t count) {
  std::vector<float> buf(static_cast<size_t>(count));
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw ValidationError("GaussianSet::load: truncated data");
  for (int64_t i = 0; i < count; ++i) dst[i] = buf[static_cast<size_t>(i)];
}

}  // namespace

void GaussianSet::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("GaussianSet::save: cannot open " + path);
  const int64_t n = size();
  f << "SEMSPLAT_GAUSSIANS 1\n";
  f << "count " << n << " classes " << num_classes << " sh_basis " << sh_basis << "\n";
  f << "blocks positions opacities color_scale color_rotation sh sem_scale sem_rotation logits "
       "provenance\nDATA\n";
  for (int64_t j = 0; j < n; ++j) write_floats(f, position[static_cast<size_t>(j)].data(), 3);
  write_floats(f, opacity.data(), n);
  for (int64_t j = 0; j < n; ++j) write_floats(f, color_scale[static_cast<size_t>(j)].data(), 3);
  for (int64_t j = 0; j < n; ++j) write_floats(f, color_rotation[static_cast<size_t>(j)].data(), 4);
  write_floats(f, sh_coeffs.data(), n * 3 * sh_basis);
  for (int64_t j = 0; j < n; ++j) write_floats(f, sem_scale[static_cast<size_t>(j)].data(), 3);
  for (int64_t j = 0; j < n; ++j) write_floats(f, sem_rotation[static_cast<size_t>(j)].data(), 4);
  write_floats(f, class_logits.data(), n * num_classes);
  for (const auto& p : provenance) {
    f.write(reinterpret_cast<const char*>(&p.view), sizeof(int32_t));
    f.write(reinterpret_cast<const char*>(&p.pixel), sizeof(int32_t));
  }
}

GaussianSet GaussianSet::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("GaussianSet::load: cannot open " + path);
  std::string magic, key;
  int version = 0;
  f >> magic >> version;
  if (magic != "SEMSPLAT_GAUSSIANS" || version != 1)
    throw ValidationError("GaussianSet::load: bad header");
  GaussianSet s;
  int64_t n = 0;
  f >> key >> n >> key >> s.num_classes >> key >> s.sh_basis;
  std::string line;
  std::getline(f, line);
  std::getline(f, line);  // blocks line
  std::getline(f, line);
  if (line != "DATA") throw ValidationError("GaussianSet::load: missing DATA marker");
  s.position.resize(static_cast<size_t>(n));
  s.opacity.resize(static_cast<size_t>(n));
  s.color_scale.resize(static_cast<size_t>(n));
  s.color_rotation.resize(static_cast<size_t>(n));
  s.sh_coeffs.resize(static_cast<size_t>(n * 3 * s.sh_basis));
  s.sem_scale.resize(static_cast<size_t>(n));
  s.sem_rotation.resize(static_cast<size_t>(n));
  s.class_logits.resize(static_cast<size_t>(n * s.num_classes));
  s.provenance.resize(static_cast<size_t>(n));
  for (int64_t j = 0; j < n; ++j) read_floats(f, s.position[static_cast<size_t>(j)].data(), 3);
  read_floats(f, s.opacity.data(), n);
  for (int64_t j = 0; j < n; ++j) read_floats(f, s.color_scale[static_cast<size_t>(j)].data(), 3);
  for (int64_t j = 0; j < n; ++j)
    read_floats(f, s.color_rotation[static_cast<size_t>(j)].data(), 4);
  read_floats(f, s.sh_coeffs.data(), n * 3 * s.sh_basis);
  for (int64_t j = 0; j < n; ++j) read_floats(f, s.sem_scale[static_cast<size_t>(j)].data(), 3);
  for (int64_t j = 0; j < n; ++j) read_floats(f, s.sem_rotation[static_cast<size_t>(j)].data(), 4);
  read_floats(f, s.class_logits.data(), n * s.num_classes);
  for (auto& p : s.provenance) {
    f.read(reinterpret_cast<char*>(&p.view), sizeof(int32_t));
    f.read(reinterpret_cast<char*>(&p.pixel), sizeof(int32_t));
  }
  if (!f) throw ValidationError("GaussianSet::load: truncated provenance");
  return s;
}

}  // namespace semsplat
