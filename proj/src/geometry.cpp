#include "semsplat/geometry.hpp"

#include <cmath>

namespace semsplat {

void CameraView::validate() const {
  if (width <= 0 || height <= 0) throw ValidationError("CameraView: nonpositive image size");
  Mat3 rtr = rotation.transpose() * rotation;
  if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    throw ValidationError("CameraView: rotation not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > 1e-9)
    throw ValidationError("CameraView: rotation determinant != +1");
  if (intrinsics(0, 0) <= 0 || intrinsics(1, 1) <= 0)
    throw ValidationError("CameraView: nonpositive focal length");
  if (std::abs(intrinsics(1, 0)) > 0 || std::abs(intrinsics(2, 0)) > 0 ||
      std::abs(intrinsics(2, 1)) > 0)
    throw ValidationError("CameraView: intrinsics not upper-triangular");
  if (std::abs(intrinsics(2, 2) - 1.0) > 0)
    throw ValidationError("CameraView: intrinsics(2,2) != 1");
}

CameraView make_camera(double fx, double fy, double cx, double cy, const Mat3& rotation,
                       const Vec3& translation, int width, int height) {
  CameraView cam;
  cam.intrinsics << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  cam.rotation = rotation;
  cam.translation = translation;
  cam.width = width;
  cam.height = height;
  cam.validate();
  return cam;
}

void ProjectiveMatrix::validate() const {
  if (std::abs(m.determinant()) <= 1e-12) throw ValidationError("ProjectiveMatrix: singular");
  if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 0)
    throw ValidationError("ProjectiveMatrix: bottom row != (0,0,0,1)");
}

ProjectiveMatrix build_projective(const CameraView& cam) {
  ProjectiveMatrix p;
  p.m.setIdentity();
  p.m.topLeftCorner<3, 3>() = cam.intrinsics * cam.rotation;
  p.m.topRightCorner<3, 1>() = cam.intrinsics * cam.translation;
  return p;
}

ProjectiveMatrix relative_transform(const ProjectiveMatrix& p_i, const ProjectiveMatrix& p_j) {
  if (std::abs(p_j.m.determinant()) <= 1e-12)
    throw ValidationError("relative_transform: degenerate camera (singular projective matrix)");
  ProjectiveMatrix out;
  out.m = p_i.m * p_j.m.inverse();
  return out;
}

Projection project(const Vec3& point, const CameraView& cam) {
  Vec3 pc = cam.rotation * point + cam.translation;
  if (pc.z() <= 1e-9) throw BehindCameraError("project: point at or behind camera plane");
  Vec3 h = cam.intrinsics * pc;
  return Projection{Vec2(h.x() / h.z(), h.y() / h.z()), pc.z()};
}

Vec3 back_project(const Vec2& uv, double depth, const CameraView& cam) {
  if (!(depth > 0)) throw ValidationError("back_project: nonpositive depth");
  Vec3 ray = cam.intrinsics.inverse() * Vec3(uv.x(), uv.y(), 1.0);
  Vec3 pc = depth * ray;
  return cam.rotation.transpose() * (pc - cam.translation);
}

void sample_bilinear(const Tensor& map, const Vec2& uv, double* out) {
  const int64_t C = map.dim(0), H = map.dim(1), W = map.dim(2);
  double px = uv.x() * static_cast<double>(W) - 0.5;
  double py = uv.y() * static_cast<double>(H) - 0.5;
  int64_t x0 = static_cast<int64_t>(std::floor(px));
  int64_t y0 = static_cast<int64_t>(std::floor(py));
  double ax = px - static_cast<double>(x0);
  double ay = py - static_cast<double>(y0);
  for (int64_t c = 0; c < C; ++c) out[c] = 0.0;
  for (int dy = 0; dy < 2; ++dy) {
    int64_t y = y0 + dy;
    if (y < 0 || y >= H) continue;
    double wy = dy ? ay : 1.0 - ay;
    for (int dx = 0; dx < 2; ++dx) {
      int64_t x = x0 + dx;
      if (x < 0 || x >= W) continue;
      double w = wy * (dx ? ax : 1.0 - ax);
      for (int64_t c = 0; c < C; ++c) out[c] += w * map.at(c, y, x);
    }
  }
}

Tensor warp_feature(const Tensor& source, const CameraView& cam_ref, const CameraView& cam_src,
                    double depth) {
  cam_ref.validate();
  cam_src.validate();
  if (!(depth > 0)) throw ValidationError("warp_feature: nonpositive depth");
  const int64_t C = source.dim(0), H = source.dim(1), W = source.dim(2);
  Tensor out({C, H, W});
  std::vector<double> sample(static_cast<size_t>(C));
  for (int64_t iy = 0; iy < H; ++iy) {
    for (int64_t ix = 0; ix < W; ++ix) {
      Vec2 uv = pixel_center(static_cast<int>(ix), static_cast<int>(iy), static_cast<int>(W),
                             static_cast<int>(H));
      Vec3 p = back_project(uv, depth, cam_ref);
      Vec3 pc = cam_src.rotation * p + cam_src.translation;
      if (pc.z() <= 1e-9) continue;  // behind the source camera: zeros
      Vec3 h = cam_src.intrinsics * pc;
      Vec2 uv_src(h.x() / h.z(), h.y() / h.z());
      if (uv_src.x() < 0 || uv_src.x() > 1 || uv_src.y() < 0 || uv_src.y() > 1) continue;
      sample_bilinear(source, uv_src, sample.data());
      for (int64_t c = 0; c < C; ++c) out.at(c, iy, ix) = sample[static_cast<size_t>(c)];
    }
  }
  return out;
}

}  // namespace semsplat
