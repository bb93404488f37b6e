#pragma once

#include <Eigen/Dense>

#include "semsplat/common.hpp"
#include "semsplat/tensor.hpp"

namespace semsplat {

using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;

// Conventions, used everywhere:
//   - camera frame: x right, y down, z forward (world-to-camera x_c = R*x + t)
//   - image coordinates are resolution-normalized: u,v in [0,1] across the
//     image, pixel (ix,iy) has center ((ix+0.5)/W, (iy+0.5)/H)
//   - intrinsics operate on normalized coordinates (focal lengths ~1, not
//     hundreds of pixels)
struct CameraView {
  Mat3 intrinsics = Mat3::Identity();
  Mat3 rotation = Mat3::Identity();  // world-to-camera
  Vec3 translation = Vec3::Zero();
  int width = 0;
  int height = 0;

  void validate() const;
  Vec3 center() const { return -rotation.transpose() * translation; }
};

// Simple normalized pinhole camera looking down +z from `center`, with fov
// controlled by the normalized focal length.
CameraView make_camera(double fx, double fy, double cx, double cy, const Mat3& rotation,
                       const Vec3& translation, int width, int height);

struct ProjectiveMatrix {
  Mat4 m = Mat4::Identity();
  void validate() const;
};

// [[K R, K t], [0, 1]]
ProjectiveMatrix build_projective(const CameraView& cam);

// p_i * p_j^-1
ProjectiveMatrix relative_transform(const ProjectiveMatrix& p_i, const ProjectiveMatrix& p_j);

struct Projection {
  Vec2 uv;       // normalized image coordinates
  double depth;  // camera-frame z
};

Projection project(const Vec3& point, const CameraView& cam);
Vec3 back_project(const Vec2& uv, double depth, const CameraView& cam);

inline Vec2 pixel_center(int ix, int iy, int width, int height) {
  return Vec2((ix + 0.5) / width, (iy + 0.5) / height);
}

// Bilinear sample of a C x H x W map at normalized coordinates; zero padding
// outside the image.
void sample_bilinear(const Tensor& map, const Vec2& uv, double* out);

// Plane-sweep warp: back-project each reference pixel at `depth`, project into
// the source view, bilinearly sample `source` (C x H' x W'). Out-of-bounds and
// behind-camera pixels get zeros.
Tensor warp_feature(const Tensor& source, const CameraView& cam_ref, const CameraView& cam_src,
                    double depth);

}  // namespace semsplat
