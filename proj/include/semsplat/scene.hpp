#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semsplat/gaussians.hpp"
#include "semsplat/losses.hpp"
#include "semsplat/tensor.hpp"

namespace semsplat {

struct SceneObject {
  int cls = 0;
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Zero();
  bool ellipsoid = false;
};

// Procedural labeled scene. Supervision maps are rendered from the ground
// truth Gaussians themselves, so a renderer fed the gt set reproduces them up
// to compositing.
struct SyntheticScene {
  GaussianSet gaussians;
  std::vector<CameraView> cameras;
  std::vector<Tensor> gt_rgb;      // 3 x H x W per camera
  std::vector<LabelMap> gt_labels;
  std::vector<Tensor> gt_depth;    // H x W per camera
  std::vector<std::string> class_names;
  std::vector<SceneObject> objects;
  uint64_t seed = 0;
  double near = 0.5, far = 15.0;
};

// Axis-aligned room (floor class 0, walls class 1) plus boxes/ellipsoids with
// classes 2..K-1, surfaced with Gaussian surfels; cameras on an inward arc.
SyntheticScene generate_room(uint64_t seed, int num_classes, int n_objects, int resolution,
                             int n_cameras = 6);

// Two fronto-parallel views of a textured plane at depth `depth`, second
// camera offset laterally by `baseline`. Ground-truth depth is constant.
struct PlanePair {
  std::vector<CameraView> cameras;
  std::vector<Tensor> images;  // 3 x H x W each
  double plane_depth = 0.0;
  Tensor gt_depth;
  // analytic texture lookup at a world point on the plane
  double tex_spacing = 0.0;
  uint64_t seed = 0;
};

PlanePair textured_plane_pair(double depth, double baseline, int resolution, uint64_t seed = 0);

// The analytic plane color at normalized image coords of a given pair camera.
Vec3 plane_color_at(const PlanePair& pair, int cam_index, const Vec2& uv);

}  // namespace semsplat
