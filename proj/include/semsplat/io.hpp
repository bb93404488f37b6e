#pragma once

#include <string>
#include <vector>

#include "semsplat/geometry.hpp"
#include "semsplat/losses.hpp"
#include "semsplat/tensor.hpp"

namespace semsplat {

// Image codecs. Images are doubles in [0,1] (3 x H x W), labels are int maps
// with 255 = ignore on disk, depth is 16-bit PGM (big-endian per the PGM
// spec), value = depth * 1000, 0 = invalid.
void write_ppm(const std::string& path, const Tensor& rgb);
Tensor read_ppm(const std::string& path);

void write_label_pgm(const std::string& path, const LabelMap& labels);
LabelMap read_label_pgm(const std::string& path, int num_classes);

void write_depth_pgm(const std::string& path, const Tensor& depth);
Tensor read_depth_pgm(const std::string& path);

constexpr double kDepthScale = 1000.0;

struct SceneBundle {
  std::vector<CameraView> cameras;
  std::vector<Tensor> images;
  std::vector<LabelMap> labels;
  std::vector<Tensor> depths;
  std::vector<std::string> class_names;
  double near = 0.5, far = 15.0;
};

// Bundle directory: manifest.json plus one PPM/PGM triple per view.
void save_bundle(const SceneBundle& bundle, const std::string& dir);
SceneBundle load_bundle(const std::string& dir);

}  // namespace semsplat
