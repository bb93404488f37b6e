#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "semsplat/io.hpp"
#include "semsplat/scene.hpp"

using namespace semsplat;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("semsplat_io_" + tag + "_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::mt19937_64 rng(601);

// image whose channels are exact k/255 values, so the 8-bit codec is lossless
Tensor quantized_image(int h, int w) {
  Tensor t({3, h, w});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(rng() % 256) / 255.0;
  return t;
}

LabelMap random_labels(int h, int w, int k) {
  LabelMap m;
  m.width = w;
  m.height = h;
  m.num_classes = k;
  m.labels.resize(static_cast<size_t>(h) * w);
  for (auto& l : m.labels) l = rng() % 6 == 0 ? kIgnoreLabel : static_cast<int>(rng() % k);
  return m;
}

// depths on the exact 1/1000 grid the 16-bit codec stores
Tensor quantized_depth(int h, int w) {
  Tensor t({h, w});
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = rng() % 10 == 0 ? 0.0 : static_cast<double>(1 + rng() % 20000) / kDepthScale;
  return t;
}

SceneBundle small_bundle() {
  SceneBundle b;
  b.class_names = {"floor", "wall", "box"};
  b.near = 0.4;
  b.far = 12.0;
  for (int i = 0; i < 2; ++i) {
    Eigen::Quaterniond q(0.9, 0.1 * i, 0.2, -0.1);
    q.normalize();
    b.cameras.push_back(make_camera(1.1, 0.9, 0.48, 0.52, q.toRotationMatrix(),
                                    Vec3(0.2 * i, -0.1, 0.3), 8, 6));
    b.images.push_back(quantized_image(6, 8));
    b.labels.push_back(random_labels(6, 8, 3));
    b.depths.push_back(quantized_depth(6, 8));
  }
  return b;
}

}  // namespace

TEST_CASE("PPM round trip is lossless on the 8-bit grid") {
  TempDir dir("ppm");
  Tensor img = quantized_image(5, 7);
  write_ppm(dir.file("a.ppm"), img);
  Tensor back = read_ppm(dir.file("a.ppm"));
  REQUIRE(back.shape() == img.shape());
  for (int64_t i = 0; i < img.numel(); ++i) CHECK(back[i] == img[i]);
}

TEST_CASE("write_ppm clamps out-of-range values instead of wrapping") {
  TempDir dir("clamp");
  Tensor img({3, 1, 2});
  img.at(0, 0, 0) = -0.4;
  img.at(1, 0, 1) = 1.7;
  write_ppm(dir.file("c.ppm"), img);
  Tensor back = read_ppm(dir.file("c.ppm"));
  CHECK(back.at(0, 0, 0) == 0.0);
  CHECK(back.at(1, 0, 1) == 1.0);
}

TEST_CASE("label PGM round trip preserves labels and the ignore marker") {
  TempDir dir("labels");
  LabelMap m = random_labels(9, 4, 5);
  m.labels[3] = kIgnoreLabel;
  write_label_pgm(dir.file("l.pgm"), m);
  LabelMap back = read_label_pgm(dir.file("l.pgm"), 5);
  CHECK(back.width == 4);
  CHECK(back.height == 9);
  CHECK(back.labels == m.labels);
}

TEST_CASE("read_label_pgm rejects labels outside the class range") {
  TempDir dir("range");
  LabelMap m;
  m.width = 2;
  m.height = 1;
  m.num_classes = 8;
  m.labels = {7, 0};
  write_label_pgm(dir.file("l.pgm"), m);
  CHECK_THROWS_AS(read_label_pgm(dir.file("l.pgm"), 6), ValidationError);
  CHECK(read_label_pgm(dir.file("l.pgm"), 8).labels == m.labels);
}

TEST_CASE("depth PGM stores millimeters: 2.5 maps to sample 2500 exactly") {
  TempDir dir("depth");
  Tensor d({1, 2});
  d.at(0, 0) = 2.5;
  d.at(0, 1) = 0.0;  // invalid stays invalid
  write_depth_pgm(dir.file("d.pgm"), d);

  std::ifstream f(dir.file("d.pgm"), std::ios::binary);
  std::string magic, w, h, maxval;
  f >> magic >> w >> h >> maxval;
  f.get();
  CHECK(magic == "P5");
  CHECK(maxval == "65535");
  uint8_t hi = static_cast<uint8_t>(f.get()), lo = static_cast<uint8_t>(f.get());
  CHECK((hi << 8 | lo) == 2500);

  Tensor back = read_depth_pgm(dir.file("d.pgm"));
  CHECK(back.at(0, 0) == 2.5);
  CHECK(back.at(0, 1) == 0.0);
}

TEST_CASE("depth PGM round trip is lossless on the millimeter grid") {
  TempDir dir("depthrt");
  Tensor d = quantized_depth(6, 6);
  write_depth_pgm(dir.file("d.pgm"), d);
  Tensor back = read_depth_pgm(dir.file("d.pgm"));
  for (int64_t i = 0; i < d.numel(); ++i) CHECK(back[i] == d[i]);
}

TEST_CASE("bundle save/load round trip") {
  TempDir dir("bundle");
  SceneBundle b = small_bundle();
  save_bundle(b, dir.path.string());
  SceneBundle r = load_bundle(dir.path.string());
  CHECK(r.class_names == b.class_names);
  CHECK(r.near == b.near);
  CHECK(r.far == b.far);
  REQUIRE(r.cameras.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK((r.cameras[i].intrinsics - b.cameras[i].intrinsics).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((r.cameras[i].rotation - b.cameras[i].rotation).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((r.cameras[i].translation - b.cameras[i].translation).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(r.cameras[i].width == b.cameras[i].width);
    CHECK(r.cameras[i].height == b.cameras[i].height);
    for (int64_t j = 0; j < b.images[i].numel(); ++j) CHECK(r.images[i][j] == b.images[i][j]);
    CHECK(r.labels[i].labels == b.labels[i].labels);
    for (int64_t j = 0; j < b.depths[i].numel(); ++j) CHECK(r.depths[i][j] == b.depths[i][j]);
  }
}

TEST_CASE("load_bundle reports distinct errors for distinct corruptions") {
  SceneBundle b = small_bundle();

  std::string missing_msg, dims_msg, quat_msg;
  {
    TempDir dir("missing");
    save_bundle(b, dir.path.string());
    fs::remove(dir.file("view_0.ppm"));
    try {
      load_bundle(dir.path.string());
      FAIL("expected a ValidationError for the missing image");
    } catch (const ValidationError& e) {
      missing_msg = e.what();
    }
  }
  {
    TempDir dir("dims");
    save_bundle(b, dir.path.string());
    nlohmann::json manifest;
    std::ifstream(dir.file("manifest.json")) >> manifest;
    manifest["views"][0]["width"] = 9;  // disagrees with the PPM on disk
    std::ofstream(dir.file("manifest.json")) << manifest.dump(2);
    try {
      load_bundle(dir.path.string());
      FAIL("expected a ValidationError for the width mismatch");
    } catch (const ValidationError& e) {
      dims_msg = e.what();
    }
  }
  {
    TempDir dir("quat");
    save_bundle(b, dir.path.string());
    nlohmann::json manifest;
    std::ifstream(dir.file("manifest.json")) >> manifest;
    manifest["views"][1]["rotation"] = {0.5, 0.5, 0.5, 0.1};  // not a unit quaternion
    std::ofstream(dir.file("manifest.json")) << manifest.dump(2);
    try {
      load_bundle(dir.path.string());
      FAIL("expected a ValidationError for the bad rotation");
    } catch (const ValidationError& e) {
      quat_msg = e.what();
    }
  }
  CHECK(!missing_msg.empty());
  CHECK(missing_msg != dims_msg);
  CHECK(dims_msg != quat_msg);
  CHECK(quat_msg != missing_msg);
}

TEST_CASE("save_bundle rejects mismatched per-view arrays") {
  TempDir dir("mismatch");
  SceneBundle b = small_bundle();
  b.depths.pop_back();
  CHECK_THROWS_AS(save_bundle(b, dir.path.string()), ValidationError);
}
