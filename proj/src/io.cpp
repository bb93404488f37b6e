#include "semsplat/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace semsplat {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("missing file: " + path);
  return f;
}

// PNM header token reader; skips whitespace and '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      while ((c = in.peek()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(in.get()));
      return tok;
    }
  }
  throw ValidationError("truncated PNM header");
}

struct PnmHeader {
  std::string magic;
  int64_t width = 0, height = 0, maxval = 0;
};

PnmHeader read_pnm_header(std::istream& in, const std::string& expect_magic) {
  PnmHeader h;
  h.magic = pnm_token(in);
  if (h.magic != expect_magic)
    throw ValidationError("bad PNM magic: got " + h.magic + ", want " + expect_magic);
  h.width = std::stoll(pnm_token(in));
  h.height = std::stoll(pnm_token(in));
  h.maxval = std::stoll(pnm_token(in));
  if (h.width <= 0 || h.height <= 0) throw ValidationError("bad PNM dimensions");
  in.get();  // single whitespace byte before the raster
  return h;
}

uint8_t quantize8(double v) {
  double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<uint8_t>(q);
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& rgb) {
  if (rgb.ndim() != 3 || rgb.dim(0) != 3) throw ValidationError("write_ppm: expected 3 x H x W");
  const int64_t H = rgb.dim(1), W = rgb.dim(2);
  auto f = open_out(path);
  f << "P6\n" << W << " " << H << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(W) * 3);
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x)
      for (int64_t c = 0; c < 3; ++c)
        row[static_cast<size_t>(x) * 3 + static_cast<size_t>(c)] = quantize8(rgb.at(c, y, x));
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw ValidationError("write_ppm: write failed: " + path);
}

Tensor read_ppm(const std::string& path) {
  auto f = open_in(path);
  PnmHeader h = read_pnm_header(f, "P6");
  if (h.maxval != 255) throw ValidationError("read_ppm: only maxval 255 supported");
  Tensor rgb({3, h.height, h.width});
  std::vector<uint8_t> row(static_cast<size_t>(h.width) * 3);
  for (int64_t y = 0; y < h.height; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!f) throw ValidationError("read_ppm: truncated raster: " + path);
    for (int64_t x = 0; x < h.width; ++x)
      for (int64_t c = 0; c < 3; ++c)
        rgb.at(c, y, x) = row[static_cast<size_t>(x) * 3 + static_cast<size_t>(c)] / 255.0;
  }
  return rgb;
}

void write_label_pgm(const std::string& path, const LabelMap& labels) {
  labels.validate();
  auto f = open_out(path);
  f << "P5\n" << labels.width << " " << labels.height << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(labels.width));
  for (int64_t y = 0; y < labels.height; ++y) {
    for (int64_t x = 0; x < labels.width; ++x) {
      int v = labels.at(y, x);
      row[static_cast<size_t>(x)] = v == kIgnoreLabel ? 255 : static_cast<uint8_t>(v);
    }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw ValidationError("write_label_pgm: write failed: " + path);
}

LabelMap read_label_pgm(const std::string& path, int num_classes) {
  auto f = open_in(path);
  PnmHeader h = read_pnm_header(f, "P5");
  if (h.maxval != 255) throw ValidationError("read_label_pgm: expected 8-bit PGM");
  LabelMap m;
  m.width = static_cast<int>(h.width);
  m.height = static_cast<int>(h.height);
  m.num_classes = num_classes;
  m.labels.resize(static_cast<size_t>(h.width * h.height));
  std::vector<uint8_t> raw(m.labels.size());
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!f) throw ValidationError("read_label_pgm: truncated raster: " + path);
  for (size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == 255) {
      m.labels[i] = kIgnoreLabel;
    } else {
      if (raw[i] >= num_classes)
        throw ValidationError("read_label_pgm: label " + std::to_string(int(raw[i])) +
                              " out of range for K=" + std::to_string(num_classes));
      m.labels[i] = raw[i];
    }
  }
  m.validate();
  return m;
}

void write_depth_pgm(const std::string& path, const Tensor& depth) {
  if (depth.ndim() != 2) throw ValidationError("write_depth_pgm: expected H x W");
  const int64_t H = depth.dim(0), W = depth.dim(1);
  auto f = open_out(path);
  f << "P5\n" << W << " " << H << "\n65535\n";
  std::vector<uint8_t> row(static_cast<size_t>(W) * 2);
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      double d = depth.at(y, x);
      uint16_t q = 0;
      if (std::isfinite(d) && d > 0)
        q = static_cast<uint16_t>(std::clamp(std::round(d * kDepthScale), 1.0, 65535.0));
      // 16-bit PGM samples are big-endian
      row[static_cast<size_t>(x) * 2] = static_cast<uint8_t>(q >> 8);
      row[static_cast<size_t>(x) * 2 + 1] = static_cast<uint8_t>(q & 0xff);
    }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw ValidationError("write_depth_pgm: write failed: " + path);
}

Tensor read_depth_pgm(const std::string& path) {
  auto f = open_in(path);
  PnmHeader h = read_pnm_header(f, "P5");
  if (h.maxval != 65535) throw ValidationError("read_depth_pgm: expected 16-bit PGM");
  Tensor depth({h.height, h.width});
  std::vector<uint8_t> row(static_cast<size_t>(h.width) * 2);
  for (int64_t y = 0; y < h.height; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!f) throw ValidationError("read_depth_pgm: truncated raster: " + path);
    for (int64_t x = 0; x < h.width; ++x) {
      uint16_t q = static_cast<uint16_t>((row[static_cast<size_t>(x) * 2] << 8) |
                                         row[static_cast<size_t>(x) * 2 + 1]);
      depth.at(y, x) = q == 0 ? 0.0 : q / kDepthScale;
    }
  }
  return depth;
}

void save_bundle(const SceneBundle& bundle, const std::string& dir) {
  const size_t n = bundle.cameras.size();
  if (bundle.images.size() != n || bundle.labels.size() != n || bundle.depths.size() != n)
    throw ValidationError("save_bundle: per-view array length mismatch");
  fs::create_directories(dir);
  json manifest;
  manifest["class_names"] = bundle.class_names;
  manifest["near"] = bundle.near;
  manifest["far"] = bundle.far;
  manifest["views"] = json::array();
  for (size_t i = 0; i < n; ++i) {
    const CameraView& cam = bundle.cameras[i];
    cam.validate();
    if (bundle.images[i].dim(1) != cam.height || bundle.images[i].dim(2) != cam.width ||
        bundle.labels[i].height != cam.height || bundle.labels[i].width != cam.width ||
        bundle.depths[i].dim(0) != cam.height || bundle.depths[i].dim(1) != cam.width)
      throw ValidationError("save_bundle: view " + std::to_string(i) + " dimension mismatch");
    Eigen::Quaterniond q(cam.rotation);
    std::string stem = "view_" + std::to_string(i);
    json v;
    v["intrinsics"] = {cam.intrinsics(0, 0), cam.intrinsics(1, 1), cam.intrinsics(0, 2),
                       cam.intrinsics(1, 2), cam.intrinsics(0, 1)};
    v["rotation"] = {q.w(), q.x(), q.y(), q.z()};
    v["translation"] = {cam.translation.x(), cam.translation.y(), cam.translation.z()};
    v["width"] = cam.width;
    v["height"] = cam.height;
    v["image"] = stem + ".ppm";
    v["labels"] = stem + "_labels.pgm";
    v["depth"] = stem + "_depth.pgm";
    manifest["views"].push_back(v);
    write_ppm((fs::path(dir) / (stem + ".ppm")).string(), bundle.images[i]);
    write_label_pgm((fs::path(dir) / (stem + "_labels.pgm")).string(), bundle.labels[i]);
    write_depth_pgm((fs::path(dir) / (stem + "_depth.pgm")).string(), bundle.depths[i]);
  }
  auto f = open_out((fs::path(dir) / "manifest.json").string());
  f << manifest.dump(2) << "\n";
}

SceneBundle load_bundle(const std::string& dir) {
  auto f = open_in((fs::path(dir) / "manifest.json").string());
  json manifest;
  try {
    f >> manifest;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("load_bundle: bad manifest: ") + e.what());
  }
  SceneBundle b;
  try {
    b.class_names = manifest.at("class_names").get<std::vector<std::string>>();
    b.near = manifest.at("near").get<double>();
    b.far = manifest.at("far").get<double>();
    for (const auto& v : manifest.at("views")) {
      auto kvec = v.at("intrinsics").get<std::vector<double>>();
      if (kvec.size() < 4) throw ValidationError("load_bundle: intrinsics need fx fy cx cy");
      auto qvec = v.at("rotation").get<std::vector<double>>();
      if (qvec.size() != 4) throw ValidationError("load_bundle: rotation needs 4 components");
      Eigen::Quaterniond q(qvec[0], qvec[1], qvec[2], qvec[3]);
      if (std::abs(q.norm() - 1.0) > 1e-6)
        throw ValidationError("load_bundle: non-unit quaternion");
      auto tvec = v.at("translation").get<std::vector<double>>();
      if (tvec.size() != 3) throw ValidationError("load_bundle: translation needs 3 components");
      CameraView cam;
      cam.intrinsics = Mat3::Identity();
      cam.intrinsics(0, 0) = kvec[0];
      cam.intrinsics(1, 1) = kvec[1];
      cam.intrinsics(0, 2) = kvec[2];
      cam.intrinsics(1, 2) = kvec[3];
      if (kvec.size() > 4) cam.intrinsics(0, 1) = kvec[4];
      cam.rotation = q.normalized().toRotationMatrix();
      cam.translation = Vec3(tvec[0], tvec[1], tvec[2]);
      cam.width = v.at("width").get<int>();
      cam.height = v.at("height").get<int>();
      cam.validate();

      Tensor img = read_ppm((fs::path(dir) / v.at("image").get<std::string>()).string());
      LabelMap labels =
          read_label_pgm((fs::path(dir) / v.at("labels").get<std::string>()).string(),
                         static_cast<int>(b.class_names.size()));
      Tensor depth = read_depth_pgm((fs::path(dir) / v.at("depth").get<std::string>()).string());
      if (img.dim(1) != cam.height || img.dim(2) != cam.width || labels.height != cam.height ||
          labels.width != cam.width || depth.dim(0) != cam.height || depth.dim(1) != cam.width)
        throw ValidationError("load_bundle: file dimensions disagree with manifest");
      b.cameras.push_back(cam);
      b.images.push_back(std::move(img));
      b.labels.push_back(std::move(labels));
      b.depths.push_back(std::move(depth));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("load_bundle: bad manifest: ") + e.what());
  }
  return b;
}

}  // namespace semsplat
