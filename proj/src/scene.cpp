#include "semsplat/scene.hpp"

#include <cmath>
#include <random>

#include "semsplat/rasterizer.hpp"

namespace semsplat {

namespace {

Vec4 quat_from_frame(const Vec3& t1, const Vec3& t2, const Vec3& n) {
  Mat3 r;
  r.col(0) = t1;
  r.col(1) = t2;
  r.col(2) = n;
  Eigen::Quaterniond q(r);
  q.normalize();
  return Vec4(q.w(), q.x(), q.y(), q.z());
}

void orthonormal_tangents(const Vec3& n, Vec3& t1, Vec3& t2) {
  Vec3 a = std::abs(n.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  t1 = n.cross(a).normalized();
  t2 = n.cross(t1).normalized();
}

struct SceneBuilder {
  GaussianSet set;
  int num_classes;
  int sh_basis;

  void add_surfel(const Vec3& pos, const Vec3& normal, double sigma_t, double sigma_n,
                  const Vec3& color, int cls, double opacity) {
    Vec3 t1, t2;
    orthonormal_tangents(normal, t1, t2);
    Vec4 q = quat_from_frame(t1, t2, normal);
    set.position.push_back(pos);
    set.opacity.push_back(opacity);
    set.color_scale.push_back(Vec3(sigma_t, sigma_t, sigma_n));
    set.color_rotation.push_back(q);
    for (int c = 0; c < 3; ++c) {
      set.sh_coeffs.push_back(std::clamp(color[c], 0.0, 1.0) * sh_dc_scale());
      for (int k = 1; k < sh_basis; ++k) set.sh_coeffs.push_back(0.0);
    }
    set.sem_scale.push_back(Vec3(sigma_t, sigma_t, sigma_n));
    set.sem_rotation.push_back(q);
    for (int k = 0; k < num_classes; ++k) set.class_logits.push_back(k == cls ? 12.0 : 0.0);
    set.provenance.push_back({0, static_cast<int32_t>(set.position.size() - 1)});
  }
};

const Vec3 kPalette[] = {
    {0.55, 0.40, 0.25}, {0.75, 0.75, 0.70}, {0.80, 0.20, 0.20}, {0.20, 0.60, 0.85},
    {0.20, 0.70, 0.30}, {0.85, 0.70, 0.20}, {0.60, 0.30, 0.70}, {0.90, 0.50, 0.30},
};

Vec3 class_color(int cls) { return kPalette[cls % 8]; }

CameraView look_at(const Vec3& eye, const Vec3& target, int res) {
  Vec3 forward = (target - eye).normalized();
  Vec3 right = Vec3(0, 1, 0).cross(forward).normalized();
  Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = forward;
  return make_camera(1.0, 1.0, 0.5, 0.5, r, -r * eye, res, res);
}

}  // namespace

SyntheticScene generate_room(uint64_t seed, int num_classes, int n_objects, int resolution,
                             int n_cameras) {
  if (num_classes < 2) throw ValidationError("generate_room: need K >= 2");
  if (resolution < 32) throw ValidationError("generate_room: need resolution >= 32");
  if (n_cameras < 3) throw ValidationError("generate_room: need >= 3 cameras");
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  SyntheticScene scene;
  scene.seed = seed;
  SceneBuilder b;
  b.num_classes = num_classes;
  b.sh_basis = 4;
  b.set.num_classes = num_classes;
  b.set.sh_basis = 4;

  const double spacing = std::max(0.06, 0.1 * 64.0 / resolution);
  const double sigma_t = 0.7 * spacing, sigma_n = 0.15 * spacing;
  const double opacity = 0.95;

  auto jitter = [&](const Vec3& c) {
    return Vec3(std::clamp(c.x() + uni(-0.08, 0.08), 0.0, 1.0),
                std::clamp(c.y() + uni(-0.08, 0.08), 0.0, 1.0),
                std::clamp(c.z() + uni(-0.08, 0.08), 0.0, 1.0));
  };

  auto cover_plane = [&](const Vec3& origin, const Vec3& du, const Vec3& dv, double len_u,
                         double len_v, const Vec3& normal, int cls) {
    int nu = static_cast<int>(len_u / spacing), nv = static_cast<int>(len_v / spacing);
    for (int iu = 0; iu <= nu; ++iu)
      for (int iv = 0; iv <= nv; ++iv) {
        Vec3 p = origin + du * (iu * len_u / nu) + dv * (iv * len_v / nv);
        b.add_surfel(p, normal, sigma_t, sigma_n, jitter(class_color(cls)), cls, opacity);
      }
  };

  // room shell: floor (class 0), walls + ceiling (class 1)
  cover_plane({-2, 1.2, 0.2}, {1, 0, 0}, {0, 0, 1}, 4.0, 6.0, {0, -1, 0}, 0);
  cover_plane({-2, -1.0, 0.2}, {1, 0, 0}, {0, 0, 1}, 4.0, 6.0, {0, 1, 0}, 1 % num_classes);
  cover_plane({-2, -1.0, 6.2}, {1, 0, 0}, {0, 1, 0}, 4.0, 2.2, {0, 0, -1}, 1 % num_classes);
  cover_plane({-2, -1.0, 0.2}, {0, 0, 1}, {0, 1, 0}, 6.0, 2.2, {1, 0, 0}, 1 % num_classes);
  cover_plane({2, -1.0, 0.2}, {0, 0, 1}, {0, 1, 0}, 6.0, 2.2, {-1, 0, 0}, 1 % num_classes);

  // objects, non-overlapping axis-aligned placements with bounded retries
  for (int i = 0; i < n_objects; ++i) {
    int cls = num_classes > 2 ? 2 + i % (num_classes - 2) : 1;
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      SceneObject obj;
      obj.cls = cls;
      obj.half_extents = Vec3(uni(0.2, 0.4), uni(0.2, 0.4), uni(0.2, 0.4));
      obj.center = Vec3(uni(-1.3, 1.3), uni(0.1, 0.8), uni(2.5, 5.2));
      obj.ellipsoid = (i % 2 == 1);
      bool ok = true;
      for (const auto& other : scene.objects) {
        Vec3 gap = (obj.center - other.center).cwiseAbs() -
                   (obj.half_extents + other.half_extents + Vec3(0.1, 0.1, 0.1));
        if (gap.maxCoeff() < 0) ok = false;
      }
      if (!ok) continue;
      scene.objects.push_back(obj);
      placed = true;
    }
    if (!placed) throw ValidationError("generate_room: infeasible object placement");
  }
  for (const auto& obj : scene.objects) {
    const Vec3& c = obj.center;
    const Vec3& h = obj.half_extents;
    if (obj.ellipsoid) {
      double area = 4 * M_PI * std::pow((h.x() * h.y() + h.y() * h.z() + h.x() * h.z()) / 3, 1.0);
      int count = std::max(64, static_cast<int>(area / (spacing * spacing)));
      for (int i = 0; i < count; ++i) {
        // fibonacci sphere
        double z = 1.0 - 2.0 * (i + 0.5) / count;
        double phi = i * 2.399963229728653;
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        Vec3 dir(r * std::cos(phi), r * std::sin(phi), z);
        Vec3 p = c + dir.cwiseProduct(h);
        Vec3 n = Vec3(dir.x() / h.x(), dir.y() / h.y(), dir.z() / h.z()).normalized();
        b.add_surfel(p, n, sigma_t, sigma_n, jitter(class_color(obj.cls)), obj.cls, opacity);
      }
    } else {
      for (int axis = 0; axis < 3; ++axis)
        for (int side = -1; side <= 1; side += 2) {
          Vec3 n = Vec3::Zero();
          n[axis] = side;
          int u = (axis + 1) % 3, v = (axis + 2) % 3;
          Vec3 du = Vec3::Zero(), dv = Vec3::Zero();
          du[u] = 1;
          dv[v] = 1;
          Vec3 origin = c + n.cwiseProduct(h) - du * h[u] - dv * h[v];
          cover_plane(origin, du, dv, 2 * h[u], 2 * h[v], n, obj.cls);
        }
    }
  }

  scene.gaussians = std::move(b.set);
  scene.class_names.push_back("floor");
  if (num_classes > 1) scene.class_names.push_back("wall");
  for (int k = 2; k < num_classes; ++k)
    scene.class_names.push_back("object" + std::to_string(k));

  Vec3 target(0, 0.25, 4.0);
  for (int i = 0; i < n_cameras; ++i) {
    double s = n_cameras > 1 ? static_cast<double>(i) / (n_cameras - 1) - 0.5 : 0.0;
    double phi = s * 0.6;
    Vec3 eye(2.2 * std::sin(phi), -0.1 + 0.15 * s, 0.5 + 0.4 * (1 - std::cos(phi)));
    scene.cameras.push_back(look_at(eye, target, resolution));
  }

  for (const auto& cam : scene.cameras) {
    RenderOutput out = rasterize(scene.gaussians, cam, resolution, resolution);
    scene.gt_rgb.push_back(out.maps.rgb);
    LabelMap lm;
    lm.labels = out.maps.labels;
    lm.width = resolution;
    lm.height = resolution;
    lm.num_classes = num_classes;
    scene.gt_labels.push_back(std::move(lm));
    scene.gt_depth.push_back(out.maps.depth);
  }
  return scene;
}

namespace {

// C1 value noise on a regular grid.
struct ValueNoise {
  int nx, ny;
  double x0, y0, spacing;
  std::vector<double> values;  // 3 channels interleaved

  double channel(int ix, int iy, int c) const {
    ix = std::clamp(ix, 0, nx - 1);
    iy = std::clamp(iy, 0, ny - 1);
    return values[static_cast<size_t>((iy * nx + ix) * 3 + c)];
  }

  Vec3 eval(double x, double y) const {
    double gx = (x - x0) / spacing, gy = (y - y0) / spacing;
    int ix = static_cast<int>(std::floor(gx)), iy = static_cast<int>(std::floor(gy));
    double fx = gx - ix, fy = gy - iy;
    auto smooth = [](double t) { return t * t * (3 - 2 * t); };
    double wx = smooth(fx), wy = smooth(fy);
    Vec3 out;
    for (int c = 0; c < 3; ++c) {
      double a = channel(ix, iy, c) * (1 - wx) + channel(ix + 1, iy, c) * wx;
      double b = channel(ix, iy + 1, c) * (1 - wx) + channel(ix + 1, iy + 1, c) * wx;
      out[c] = a * (1 - wy) + b * wy;
    }
    return out;
  }
};

ValueNoise make_noise(const PlanePair& pair) {
  double d = pair.plane_depth;
  double range = 0.8 * d + 1.0;
  ValueNoise n;
  n.spacing = pair.tex_spacing;
  n.x0 = -range;
  n.y0 = -range;
  n.nx = static_cast<int>(2 * range / n.spacing) + 2;
  n.ny = n.nx;
  std::mt19937_64 rng(pair.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> dist(0.05, 0.95);
  n.values.resize(static_cast<size_t>(n.nx) * n.ny * 3);
  for (auto& v : n.values) v = dist(rng);
  return n;
}

}  // namespace

Vec3 plane_color_at(const PlanePair& pair, int cam_index, const Vec2& uv) {
  static thread_local uint64_t cached_seed = ~0ull;
  static thread_local double cached_depth = -1.0;
  static thread_local ValueNoise noise;
  if (cached_seed != pair.seed || cached_depth != pair.plane_depth) {
    noise = make_noise(pair);
    cached_seed = pair.seed;
    cached_depth = pair.plane_depth;
  }
  const CameraView& cam = pair.cameras[static_cast<size_t>(cam_index)];
  Vec3 p = back_project(uv, pair.plane_depth, cam);  // fronto-parallel: z-depth hits the plane
  return noise.eval(p.x(), p.y());
}

PlanePair textured_plane_pair(double depth, double baseline, int resolution, uint64_t seed) {
  if (!(depth > 0)) throw ValidationError("textured_plane_pair: need depth > 0");
  if (baseline < 0 || baseline >= depth)
    throw ValidationError("textured_plane_pair: need 0 <= baseline < depth");
  PlanePair pair;
  pair.plane_depth = depth;
  pair.seed = seed;
  pair.tex_spacing = 3.2 * depth / resolution;  // a few pixels per texture cell
  Mat3 eye = Mat3::Identity();
  pair.cameras.push_back(make_camera(1, 1, 0.5, 0.5, eye, Vec3::Zero(), resolution, resolution));
  pair.cameras.push_back(
      make_camera(1, 1, 0.5, 0.5, eye, Vec3(-baseline, 0, 0), resolution, resolution));
  for (int v = 0; v < 2; ++v) {
    Tensor img({3, resolution, resolution});
    for (int iy = 0; iy < resolution; ++iy)
      for (int ix = 0; ix < resolution; ++ix) {
        Vec3 c = plane_color_at(pair, v, pixel_center(ix, iy, resolution, resolution));
        for (int ch = 0; ch < 3; ++ch) img.at(ch, iy, ix) = c[ch];
      }
    pair.images.push_back(std::move(img));
  }
  pair.gt_depth = Tensor({resolution, resolution});
  pair.gt_depth.fill(depth);
  return pair;
}

}  // namespace semsplat
