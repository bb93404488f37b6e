#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "semsplat/io.hpp"
#include "semsplat/pipeline.hpp"
#include "semsplat/scene.hpp"
#include "semsplat/selftest.hpp"

namespace fs = std::filesystem;
using namespace semsplat;

namespace {

SceneBundle bundle_from_scene(const SyntheticScene& scene) {
  SceneBundle b;
  b.cameras = scene.cameras;
  b.images = scene.gt_rgb;
  b.labels = scene.gt_labels;
  b.depths = scene.gt_depth;
  b.class_names = scene.class_names;
  b.near = scene.near;
  b.far = scene.far;
  return b;
}

Tensor stack_images(const SceneBundle& bundle, const std::vector<int>& views) {
  const Tensor& first = bundle.images.at(static_cast<size_t>(views.at(0)));
  Tensor out({static_cast<int64_t>(views.size()), 3, first.dim(1), first.dim(2)});
  for (size_t i = 0; i < views.size(); ++i) {
    const Tensor& img = bundle.images.at(static_cast<size_t>(views[i]));
    if (!img.same_shape(first)) throw ValidationError("input views differ in size");
    std::copy(img.data(), img.data() + img.numel(),
              out.data() + static_cast<int64_t>(i) * img.numel());
  }
  return out;
}

std::vector<CameraView> pick_cameras(const SceneBundle& bundle, const std::vector<int>& views) {
  std::vector<CameraView> cams;
  for (int v : views) {
    if (v < 0 || static_cast<size_t>(v) >= bundle.cameras.size())
      throw ValidationError("view id out of range: " + std::to_string(v));
    cams.push_back(bundle.cameras[static_cast<size_t>(v)]);
  }
  return cams;
}

LabelMap labels_from_vector(const std::vector<int>& labels, int w, int h, int k) {
  LabelMap m;
  m.labels = labels;
  m.width = w;
  m.height = h;
  m.num_classes = k;
  return m;
}

int run(int argc, char** argv) {
  CLI::App app{"semsplat: feed-forward dual-Gaussian reconstruction toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled scene bundle");
  uint64_t synth_seed = 0;
  int synth_classes = 6, synth_objects = 4, synth_res = 64, synth_cams = 6;
  std::string synth_out;
  synth->add_option("--seed", synth_seed, "RNG seed");
  synth->add_option("--classes", synth_classes, "number of classes (>= 2)");
  synth->add_option("--objects", synth_objects, "number of objects");
  synth->add_option("--resolution", synth_res, "image resolution");
  synth->add_option("--cameras", synth_cams, "number of cameras");
  synth->add_option("--out", synth_out, "output bundle directory")->required();

  // render
  auto* render = app.add_subcommand("render", "Feed-forward reconstruction and novel-view render");
  std::string render_bundle, render_out;
  std::vector<int> render_inputs;
  int render_target = -1, render_L = 32, render_d = 128;
  uint64_t render_seed = 0;
  render->add_option("--bundle", render_bundle, "input bundle directory")->required();
  render->add_option("--inputs", render_inputs, "input view ids (>= 2)")->required();
  render->add_option("--target", render_target, "target view id")->required();
  render->add_option("--candidates", render_L, "depth candidates L");
  render->add_option("--dim", render_d, "feature dimension d");
  render->add_option("--seed", render_seed, "weight init seed");
  render->add_option("--out", render_out, "output path prefix")->required();

  // depth
  auto* depth = app.add_subcommand("depth", "Plane-sweep depth maps");
  std::string depth_bundle, depth_out;
  std::vector<int> depth_views;
  int depth_L = 64;
  double depth_near = 0.0, depth_far = 0.0;
  bool raw_features = false;
  uint64_t depth_seed = 0;
  depth->add_option("--bundle", depth_bundle, "input bundle directory")->required();
  depth->add_option("--views", depth_views, "view ids (>= 2; depth written for each)")->required();
  depth->add_option("--candidates", depth_L, "depth candidates L");
  depth->add_option("--near", depth_near, "near plane (default: bundle)");
  depth->add_option("--far", depth_far, "far plane (default: bundle)");
  depth->add_flag("--raw-features", raw_features, "bypass the backbone, use NCC patch features");
  depth->add_option("--seed", depth_seed, "weight init seed (ignored with --raw-features)");
  depth->add_option("--out", depth_out, "output path prefix")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Segmentation metrics between two label maps");
  std::string eval_pred, eval_gt;
  int eval_k = 0;
  eval->add_option("--pred", eval_pred, "predicted label PGM")->required();
  eval->add_option("--gt", eval_gt, "ground-truth label PGM")->required();
  eval->add_option("--classes", eval_k, "number of classes K")->required();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suites");

  // selftest
  auto* selftest = app.add_subcommand("selftest", "Runtime property battery");
  bool with_timing = false;
  selftest->add_flag("--timing", with_timing, "include the forward+render timing budget");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (synth->parsed()) {
    SyntheticScene scene = generate_room(synth_seed, synth_classes, synth_objects, synth_res,
                                         synth_cams);
    save_bundle(bundle_from_scene(scene), synth_out);
    std::cout << "wrote bundle: " << synth_out << " (" << scene.cameras.size() << " views, "
              << scene.gaussians.size() << " gt gaussians)\n";
    return 0;
  }

  if (render->parsed()) {
    if (render_inputs.size() < 2) throw ValidationError("render: need at least 2 input views");
    SceneBundle bundle = load_bundle(render_bundle);
    if (render_target < 0 || static_cast<size_t>(render_target) >= bundle.cameras.size())
      throw ValidationError("render: target view id out of range");
    PipelineConfig cfg;
    cfg.d = render_d;
    cfg.depth_candidates = render_L;
    cfg.near = bundle.near;
    cfg.far = bundle.far;
    cfg.num_classes = static_cast<int>(bundle.class_names.size());
    cfg.seed = render_seed;
    NetworkWeights weights = init_weights(cfg.seed, cfg);
    Tensor images = stack_images(bundle, render_inputs);
    std::vector<CameraView> cams = pick_cameras(bundle, render_inputs);
    ForwardResult fr = forward(images, cams, cfg, weights);
    const CameraView& target = bundle.cameras[static_cast<size_t>(render_target)];
    RenderedMaps maps = render_novel(fr.gaussians, target, target.width, target.height);
    write_ppm(render_out + "_rgb.ppm", maps.rgb);
    write_label_pgm(render_out + "_labels.pgm",
                    labels_from_vector(maps.labels, maps.width, maps.height, cfg.num_classes));
    write_depth_pgm(render_out + "_depth.pgm", maps.depth);
    std::cout << "gaussians: " << fr.gaussians.size() << " (dual, " << render_inputs.size()
              << " views x " << images.dim(2) << "x" << images.dim(3) << " pixels)\n";
    return 0;
  }

  if (depth->parsed()) {
    if (depth_views.size() < 2) throw ValidationError("depth: need at least 2 views");
    SceneBundle bundle = load_bundle(depth_bundle);
    double near = depth_near > 0 ? depth_near : bundle.near;
    double far = depth_far > 0 ? depth_far : bundle.far;
    DepthCandidates candidates = sample_candidates(near, far, depth_L);
    std::vector<CameraView> cams = pick_cameras(bundle, depth_views);
    if (raw_features) {
      std::vector<Tensor> images;
      for (int v : depth_views) images.push_back(bundle.images[static_cast<size_t>(v)]);
      for (size_t i = 0; i < depth_views.size(); ++i) {
        DepthResult r = raw_feature_depth(images, cams, candidates, static_cast<int>(i));
        write_depth_pgm(depth_out + "_view" + std::to_string(depth_views[i]) + "_depth.pgm",
                        r.depth);
      }
    } else {
      PipelineConfig cfg;
      cfg.depth_candidates = depth_L;
      cfg.near = near;
      cfg.far = far;
      cfg.num_classes = std::max<int>(2, static_cast<int>(bundle.class_names.size()));
      cfg.seed = depth_seed;
      NetworkWeights weights = init_weights(cfg.seed, cfg);
      ForwardResult fr = forward(stack_images(bundle, depth_views), cams, cfg, weights);
      for (size_t i = 0; i < depth_views.size(); ++i)
        write_depth_pgm(depth_out + "_view" + std::to_string(depth_views[i]) + "_depth.pgm",
                        fr.depth[i].depth);
    }
    std::cout << "wrote " << depth_views.size() << " depth maps (" << depth_L << " candidates, ["
              << near << ", " << far << "])\n";
    return 0;
  }

  if (eval->parsed()) {
    LabelMap pred = read_label_pgm(eval_pred, eval_k);
    LabelMap gt = read_label_pgm(eval_gt, eval_k);
    SegmentationMetrics m = segmentation_metrics(gt, pred, eval_k);
    std::printf("miou=%.6f acc=%.6f class_acc=%.6f\n", m.miou, m.acc, m.class_acc);
    return 0;
  }

  if (gradcheck->parsed()) {
    bool ok = true;
    for (const GradCheckReport& r : run_gradcheck()) {
      std::printf("%-24s max_rel_err=%.3e tol=%.0e %s\n", r.name.c_str(), r.max_rel_err, r.tol,
                  r.pass() ? "ok" : "FAIL");
      ok = ok && r.pass();
    }
    return ok ? 0 : 1;
  }

  if (selftest->parsed()) {
    bool ok = true;
    for (const CheckResult& r : run_selftest(with_timing)) {
      std::printf("%-36s %s%s%s\n", r.name.c_str(), r.pass ? "ok" : "FAIL",
                  r.detail.empty() ? "" : "  ", r.detail.c_str());
      ok = ok && r.pass;
    }
    return ok ? 0 : 1;
  }

  return 2;  // unreachable: a subcommand is required
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
