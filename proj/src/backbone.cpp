#include "semsplat/backbone.hpp"

#include <cmath>
#include <numeric>

namespace semsplat {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;

void register_transformer_block(NetworkWeights& w, const std::string& prefix, int d,
                                int ffn_mult) {
  for (const char* att : {".self", ".cross"}) {
    for (const char* proj : {".wq", ".wk", ".wv", ".wo"}) {
      w.add(prefix + att + proj, {d, d});
      w.add(prefix + att + proj + std::string(".b"), {d}, false);
    }
  }
  w.add(prefix + ".ffn.w1", {ffn_mult * d, d});
  w.add(prefix + ".ffn.b1", {ffn_mult * d}, false);
  w.add(prefix + ".ffn.w2", {d, ffn_mult * d});
  w.add(prefix + ".ffn.b2", {d}, false);
}

TokenGrid tokens_from_features(const Tensor& feats) {
  const int64_t N = feats.dim(0), C = feats.dim(1), H = feats.dim(2), W = feats.dim(3);
  TokenGrid g;
  g.embeddings = Tensor({N, H, W, C});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) g.embeddings.at(n, y, x, c) = feats.at(n, c, y, x);
  return g;
}

Tensor features_from_tokens(const TokenGrid& g) {
  const int64_t N = g.views(), H = g.rows(), W = g.cols(), C = g.dim();
  Tensor f({N, C, H, W});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) f.at(n, c, y, x) = g.embeddings.at(n, y, x, c);
  return f;
}

// Non-affine layer norm over the embedding dimension.
TokenGrid layer_norm(const TokenGrid& g, double eps = 1e-5) {
  TokenGrid out = g;
  const int64_t tokens = g.views() * g.rows() * g.cols(), d = g.dim();
  for (int64_t t = 0; t < tokens; ++t) {
    double* p = out.embeddings.data() + t * d;
    double mean = std::accumulate(p, p + d, 0.0) / static_cast<double>(d);
    double var = 0.0;
    for (int64_t i = 0; i < d; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= static_cast<double>(d);
    double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t i = 0; i < d; ++i) p[i] = (p[i] - mean) * inv;
  }
  return out;
}

TokenGrid linear(const TokenGrid& g, const Tensor& weight, const Tensor& bias) {
  const int64_t tokens = g.views() * g.rows() * g.cols();
  const int64_t din = weight.dim(1), dout = weight.dim(0);
  TokenGrid out;
  out.embeddings = Tensor({g.views(), g.rows(), g.cols(), dout});
  CMapRM X(g.embeddings.data(), tokens, din);
  CMapRM W(weight.data(), dout, din);
  MapRM Y(out.embeddings.data(), tokens, dout);
  Y.noalias() = X * W.transpose();
  for (int64_t t = 0; t < tokens; ++t)
    for (int64_t i = 0; i < dout; ++i) Y(t, i) += bias[i];
  return out;
}

TokenGrid add_tokens(TokenGrid a, const TokenGrid& b) {
  for (int64_t i = 0; i < a.embeddings.numel(); ++i) a.embeddings[i] += b.embeddings[i];
  return a;
}

int effective_window(int64_t h, int64_t w, int requested) {
  int64_t lim = std::min<int64_t>({h, w, requested});
  for (int64_t win = lim; win >= 1; --win)
    if (h % win == 0 && w % win == 0) return static_cast<int>(win);
  return 1;
}

TokenGrid transformer_block(const TokenGrid& x, const std::vector<ProjectiveMatrix>& projs,
                            const NetworkWeights& w, const std::string& prefix, int window,
                            int shift) {
  auto attn = [&](const TokenGrid& in, const std::string& att, bool cross) {
    TokenGrid t = layer_norm(in);
    TokenGrid q = linear(t, w.get(prefix + att + ".wq"), w.get(prefix + att + ".wq.b"));
    TokenGrid k = linear(t, w.get(prefix + att + ".wk"), w.get(prefix + att + ".wk.b"));
    TokenGrid v = linear(t, w.get(prefix + att + ".wv"), w.get(prefix + att + ".wv.b"));
    TokenGrid a = cross ? cross_view_attention_qkv(q, k, v, projs)
                        : windowed_attention_qkv(q, k, v, projs, window, shift);
    return linear(a, w.get(prefix + att + ".wo"), w.get(prefix + att + ".wo.b"));
  };
  TokenGrid h = add_tokens(x, attn(x, ".self", false));
  h = add_tokens(h, attn(h, ".cross", true));
  TokenGrid t = layer_norm(h);
  TokenGrid f = linear(t, w.get(prefix + ".ffn.w1"), w.get(prefix + ".ffn.b1"));
  f.embeddings = silu(std::move(f.embeddings));
  f = linear(f, w.get(prefix + ".ffn.w2"), w.get(prefix + ".ffn.b2"));
  return add_tokens(h, f);
}

std::vector<ProjectiveMatrix> view_projectives(const std::vector<CameraView>& cams) {
  std::vector<ProjectiveMatrix> projs;
  projs.reserve(cams.size());
  for (const auto& c : cams) {
    c.validate();
    projs.push_back(build_projective(c));
  }
  return projs;
}

Tensor run_branch(const Tensor& low, const std::vector<CameraView>& cams,
                  const NetworkWeights& w, const PipelineConfig& cfg, const std::string& branch,
                  int blocks) {
  auto projs = view_projectives(cams);
  TokenGrid tokens = tokens_from_features(low);
  int window = effective_window(tokens.rows(), tokens.cols(), cfg.window_size);
  for (int b = 0; b < blocks; ++b) {
    int shift = (b % 2 == 1) ? window / 2 : 0;
    tokens = transformer_block(tokens, projs, w, branch + ".b" + std::to_string(b), window, shift);
  }
  return features_from_tokens(tokens);
}

}  // namespace

NetworkWeights init_weights(uint64_t seed, const PipelineConfig& cfg) {
  cfg.validate();
  NetworkWeights w;
  const int d = cfg.d;
  // shared CNN: 6 residual blocks, stride-2 at blocks 3 and 5
  register_res_block(w, "shared.s1", 3, d / 4, 1);
  register_res_block(w, "shared.s2", d / 4, d / 4, 1);
  register_res_block(w, "shared.s3", d / 4, d / 2, 2);
  register_res_block(w, "shared.s4", d / 2, d / 2, 1);
  register_res_block(w, "shared.s5", d / 2, d, 2);
  register_res_block(w, "shared.s6", d, d, 1);
  // semantic refinement
  register_res_block(w, "semref.r1", d, d, 1);
  register_res_block(w, "semref.r2", d, d, 1);
  for (int b = 0; b < 6; ++b) register_transformer_block(w, "color.b" + std::to_string(b), d, 4);
  for (int b = 0; b < 3; ++b) register_transformer_block(w, "sem.b" + std::to_string(b), d, 4);
  // cost-volume U-Net (global residual over the input volume)
  const int L = cfg.depth_candidates;
  w.add("unet.enc1.w", {64, L + d, 3, 3});
  w.add("unet.enc1.b", {64}, false);
  w.add("unet.enc2.w", {96, 64, 3, 3});
  w.add("unet.enc2.b", {96}, false);
  w.add("unet.mid.w", {96, 96, 3, 3});
  w.add("unet.mid.b", {96}, false);
  w.add("unet.dec1.w", {64, 96 + 64, 3, 3});
  w.add("unet.dec1.b", {64}, false);
  w.add("unet.out.w", {L, 64, 1, 1});
  w.add("unet.out.b", {L}, false);
  // decoder heads
  w.add("opacity.c1.w", {16, L, 3, 3});
  w.add("opacity.c1.b", {16}, false);
  w.add("opacity.c2.w", {1, 16, 1, 1});
  w.add("opacity.c2.b", {1}, false);
  const int B = cfg.sh_basis();
  w.add("colorhead.c1.w", {32, 3 + d, 3, 3});
  w.add("colorhead.c1.b", {32}, false);
  w.add("colorhead.c2.w", {3 * B + 3 + 4, 32, 1, 1});
  w.add("colorhead.c2.b", {3 * B + 3 + 4}, false);
  w.add("semhead.c1.w", {32, 3 + d, 3, 3});
  w.add("semhead.c1.b", {32}, false);
  w.add("semhead.c2.w", {cfg.num_classes + 3 + 4, 32, 1, 1});
  w.add("semhead.c2.b", {cfg.num_classes + 3 + 4}, false);
  w.randomize(seed);
  return w;
}

Tensor shared_cnn(const Tensor& images, const NetworkWeights& w, const PipelineConfig& cfg) {
  const int64_t N = images.dim(0);
  if (N == 0) throw ValidationError("shared_cnn: empty image set");
  const int64_t H = images.dim(2), W = images.dim(3);
  const int64_t HP = (H + kDownsample - 1) / kDownsample * kDownsample;
  const int64_t WP = (W + kDownsample - 1) / kDownsample * kDownsample;
  Tensor out({N, cfg.d, HP / kDownsample, WP / kDownsample});
  parallel_for(N, [&](int64_t n) {
    Tensor img({3, HP, WP});
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) img.at(c, y, x) = images.at(n, c, y, x);
    Tensor f = res_block(img, w, "shared.s1", 1);
    f = res_block(f, w, "shared.s2", 1);
    f = res_block(f, w, "shared.s3", 2);
    f = res_block(f, w, "shared.s4", 1);
    f = res_block(f, w, "shared.s5", 2);
    f = res_block(f, w, "shared.s6", 1);
    for (int64_t c = 0; c < cfg.d; ++c)
      for (int64_t y = 0; y < out.dim(2); ++y)
        for (int64_t x = 0; x < out.dim(3); ++x) out.at(n, c, y, x) = f.at(c, y, x);
  });
  return out;
}

Tensor color_branch(const Tensor& low_features, const std::vector<CameraView>& cams,
                    const NetworkWeights& w, const PipelineConfig& cfg) {
  return run_branch(low_features, cams, w, cfg, "color", 6);
}

Tensor semantic_branch(const Tensor& low_features, const std::vector<CameraView>& cams,
                       const NetworkWeights& w, const PipelineConfig& cfg) {
  const int64_t N = low_features.dim(0);
  Tensor refined = low_features;
  parallel_for(N, [&](int64_t n) {
    Tensor f({low_features.dim(1), low_features.dim(2), low_features.dim(3)});
    std::copy(low_features.data() + n * f.numel(), low_features.data() + (n + 1) * f.numel(),
              f.data());
    f = res_block(f, w, "semref.r1", 1);
    f = res_block(f, w, "semref.r2", 1);
    std::copy(f.data(), f.data() + f.numel(), refined.data() + n * f.numel());
  });
  return run_branch(refined, cams, w, cfg, "sem", 3);
}

MatX color_branch_first_cross_attention(const Tensor& low_features,
                                        const std::vector<CameraView>& cams,
                                        const NetworkWeights& w, const PipelineConfig& cfg) {
  auto projs = view_projectives(cams);
  TokenGrid tokens = tokens_from_features(low_features);
  const int d = cfg.d;
  const std::string prefix = "color.b0";
  int window = effective_window(tokens.rows(), tokens.cols(), cfg.window_size);
  // self-attention sub-layer of block 0
  {
    TokenGrid t = layer_norm(tokens);
    TokenGrid q = linear(t, w.get(prefix + ".self.wq"), w.get(prefix + ".self.wq.b"));
    TokenGrid k = linear(t, w.get(prefix + ".self.wk"), w.get(prefix + ".self.wk.b"));
    TokenGrid v = linear(t, w.get(prefix + ".self.wv"), w.get(prefix + ".self.wv.b"));
    TokenGrid a = windowed_attention_qkv(q, k, v, projs, window, 0);
    tokens = add_tokens(tokens, linear(a, w.get(prefix + ".self.wo"), w.get(prefix + ".self.wo.b")));
  }
  // cross-view attention weights of view 0
  TokenGrid t = layer_norm(tokens);
  TokenGrid q = linear(t, w.get(prefix + ".cross.wq"), w.get(prefix + ".cross.wq.b"));
  TokenGrid k = linear(t, w.get(prefix + ".cross.wk"), w.get(prefix + ".cross.wk.b"));
  TokenGrid v = linear(t, w.get(prefix + ".cross.wv"), w.get(prefix + ".cross.wv.b"));
  const int64_t N = q.views(), H = q.rows(), W = q.cols();
  MatX Q(H * W, d), K((N - 1) * H * W, d), V((N - 1) * H * W, d);
  std::vector<TokenTransform> qt, kt;
  int64_t qi = 0;
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x, ++qi) {
      for (int c = 0; c < d; ++c) Q(qi, c) = q.embeddings.at(0, y, x, c);
      qt.emplace_back(static_cast<double>(x), static_cast<double>(y), projs[0], d);
    }
  int64_t ki = 0;
  for (int64_t other = 1; other < N; ++other)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x, ++ki) {
        for (int c = 0; c < d; ++c) {
          K(ki, c) = k.embeddings.at(other, y, x, c);
          V(ki, c) = v.embeddings.at(other, y, x, c);
        }
        kt.emplace_back(static_cast<double>(x), static_cast<double>(y),
                        projs[static_cast<size_t>(other)], d);
      }
  MatX weights;
  gta_attention(Q, K, V, qt, kt, &weights);
  return weights;
}

}  // namespace semsplat
