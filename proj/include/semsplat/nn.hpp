#pragma once

#include "semsplat/tensor.hpp"
#include "semsplat/weights.hpp"

namespace semsplat {

// Forward-only layers on C x H x W maps. Convolutions use 'same' zero padding
// (pad = k/2) before striding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride = 1);

Tensor leaky_relu(Tensor x, double slope = 0.01);
Tensor silu(Tensor x);
Tensor sigmoid(Tensor x);

// Per-channel normalization over the spatial extent, non-affine, stateless.
Tensor instance_norm(const Tensor& x, double eps = 1e-5);

Tensor add(const Tensor& a, const Tensor& b);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w);

// Residual conv block: act(IN(conv2(act(IN(conv1(x))))) + skip(x)).
// skip is a 1x1 conv when channels or stride change, identity otherwise.
// Weight names: <name>.conv1.w/.b, <name>.conv2.w/.b, [<name>.skip.w/.b].
void register_res_block(NetworkWeights& w, const std::string& name, int64_t cin, int64_t cout,
                        int stride);
Tensor res_block(const Tensor& x, const NetworkWeights& w, const std::string& name, int stride);

}  // namespace semsplat
