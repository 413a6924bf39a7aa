#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "bknet/layers.hpp"

namespace bknet {

// Residual connection: the output of layer `src` (optionally passed
// through a 1x1 projection) is added to the output of layer `dst`,
// i.e. after the destination conv/BN and before any following ReLU.
// src == -1 taps the network input.
struct SkipEdge {
    int src = -1;
    int dst = -1;
    std::optional<ConvLayer> projection;
};

struct Network {
    std::vector<LayerSpec> layers;
    std::vector<SkipEdge> skips;
    std::array<int, 3> input_shape{0, 0, 0};  // C, H, W
    int num_classes = 0;
};

// (C, H, W) of a layer's output given its input; throws on mismatch.
std::array<int, 3> layer_output_shape(const LayerSpec& layer, const std::array<int, 3>& in);

// Output shape of every layer, index i = output of layers[i].
std::vector<std::array<int, 3>> infer_shapes(const Network& net);

// Structural diagnostics; empty iff the network is well formed.
std::vector<std::string> validate(const Network& net);

// Per-layer outputs retained during forward (post skip addition), plus the
// caches backward needs. bn_* entries are only filled in training mode.
struct ForwardCache {
    Tensor input;
    std::vector<Tensor> outputs;
    std::vector<Tensor> bn_xhat;                 // per layer (empty if not BN)
    std::vector<std::vector<float>> bn_inv_std;  // 1/sqrt(var+eps) per channel
    std::vector<std::vector<float>> bn_centered_mean;  // batch mean used
    std::vector<std::vector<int>> pool_argmax;   // flat input index per output element
    std::vector<Tensor> skip_proj_out;           // per skip edge (empty if identity)
};

// Inference-mode forward (BatchNorm uses running statistics). Logits are
// the final layer output flattened to N x (C*H*W); pre-softmax.
Tensor forward(const Network& net, const Tensor& batch, ForwardCache* cache = nullptr);

// One layer in inference mode; the building block shared with the
// compiled runtime.
Tensor eval_layer(const LayerSpec& layer, const Tensor& input);

// Training-mode forward: BatchNorm uses batch statistics and updates the
// running ones; fills every cache field backward needs.
Tensor forward_train(Network& net, const Tensor& batch, ForwardCache& cache);

// argmax over classes per sample.
std::vector<int> predict_classes(const Tensor& logits);

}  // namespace bknet
