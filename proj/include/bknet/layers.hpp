#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "bknet/tensor.hpp"

namespace bknet {

struct ConvLayer {
    Tensor weight;  // c_out x c_in x k x k
    std::vector<float> bias;
    int stride = 1;
    int padding = 0;

    int c_out() const { return weight.shape[0]; }
    int c_in() const { return weight.shape[1]; }
    int kernel() const { return weight.shape[2]; }
};

// Shared-basis convolution: basis rows are flattened k*k kernels, coeff
// mixes them per (output, input) slot. When `centered` the last basis row
// is the frozen kernel mean and its coefficients are pinned at 1.
struct DecomposedConvLayer {
    Tensor basis;  // rows x k^2, rows = d (+1 when centered)
    Tensor coeff;  // c_out x c_in x rows
    std::vector<std::uint8_t> mask;  // congruent to coeff; 0 => coeff pinned to exactly 0
    std::vector<float> bias;
    int stride = 1;
    int padding = 0;
    int kernel = 3;
    int d = 1;
    bool centered = false;

    int c_out() const { return coeff.shape[0]; }
    int c_in() const { return coeff.shape[1]; }
    int basis_rows() const { return d + (centered ? 1 : 0); }
};

struct LinearLayer {
    Tensor weight;  // out x in
    std::vector<float> bias;

    int out_features() const { return weight.shape[0]; }
    int in_features() const { return weight.shape[1]; }
};

struct ReluLayer {};

struct MaxPoolLayer {
    int window = 2;
    int stride = 2;
};

struct AvgPoolLayer {
    int window = 2;
    int stride = 2;
};

struct BatchNormLayer {
    std::vector<float> gamma, beta, running_mean, running_var;
    float eps = 1e-5f;
    float momentum = 0.1f;

    int channels() const { return int(gamma.size()); }
};

struct GlobalAvgPoolLayer {};

using LayerSpec = std::variant<ConvLayer, DecomposedConvLayer, LinearLayer, ReluLayer,
                               MaxPoolLayer, AvgPoolLayer, BatchNormLayer, GlobalAvgPoolLayer>;

enum class LayerKind : int {
    Conv = 0,
    DecomposedConv,
    Linear,
    ReLU,
    MaxPool,
    AvgPool,
    BatchNorm,
    GlobalAvgPool,
};

LayerKind kind_of(const LayerSpec& layer);
const char* kind_name(LayerKind kind);

// ReLU, BatchNorm, pools and GAP carry channel identity through; Conv,
// DecomposedConv and Linear define a new channel space.
bool is_channel_transform(const LayerSpec& layer);

// All-true mask sized for a coefficient tensor.
std::vector<std::uint8_t> full_mask(const Tensor& coeff);

BatchNormLayer make_batchnorm(int channels);

}  // namespace bknet
