#include "bknet/layers.hpp"

namespace bknet {

LayerKind kind_of(const LayerSpec& layer) {
    return static_cast<LayerKind>(layer.index());
}

const char* kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv: return "Conv";
        case LayerKind::DecomposedConv: return "DecomposedConv";
        case LayerKind::Linear: return "Linear";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::MaxPool: return "MaxPool";
        case LayerKind::AvgPool: return "AvgPool";
        case LayerKind::BatchNorm: return "BatchNorm";
        case LayerKind::GlobalAvgPool: return "GlobalAvgPool";
    }
    return "?";
}

bool is_channel_transform(const LayerSpec& layer) {
    switch (kind_of(layer)) {
        case LayerKind::Conv:
        case LayerKind::DecomposedConv:
        case LayerKind::Linear: return true;
        default: return false;
    }
}

std::vector<std::uint8_t> full_mask(const Tensor& coeff) {
    return std::vector<std::uint8_t>(coeff.numel(), std::uint8_t(1));
}

BatchNormLayer make_batchnorm(int channels) {
    BatchNormLayer bn;
    bn.gamma.assign(std::size_t(channels), 1.0f);
    bn.beta.assign(std::size_t(channels), 0.0f);
    bn.running_mean.assign(std::size_t(channels), 0.0f);
    bn.running_var.assign(std::size_t(channels), 1.0f);
    return bn;
}

}  // namespace bknet
