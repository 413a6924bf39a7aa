#pragma once

// Shared builders for test networks.

#include "bknet/decompose.hpp"
#include "bknet/network.hpp"
#include "bknet/rng.hpp"

namespace bknet::testing {

inline ConvLayer random_conv(int c_out, int c_in, int k, Rng& rng, int stride = 1, int pad = -1,
                             double weight_std = 0.3) {
    ConvLayer l;
    l.weight = Tensor({c_out, c_in, k, k});
    fill_gaussian(l.weight, rng, 0.0, weight_std);
    l.bias.assign(std::size_t(c_out), 0.0f);
    l.stride = stride;
    l.padding = pad < 0 ? k / 2 : pad;
    return l;
}

inline LinearLayer random_linear(int out, int in, Rng& rng) {
    LinearLayer l;
    l.weight = Tensor({out, in});
    fill_gaussian(l.weight, rng, 0.0, 0.3);
    l.bias.assign(std::size_t(out), 0.0f);
    return l;
}

// conv-relu-conv-relu-gap-linear chain on small inputs
inline Network small_cnn(Rng& rng, int in_c = 3, int hw = 8, int classes = 3) {
    Network net;
    net.input_shape = {in_c, hw, hw};
    net.num_classes = classes;
    net.layers.push_back(random_conv(8, in_c, 3, rng));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(random_conv(8, 8, 3, rng));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(GlobalAvgPoolLayer{});
    net.layers.push_back(random_linear(classes, 8, rng));
    return net;
}

inline Tensor random_batch(const Network& net, int n, Rng& rng) {
    Tensor t({n, net.input_shape[0], net.input_shape[1], net.input_shape[2]});
    fill_gaussian(t, rng);
    return t;
}

}  // namespace bknet::testing
