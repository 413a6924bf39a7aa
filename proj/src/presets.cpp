#include "bknet/presets.hpp"

#include <stdexcept>

namespace bknet {

namespace {

ConvLayer conv3x3(int c_out, int c_in, int stride = 1) {
    ConvLayer l;
    l.weight = Tensor({c_out, c_in, 3, 3}, 0.0f);
    l.bias.assign(std::size_t(c_out), 0.0f);
    l.stride = stride;
    l.padding = 1;
    return l;
}

LinearLayer linear(int out, int in) {
    LinearLayer l;
    l.weight = Tensor({out, in}, 0.0f);
    l.bias.assign(std::size_t(out), 0.0f);
    return l;
}

void conv_bn_relu(Network& net, int c_out, int c_in, int stride = 1) {
    net.layers.push_back(conv3x3(c_out, c_in, stride));
    net.layers.push_back(make_batchnorm(c_out));
    net.layers.push_back(ReluLayer{});
}

// conv-BN-ReLU-conv-BN block; the residual lands on the second BN, then a
// trailing ReLU. Projection 1x1 when shapes change.
void basic_block(Network& net, int c_out, int c_in, int stride) {
    const int entry = int(net.layers.size()) - 1;  // previous layer's output is the block input
    net.layers.push_back(conv3x3(c_out, c_in, stride));
    net.layers.push_back(make_batchnorm(c_out));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(conv3x3(c_out, c_out, 1));
    net.layers.push_back(make_batchnorm(c_out));
    const int dst = int(net.layers.size()) - 1;

    SkipEdge edge;
    edge.src = entry;
    edge.dst = dst;
    if (stride != 1 || c_in != c_out) {
        ConvLayer proj;
        proj.weight = Tensor({c_out, c_in, 1, 1}, 0.0f);
        proj.bias.assign(std::size_t(c_out), 0.0f);
        proj.stride = stride;
        proj.padding = 0;
        edge.projection = std::move(proj);
    }
    net.skips.push_back(std::move(edge));
    net.layers.push_back(ReluLayer{});
}

Network toy_cnn(int classes) {
    Network net;
    net.input_shape = {3, 8, 8};
    net.num_classes = classes;
    conv_bn_relu(net, 16, 3);
    conv_bn_relu(net, 32, 16);
    net.layers.push_back(MaxPoolLayer{2, 2});
    conv_bn_relu(net, 32, 32);
    conv_bn_relu(net, 64, 32);
    net.layers.push_back(GlobalAvgPoolLayer{});
    net.layers.push_back(linear(classes, 64));
    return net;
}

Network vgg16_cifar(int classes) {
    Network net;
    net.input_shape = {3, 32, 32};
    net.num_classes = classes;
    const int plan[] = {64, 64, -1, 128, 128, -1, 256, 256, 256, -1,
                        512, 512, 512, -1, 512, 512, 512, -1};
    int c_in = 3;
    for (int w : plan) {
        if (w < 0) {
            net.layers.push_back(MaxPoolLayer{2, 2});
        } else {
            conv_bn_relu(net, w, c_in);
            c_in = w;
        }
    }
    net.layers.push_back(linear(classes, 512));
    return net;
}

Network resnet_cifar(int classes, int blocks_per_stage, const std::vector<int>& widths,
                     std::array<int, 3> input_shape) {
    Network net;
    net.input_shape = input_shape;
    net.num_classes = classes;
    conv_bn_relu(net, widths[0], input_shape[0]);
    int c_in = widths[0];
    for (std::size_t stage = 0; stage < widths.size(); ++stage) {
        for (int b = 0; b < blocks_per_stage; ++b) {
            const int stride = (stage > 0 && b == 0) ? 2 : 1;
            basic_block(net, widths[stage], c_in, stride);
            c_in = widths[stage];
        }
    }
    net.layers.push_back(GlobalAvgPoolLayer{});
    net.layers.push_back(linear(classes, c_in));
    return net;
}

}  // namespace

Network build_preset(const std::string& name, int num_classes) {
    if (name == "toy-cnn") return toy_cnn(num_classes);
    if (name == "vgg16-cifar") return vgg16_cifar(num_classes);
    if (name == "resnet18-cifar")
        return resnet_cifar(num_classes, 2, {64, 128, 256, 512}, {3, 32, 32});
    if (name == "resnet56-cifar") return resnet_cifar(num_classes, 9, {16, 32, 64}, {3, 32, 32});
    throw std::invalid_argument("unknown architecture preset '" + name + "'");
}

std::vector<std::string> preset_names() {
    return {"toy-cnn", "vgg16-cifar", "resnet18-cifar", "resnet56-cifar"};
}

}  // namespace bknet
