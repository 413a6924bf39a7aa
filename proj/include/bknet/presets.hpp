#pragma once

#include <string>
#include <vector>

#include "bknet/network.hpp"

namespace bknet {

// Named architectures: "toy-cnn", "vgg16-cifar", "resnet18-cifar",
// "resnet56-cifar". Weights are zero-initialized; call init_parameters.
Network build_preset(const std::string& name, int num_classes);

std::vector<std::string> preset_names();

}  // namespace bknet
