#pragma once

#include <map>

#include "bknet/network.hpp"
#include "bknet/tensor.hpp"

namespace bknet {

template <class T>
struct DecompositionT {
    TensorT<T> basis;  // rows x k^2
    TensorT<T> coeff;  // c_out x c_in x rows
    double err2 = 0.0;  // || theta' - reconstruction ||_F^2 (of the centered matrix when centered)
};

using Decomposition = DecompositionT<float>;

// Kernel-space decomposition of a conv weight: rows of the reshaped
// (c_out*c_in) x k^2 matrix are projected onto the d leading eigenvectors
// of W = theta'^T theta'. With `center`, rows are mean-centered first and
// the mean is stored as one extra frozen basis row with coefficient 1.
// 1x1 kernels get the exact representation basis=[[1]], coeff=weight.
template <class T>
DecompositionT<T> decompose_layer(const TensorT<T>& weight, int d, bool center = false);

// theta_hat[i,j] = sum_m coeff[i,j,m] * basis[m,:] reshaped to k x k.
template <class T>
TensorT<T> reconstruct(const TensorT<T>& basis, const TensorT<T>& coeff, int kernel);

TensorT<float> reconstruct(const DecomposedConvLayer& layer);

// Replace the Conv layers named in d_per_layer by equivalent
// DecomposedConvLayers; all other layers untouched.
Network decompose_network(const Network& net, const std::map<int, int>& d_per_layer,
                          bool center = false);

// d for every Conv layer: min(d_default, k^2), and always 1 for 1x1 kernels.
std::map<int, int> default_d_map(const Network& net, int d_default);

}  // namespace bknet
