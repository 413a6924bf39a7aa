#pragma once

#include "bknet/tensor.hpp"

namespace bknet {

// Output extent of a convolution along one axis; throws unless
// (in + 2*pad - k) divides the stride exactly.
int conv_out_extent(int in, int k, int stride, int pad);

template <class T>
struct ConvGradsT {
    TensorT<T> grad_input;
    TensorT<T> grad_weight;
    std::vector<T> grad_bias;
};

// 2-D cross-correlation, NCHW input, (c_out, c_in, k, k) weight.
// Reference implementation: plain nested loops, serial accumulation.
template <class T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weight, const std::vector<T>& bias,
                  int stride, int pad);

// Same contract through an im2col + matmul path; the fast path used by
// network execution. Bit-compatible accumulation order per output value.
template <class T>
TensorT<T> conv2d_fast(const TensorT<T>& input, const TensorT<T>& weight,
                       const std::vector<T>& bias, int stride, int pad);

// Exact analytic gradients of conv2d with respect to input, weight, bias.
// grad_out must have the conv2d output shape for these arguments.
template <class T>
ConvGradsT<T> conv2d_grads(const TensorT<T>& input, const TensorT<T>& weight,
                           const TensorT<T>& grad_out, int stride, int pad);

// Patch matrix for one sample: rows ordered (c_in, ky, kx), columns (oy, ox).
template <class T>
TensorT<T> im2col(const TensorT<T>& input, int n, int k, int stride, int pad, int oh, int ow);

}  // namespace bknet
