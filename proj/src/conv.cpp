#include "bknet/conv.hpp"

#include <stdexcept>

#include "bknet/linalg.hpp"

namespace bknet {

int conv_out_extent(int in, int k, int stride, int pad) {
    if (stride < 1) throw std::invalid_argument("conv: stride must be >= 1");
    if (pad < 0) throw std::invalid_argument("conv: padding must be >= 0");
    int span = in + 2 * pad - k;
    if (span < 0) throw std::invalid_argument("conv: kernel larger than padded input");
    if (span % stride != 0)
        throw std::invalid_argument("conv: output extent not exact for in=" + std::to_string(in) +
                                    " k=" + std::to_string(k) + " stride=" + std::to_string(stride) +
                                    " pad=" + std::to_string(pad));
    return span / stride + 1;
}

namespace {

template <class T>
void check_conv_args(const TensorT<T>& input, const TensorT<T>& weight, const std::vector<T>& bias) {
    if (input.rank() != 4) throw std::invalid_argument("conv: input must be NCHW");
    if (weight.rank() != 4) throw std::invalid_argument("conv: weight must be rank 4");
    if (weight.shape[2] != weight.shape[3]) throw std::invalid_argument("conv: kernel must be square");
    if (input.shape[1] != weight.shape[1])
        throw std::invalid_argument("conv: input channels " + std::to_string(input.shape[1]) +
                                    " != weight c_in " + std::to_string(weight.shape[1]));
    if (!bias.empty() && int(bias.size()) != weight.shape[0])
        throw std::invalid_argument("conv: bias length != c_out");
}

}  // namespace

template <class T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weight, const std::vector<T>& bias,
                  int stride, int pad) {
    check_conv_args(input, weight, bias);
    const int n = input.shape[0], c_in = input.shape[1], h = input.shape[2], w = input.shape[3];
    const int c_out = weight.shape[0], k = weight.shape[2];
    const int oh = conv_out_extent(h, k, stride, pad);
    const int ow = conv_out_extent(w, k, stride, pad);

    TensorT<T> out({n, c_out, oh, ow}, T(0));
    for (int b = 0; b < n; ++b)
        for (int co = 0; co < c_out; ++co)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    T acc = 0;
                    for (int ci = 0; ci < c_in; ++ci)
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= w) continue;
                                acc += input.at(b, ci, iy, ix) * weight.at(co, ci, ky, kx);
                            }
                        }
                    if (!bias.empty()) acc += bias[std::size_t(co)];
                    out.at(b, co, oy, ox) = acc;
                }
    return out;
}

template <class T>
TensorT<T> im2col(const TensorT<T>& input, int n, int k, int stride, int pad, int oh, int ow) {
    const int c_in = input.shape[1], h = input.shape[2], w = input.shape[3];
    TensorT<T> col({c_in * k * k, oh * ow}, T(0));
    int row = 0;
    for (int ci = 0; ci < c_in; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx, ++row) {
                T* dst = &col.data[std::size_t(row) * oh * ow];
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        dst += ow;
                        continue;
                    }
                    for (int ox = 0; ox < ow; ++ox, ++dst) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) *dst = input.at(n, ci, iy, ix);
                    }
                }
            }
    return col;
}

template <class T>
TensorT<T> conv2d_fast(const TensorT<T>& input, const TensorT<T>& weight,
                       const std::vector<T>& bias, int stride, int pad) {
    check_conv_args(input, weight, bias);
    const int n = input.shape[0], h = input.shape[2], w = input.shape[3];
    const int c_out = weight.shape[0], c_in = weight.shape[1], k = weight.shape[2];
    const int oh = conv_out_extent(h, k, stride, pad);
    const int ow = conv_out_extent(w, k, stride, pad);

    TensorT<T> wmat = weight.reshaped({c_out, c_in * k * k});
    TensorT<T> out({n, c_out, oh, ow}, T(0));
    for (int b = 0; b < n; ++b) {
        TensorT<T> col = im2col(input, b, k, stride, pad, oh, ow);
        TensorT<T> res = matmul(wmat, col);  // c_out x (oh*ow)
        T* dst = &out.data[std::size_t(b) * c_out * oh * ow];
        for (std::size_t i = 0; i < res.data.size(); ++i) dst[i] = res.data[i];
        if (!bias.empty())
            for (int co = 0; co < c_out; ++co) {
                T* plane = dst + std::size_t(co) * oh * ow;
                for (int i = 0; i < oh * ow; ++i) plane[i] += bias[std::size_t(co)];
            }
    }
    return out;
}

template <class T>
ConvGradsT<T> conv2d_grads(const TensorT<T>& input, const TensorT<T>& weight,
                           const TensorT<T>& grad_out, int stride, int pad) {
    check_conv_args(input, weight, std::vector<T>{});
    const int n = input.shape[0], c_in = input.shape[1], h = input.shape[2], w = input.shape[3];
    const int c_out = weight.shape[0], k = weight.shape[2];
    const int oh = conv_out_extent(h, k, stride, pad);
    const int ow = conv_out_extent(w, k, stride, pad);
    if (grad_out.shape != std::vector<int>{n, c_out, oh, ow})
        throw std::invalid_argument("conv2d_grads: grad_out shape " + shape_str(grad_out.shape) +
                                    " != expected " + shape_str({n, c_out, oh, ow}));

    ConvGradsT<T> g;
    g.grad_input = TensorT<T>({n, c_in, h, w}, T(0));
    g.grad_weight = TensorT<T>({c_out, c_in, k, k}, T(0));
    g.grad_bias.assign(std::size_t(c_out), T(0));

    TensorT<T> wmat = weight.reshaped({c_out, c_in * k * k});
    TensorT<T> gw_mat({c_out, c_in * k * k}, T(0));

    for (int b = 0; b < n; ++b) {
        // grad_bias
        for (int co = 0; co < c_out; ++co) {
            const T* plane = &grad_out.data[(std::size_t(b) * c_out + co) * oh * ow];
            T acc = 0;
            for (int i = 0; i < oh * ow; ++i) acc += plane[i];
            g.grad_bias[std::size_t(co)] += acc;
        }

        // grad_weight += grad_out_mat * col^T
        TensorT<T> col = im2col(input, b, k, stride, pad, oh, ow);
        const T* go = &grad_out.data[std::size_t(b) * c_out * oh * ow];
        const int hw = oh * ow, kk = c_in * k * k;
        for (int co = 0; co < c_out; ++co)
            for (int r = 0; r < kk; ++r) {
                const T* gr = go + std::size_t(co) * hw;
                const T* cr = &col.data[std::size_t(r) * hw];
                T acc = 0;
                for (int i = 0; i < hw; ++i) acc += gr[i] * cr[i];
                gw_mat.at(co, r) += acc;
            }

        // grad_input: col2im of wmat^T * grad_out_mat
        TensorT<T> gcol({kk, hw}, T(0));
        for (int co = 0; co < c_out; ++co) {
            const T* gr = go + std::size_t(co) * hw;
            const T* wr = &wmat.data[std::size_t(co) * kk];
            for (int r = 0; r < kk; ++r) {
                const T wv = wr[r];
                if (wv == T(0)) continue;
                T* dst = &gcol.data[std::size_t(r) * hw];
                for (int i = 0; i < hw; ++i) dst[i] += wv * gr[i];
            }
        }
        int row = 0;
        for (int ci = 0; ci < c_in; ++ci)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx, ++row) {
                    const T* src = &gcol.data[std::size_t(row) * hw];
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= w)
                                continue;
                            g.grad_input.at(b, ci, iy, ix) += src[oy * ow + ox];
                        }
                    }
                }
    }
    g.grad_weight = gw_mat.reshaped({c_out, c_in, k, k});
    return g;
}

template TensorT<float> conv2d<float>(const TensorT<float>&, const TensorT<float>&,
                                      const std::vector<float>&, int, int);
template TensorT<double> conv2d<double>(const TensorT<double>&, const TensorT<double>&,
                                        const std::vector<double>&, int, int);
template TensorT<float> conv2d_fast<float>(const TensorT<float>&, const TensorT<float>&,
                                           const std::vector<float>&, int, int);
template TensorT<double> conv2d_fast<double>(const TensorT<double>&, const TensorT<double>&,
                                             const std::vector<double>&, int, int);
template ConvGradsT<float> conv2d_grads<float>(const TensorT<float>&, const TensorT<float>&,
                                               const TensorT<float>&, int, int);
template ConvGradsT<double> conv2d_grads<double>(const TensorT<double>&, const TensorT<double>&,
                                                 const TensorT<double>&, int, int);
template TensorT<float> im2col<float>(const TensorT<float>&, int, int, int, int, int, int);
template TensorT<double> im2col<double>(const TensorT<double>&, int, int, int, int, int, int);

}  // namespace bknet
