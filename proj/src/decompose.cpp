#include "bknet/decompose.hpp"

#include <cmath>
#include <stdexcept>

#include "bknet/linalg.hpp"

namespace bknet {

template <class T>
DecompositionT<T> decompose_layer(const TensorT<T>& weight, int d, bool center) {
    if (weight.rank() != 4 || weight.shape[2] != weight.shape[3])
        throw std::invalid_argument("decompose_layer: weight must be c_out x c_in x k x k");
    const int c_out = weight.shape[0], c_in = weight.shape[1], k = weight.shape[2];
    const int kk = k * k, rows = c_out * c_in;
    if (d < 1 || d > kk)
        throw std::invalid_argument("decompose_layer: d=" + std::to_string(d) +
                                    " outside [1, " + std::to_string(kk) + "]");

    DecompositionT<T> out;
    if (kk == 1) {
        // 1x1 conv: coefficient matrix with a 1-D basis, exact.
        out.basis = TensorT<T>({1, 1}, T(1));
        out.coeff = weight.reshaped({c_out, c_in, 1});
        out.err2 = 0.0;
        return out;
    }

    // All spectral work in double; deployment tensors are cast at the end.
    Tensor64 theta({rows, kk});
    for (std::size_t i = 0; i < theta.numel(); ++i) theta.data[i] = double(weight.data[i]);

    std::vector<double> mean(std::size_t(kk), 0.0);
    if (center) {
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < kk; ++c) mean[std::size_t(c)] += theta.at(r, c);
        for (double& m : mean) m /= rows;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < kk; ++c) theta.at(r, c) -= mean[std::size_t(c)];
    }

    Tensor64 w({kk, kk}, 0.0);
    for (int a = 0; a < kk; ++a)
        for (int b = 0; b < kk; ++b) {
            double acc = 0;
            for (int r = 0; r < rows; ++r) acc += theta.at(r, a) * theta.at(r, b);
            w.at(a, b) = acc;
        }

    EigenSystem64 es = sym_eig(w);

    Tensor64 basis({d, kk});
    for (int m = 0; m < d; ++m)
        for (int c = 0; c < kk; ++c) basis.at(m, c) = es.eigenvectors.at(c, m);

    Tensor64 coeff({rows, d});
    for (int r = 0; r < rows; ++r)
        for (int m = 0; m < d; ++m) {
            double acc = 0;
            for (int c = 0; c < kk; ++c) acc += theta.at(r, c) * basis.at(m, c);
            coeff.at(r, m) = acc;
        }

    double err2 = 0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < kk; ++c) {
            double rec = 0;
            for (int m = 0; m < d; ++m) rec += coeff.at(r, m) * basis.at(m, c);
            double diff = theta.at(r, c) - rec;
            err2 += diff * diff;
        }
    out.err2 = err2;

    const int brows = d + (center ? 1 : 0);
    out.basis = TensorT<T>({brows, kk});
    for (int m = 0; m < d; ++m)
        for (int c = 0; c < kk; ++c) out.basis.at(m, c) = T(basis.at(m, c));
    out.coeff = TensorT<T>({c_out, c_in, brows});
    for (int r = 0; r < rows; ++r)
        for (int m = 0; m < d; ++m)
            out.coeff.data[std::size_t(r) * brows + m] = T(coeff.at(r, m));
    if (center) {
        for (int c = 0; c < kk; ++c) out.basis.at(d, c) = T(mean[std::size_t(c)]);
        for (int r = 0; r < rows; ++r) out.coeff.data[std::size_t(r) * brows + d] = T(1);
    }
    return out;
}

template <class T>
TensorT<T> reconstruct(const TensorT<T>& basis, const TensorT<T>& coeff, int kernel) {
    if (basis.rank() != 2 || coeff.rank() != 3 || coeff.shape[2] != basis.shape[0] ||
        basis.shape[1] != kernel * kernel)
        throw std::invalid_argument("reconstruct: basis/coeff shapes inconsistent");
    const int c_out = coeff.shape[0], c_in = coeff.shape[1], rows = basis.shape[0];
    TensorT<T> cmat = coeff.reshaped({c_out * c_in, rows});
    TensorT<T> flat = matmul(cmat, basis);
    return flat.reshaped({c_out, c_in, kernel, kernel});
}

TensorT<float> reconstruct(const DecomposedConvLayer& layer) {
    return reconstruct(layer.basis, layer.coeff, layer.kernel);
}

std::map<int, int> default_d_map(const Network& net, int d_default) {
    std::map<int, int> m;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (kind_of(net.layers[i]) != LayerKind::Conv) continue;
        const auto& conv = std::get<ConvLayer>(net.layers[i]);
        const int kk = conv.kernel() * conv.kernel();
        m[int(i)] = std::min(d_default, kk);
    }
    return m;
}

Network decompose_network(const Network& net, const std::map<int, int>& d_per_layer, bool center) {
    Network out = net;
    for (auto [idx, d] : d_per_layer) {
        if (idx < 0 || idx >= int(out.layers.size()))
            throw std::invalid_argument("decompose_network: layer index " + std::to_string(idx) +
                                        " out of range");
        if (kind_of(out.layers[std::size_t(idx)]) != LayerKind::Conv)
            throw std::invalid_argument("decompose_network: layer " + std::to_string(idx) +
                                        " is not a Conv layer");
        const auto& conv = std::get<ConvLayer>(out.layers[std::size_t(idx)]);
        const int k = conv.kernel();
        const bool one_by_one = (k == 1);
        Decomposition dec = decompose_layer(conv.weight, one_by_one ? 1 : d, center && !one_by_one);

        DecomposedConvLayer layer;
        layer.basis = std::move(dec.basis);
        layer.coeff = std::move(dec.coeff);
        layer.mask = full_mask(layer.coeff);
        layer.bias = conv.bias;
        layer.stride = conv.stride;
        layer.padding = conv.padding;
        layer.kernel = k;
        layer.d = one_by_one ? 1 : d;
        layer.centered = center && !one_by_one;
        out.layers[std::size_t(idx)] = std::move(layer);
    }
    return out;
}

template struct DecompositionT<float>;
template struct DecompositionT<double>;
template DecompositionT<float> decompose_layer<float>(const TensorT<float>&, int, bool);
template DecompositionT<double> decompose_layer<double>(const TensorT<double>&, int, bool);
template TensorT<float> reconstruct<float>(const TensorT<float>&, const TensorT<float>&, int);
template TensorT<double> reconstruct<double>(const TensorT<double>&, const TensorT<double>&, int);

}  // namespace bknet
