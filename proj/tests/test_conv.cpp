#include <cmath>
#include <stdexcept>

#include "bknet/conv.hpp"
#include "bknet/rng.hpp"
#include "doctest.h"

using namespace bknet;

namespace {

// Nested-loop direct convolution oracle, written independently of the
// library path (sums in a different loop order).
template <class T>
TensorT<T> conv_oracle(const TensorT<T>& in, const TensorT<T>& w, const std::vector<T>& bias,
                       int stride, int pad) {
    const int n = in.shape[0], ci_n = in.shape[1], h = in.shape[2], ww = in.shape[3];
    const int co_n = w.shape[0], k = w.shape[2];
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (ww + 2 * pad - k) / stride + 1;
    TensorT<T> out({n, co_n, oh, ow}, T(0));
    for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx)
            for (int ci = 0; ci < ci_n; ++ci)
                for (int co = 0; co < co_n; ++co)
                    for (int b = 0; b < n; ++b)
                        for (int oy = 0; oy < oh; ++oy)
                            for (int ox = 0; ox < ow; ++ox) {
                                int iy = oy * stride - pad + ky;
                                int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= ww) continue;
                                out.at(b, co, oy, ox) += in.at(b, ci, iy, ix) * w.at(co, ci, ky, kx);
                            }
    if (!bias.empty())
        for (int b = 0; b < n; ++b)
            for (int co = 0; co < co_n; ++co)
                for (int i = 0; i < oh * ow; ++i)
                    out.data[(std::size_t(b) * co_n + co) * oh * ow + i] += bias[std::size_t(co)];
    return out;
}

// Central finite differences of a scalar loss over one tensor argument.
template <class T, class LossFn>
TensorT<T> fd_grad(TensorT<T>& param, LossFn loss, T step) {
    TensorT<T> g(param.shape, T(0));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        T keep = param.data[i];
        param.data[i] = keep + step;
        T hi = loss();
        param.data[i] = keep - step;
        T lo = loss();
        param.data[i] = keep;
        g.data[i] = (hi - lo) / (2 * step);
    }
    return g;
}

template <class T>
bool grads_close(const TensorT<T>& a, const TensorT<T>& b, double tol, double atol) {
    for (std::size_t i = 0; i < a.numel(); ++i) {
        double x = a.data[i], y = b.data[i];
        if (std::abs(x - y) > tol * std::max(std::abs(x), std::abs(y)) + atol) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("conv2d all-ones 3x3 gives 9 plus bias") {
    Tensor in({1, 1, 3, 3}, 1.0f);
    Tensor w({1, 1, 3, 3}, 1.0f);
    Tensor out = conv2d(in, w, {0.5f}, 1, 0);
    CHECK(out.shape == std::vector<int>{1, 1, 1, 1});
    CHECK(out.data[0] == doctest::Approx(9.5f));
}

TEST_CASE("conv2d delta kernel with same padding is identity") {
    Rng rng(3);
    Tensor in({1, 1, 5, 5});
    fill_gaussian(in, rng);
    Tensor w({1, 1, 3, 3}, 0.0f);
    w.at(0, 0, 1, 1) = 1.0f;
    Tensor out = conv2d(in, w, {0.0f}, 1, 1);
    CHECK(rel_diff(out, in) == 0.0);
}

TEST_CASE("conv2d matches nested-loop oracle on random 1x2x5x5") {
    Rng rng(17);
    Tensor in({1, 2, 5, 5}), w({3, 2, 3, 3});
    fill_gaussian(in, rng);
    fill_gaussian(w, rng);
    std::vector<float> bias = {0.1f, -0.2f, 0.3f};
    CHECK(rel_diff(conv2d(in, w, bias, 1, 0), conv_oracle(in, w, bias, 1, 0)) < 1e-6);
    CHECK(rel_diff(conv2d(in, w, bias, 1, 1), conv_oracle(in, w, bias, 1, 1)) < 1e-6);
    CHECK(rel_diff(conv2d(in, w, bias, 2, 1), conv_oracle(in, w, bias, 2, 1)) < 1e-6);
}

TEST_CASE("conv2d equals im2col path on random shapes up to 2x8x16x16") {
    Rng rng(23);
    const int cases[][6] = {
        // n, c_in, c_out, hw, stride, pad
        {1, 1, 1, 4, 1, 0}, {2, 3, 4, 8, 1, 1}, {2, 8, 6, 16, 2, 1},
        {1, 4, 8, 9, 2, 0},  {2, 8, 8, 16, 1, 2},
    };
    for (auto& c : cases) {
        Tensor in({c[0], c[1], c[3], c[3]}), w({c[2], c[1], 3, 3});
        fill_gaussian(in, rng);
        fill_gaussian(w, rng);
        std::vector<float> bias(static_cast<std::size_t>(c[2]));
        for (auto& b : bias) b = float(rng.gaussian());
        int span = c[3] + 2 * c[5] - 3;
        if (span % c[4] != 0) continue;
        Tensor a = conv2d(in, w, bias, c[4], c[5]);
        Tensor b = conv2d_fast(in, w, bias, c[4], c[5]);
        CHECK(rel_diff(a, b) < 1e-6);
    }
}

TEST_CASE("conv2d linearity in the input with zero bias") {
    Rng rng(29);
    Tensor in({1, 3, 6, 6}), w({2, 3, 3, 3});
    fill_gaussian(in, rng);
    fill_gaussian(w, rng);
    Tensor scaled = in;
    scale_inplace(scaled, 2.5f);
    Tensor lhs = conv2d(scaled, w, {}, 1, 1);
    Tensor rhs = conv2d(in, w, {}, 1, 1);
    scale_inplace(rhs, 2.5f);
    CHECK(rel_diff(lhs, rhs) < 1e-6);
}

TEST_CASE("conv2d rejects bad shapes and inexact extents") {
    Tensor in({1, 2, 5, 5}), w({3, 3, 3, 3});
    CHECK_THROWS_AS(conv2d(in, w, {}, 1, 0), std::invalid_argument);
    Tensor w2({3, 2, 3, 3});
    // (5+2-3)=4 not divisible by 3
    CHECK_THROWS_AS(conv2d(in, w2, {}, 3, 1), std::invalid_argument);
}

TEST_CASE("conv2d_grads zero upstream gives zero gradients") {
    Rng rng(31);
    Tensor in({1, 2, 4, 4}), w({2, 2, 3, 3});
    fill_gaussian(in, rng);
    fill_gaussian(w, rng);
    Tensor go({1, 2, 2, 2}, 0.0f);
    auto g = conv2d_grads(in, w, go, 1, 0);
    CHECK(max_abs(g.grad_input) == 0.0f);
    CHECK(max_abs(g.grad_weight) == 0.0f);
    for (float b : g.grad_bias) CHECK(b == 0.0f);
}

TEST_CASE("conv2d_grads single-pixel upstream copies the input patch") {
    Rng rng(37);
    Tensor in({1, 1, 4, 4}), w({1, 1, 3, 3});
    fill_gaussian(in, rng);
    fill_gaussian(w, rng);
    Tensor go({1, 1, 2, 2}, 0.0f);
    go.at(0, 0, 1, 1) = 1.0f;  // output pixel (1,1) covers input rows/cols 1..3
    auto g = conv2d_grads(in, w, go, 1, 0);
    for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
            CHECK(g.grad_weight.at(0, 0, ky, kx) == doctest::Approx(in.at(0, 0, 1 + ky, 1 + kx)));
}

TEST_CASE("conv2d_grads matches finite differences (float, step 1e-3)") {
    Rng rng(41);
    Tensor in({1, 2, 5, 5}), w({2, 2, 3, 3}), r({1, 2, 3, 3});
    fill_gaussian(in, rng);
    fill_gaussian(w, rng);
    fill_gaussian(r, rng);
    std::vector<float> bias = {0.1f, -0.3f};

    auto loss = [&]() {
        Tensor out = conv2d(in, w, bias, 1, 0);
        float s = 0;
        for (std::size_t i = 0; i < out.numel(); ++i) s += out.data[i] * r.data[i];
        return s;
    };
    auto g = conv2d_grads(in, w, r, 1, 0);
    CHECK(grads_close(fd_grad(in, loss, 1e-3f), g.grad_input, 1e-3, 1e-3));
    CHECK(grads_close(fd_grad(w, loss, 1e-3f), g.grad_weight, 1e-3, 1e-3));
}

TEST_CASE("conv2d_grads matches finite differences on 20 random instances (double, step 1e-5)") {
    Rng rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + int(rng.below(2));
        const int ci = 1 + int(rng.below(3));
        const int co = 1 + int(rng.below(3));
        const int hw = 4 + int(rng.below(3));
        const int pad = int(rng.below(2));
        const int k = 3;
        int stride = 1 + int(rng.below(2));
        if ((hw + 2 * pad - k) % stride != 0) stride = 1;

        Tensor64 in({n, ci, hw, hw}), w({co, ci, k, k});
        fill_gaussian(in, rng);
        fill_gaussian(w, rng);
        const int oh = conv_out_extent(hw, k, stride, pad);
        Tensor64 r({n, co, oh, oh});
        fill_gaussian(r, rng);

        auto loss = [&]() {
            Tensor64 out = conv2d(in, w, std::vector<double>{}, stride, pad);
            double s = 0;
            for (std::size_t i = 0; i < out.numel(); ++i) s += out.data[i] * r.data[i];
            return s;
        };
        auto g = conv2d_grads(in, w, r, stride, pad);
        CHECK(grads_close(fd_grad(in, loss, 1e-5), g.grad_input, 1e-6, 1e-9));
        CHECK(grads_close(fd_grad(w, loss, 1e-5), g.grad_weight, 1e-6, 1e-9));
    }
}

TEST_CASE("conv2d_grads rejects mismatched upstream shape") {
    Tensor in({1, 1, 4, 4}), w({1, 1, 3, 3}), go({1, 1, 3, 3});
    CHECK_THROWS_AS(conv2d_grads(in, w, go, 1, 0), std::invalid_argument);
}
