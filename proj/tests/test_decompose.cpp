#include <cmath>

#include "bknet/decompose.hpp"
#include "bknet/linalg.hpp"
#include "bknet/rng.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace bknet;
using namespace bknet::testing;

namespace {

// Discarded-eigenvalue tail from an independent full eigendecomposition of
// the kernel covariance, accumulated in double.
double eigen_tail_oracle(const Tensor& weight, int d) {
    const int c_out = weight.shape[0], c_in = weight.shape[1], k = weight.shape[2];
    const int kk = k * k, rows = c_out * c_in;
    Tensor64 theta({rows, kk});
    for (std::size_t i = 0; i < theta.numel(); ++i) theta.data[i] = double(weight.data[i]);
    Tensor64 w({kk, kk}, 0.0);
    for (int a = 0; a < kk; ++a)
        for (int b = 0; b < kk; ++b) {
            double acc = 0;
            for (int r = 0; r < rows; ++r) acc += theta.at(r, a) * theta.at(r, b);
            w.at(a, b) = acc;
        }
    EigenSystem64 es = sym_eig(w);
    double tail = 0;
    for (int i = d; i < kk; ++i) tail += es.eigenvalues[std::size_t(i)];
    return tail;
}

double frob2(const Tensor& t) {
    double acc = 0;
    for (float v : t.data) acc += double(v) * double(v);
    return acc;
}

}  // namespace

TEST_CASE("rank-1 weight decomposes exactly at d=1") {
    Rng rng(31);
    Tensor g({1, 1, 3, 3});
    fill_gaussian(g, rng);
    Tensor weight({4, 2, 3, 3});
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 2; ++j)
            for (int p = 0; p < 9; ++p)
                weight.data[(std::size_t(i) * 2 + j) * 9 + std::size_t(p)] = g.data[std::size_t(p)];

    Decomposition dec = decompose_layer(weight, 1);
    CHECK(dec.err2 <= 1e-10 * frob2(weight));

    // basis row is g normalized (up to sign)
    double norm = std::sqrt(frob2(g));
    double dot = 0;
    for (int p = 0; p < 9; ++p) dot += double(dec.basis.data[std::size_t(p)]) * g.data[std::size_t(p)] / norm;
    CHECK(std::abs(std::abs(dot) - 1.0) < 1e-5);
}

TEST_CASE("full basis d=k^2 reconstructs with negligible error") {
    Rng rng(33);
    Tensor weight({6, 4, 3, 3});
    fill_gaussian(weight, rng, 0.0, 0.2);
    Decomposition dec = decompose_layer(weight, 9);
    CHECK(dec.err2 <= 1e-8 * frob2(weight));

    Tensor rec = reconstruct(dec.basis, dec.coeff, 3);
    CHECK(rel_diff(rec, weight) < 1e-5);
}

TEST_CASE("err2 equals the discarded eigenvalue sum (64x64x3x3, d=5)") {
    Rng rng(35);
    Tensor weight({64, 64, 3, 3});
    fill_gaussian(weight, rng, 0.0, 0.05);
    Decomposition dec = decompose_layer(weight, 5);
    const double tail = eigen_tail_oracle(weight, 5);
    CHECK(std::abs(dec.err2 - tail) <= 1e-4 * tail);
}

TEST_CASE("basis rows are orthonormal after decomposition") {
    Rng rng(37);
    Tensor weight({8, 8, 3, 3});
    fill_gaussian(weight, rng, 0.0, 0.2);
    Decomposition dec = decompose_layer(weight, 5);
    for (int a = 0; a < 5; ++a)
        for (int b = 0; b < 5; ++b) {
            double dot = 0;
            for (int p = 0; p < 9; ++p) dot += double(dec.basis.at(a, p)) * dec.basis.at(b, p);
            CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) <= 1e-5);
        }
}

TEST_CASE("err2 is non-increasing in d and satisfies Pythagoras") {
    Rng rng(39);
    Tensor weight({8, 4, 3, 3});
    fill_gaussian(weight, rng, 0.0, 0.3);
    const double total = frob2(weight);
    double prev = 1e300;
    for (int d = 1; d <= 9; ++d) {
        Decomposition dec = decompose_layer(weight, d);
        CHECK(dec.err2 <= prev + 1e-9 * total);
        prev = dec.err2;

        Tensor rec = reconstruct(dec.basis, dec.coeff, 3);
        const double rec2 = frob2(rec);
        CHECK(std::abs(total - rec2 - dec.err2) <= 1e-4 * total);
    }
}

TEST_CASE("projection is idempotent") {
    Rng rng(41);
    Tensor weight({8, 4, 3, 3});
    fill_gaussian(weight, rng, 0.0, 0.3);
    Decomposition first = decompose_layer(weight, 4);
    Tensor rec = reconstruct(first.basis, first.coeff, 3);
    Decomposition second = decompose_layer(rec, 4);
    CHECK(second.err2 <= 1e-8 * frob2(rec));
}

TEST_CASE("reconstruct edge cases") {
    Rng rng(43);
    Tensor basis({2, 9});
    fill_gaussian(basis, rng);

    Tensor coeff({3, 2, 2}, 0.0f);
    Tensor rec = reconstruct(basis, coeff, 3);
    CHECK(max_abs(rec) == 0.0f);

    Tensor coeff1({3, 2, 1}, 1.0f);
    Tensor basis1({1, 9});
    fill_gaussian(basis1, rng);
    Tensor rec1 = reconstruct(basis1, coeff1, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j)
            for (int p = 0; p < 9; ++p)
                CHECK(rec1.data[(std::size_t(i) * 2 + j) * 9 + std::size_t(p)] ==
                      doctest::Approx(basis1.data[std::size_t(p)]));
}

TEST_CASE("d out of range is rejected") {
    Tensor weight({2, 2, 3, 3}, 0.1f);
    CHECK_THROWS(decompose_layer(weight, 0));
    CHECK_THROWS(decompose_layer(weight, 10));
}

TEST_CASE("1x1 conv becomes the exact 1-D basis representation") {
    Rng rng(45);
    Network net;
    net.input_shape = {4, 4, 4};
    net.layers.push_back(random_conv(6, 4, 1, rng, 1, 0));
    const Tensor original = std::get<ConvLayer>(net.layers[0]).weight;

    Network dec = decompose_network(net, {{0, 1}});
    const auto& l = std::get<DecomposedConvLayer>(dec.layers[0]);
    CHECK(l.basis.shape == std::vector<int>{1, 1});
    CHECK(l.basis.data[0] == 1.0f);
    CHECK(l.coeff.data == original.data);
    CHECK(validate(dec).empty());
}

TEST_CASE("decomposed forward at d=k^2 matches the dense forward") {
    Rng rng(47);
    Network net = small_cnn(rng);
    Tensor in = random_batch(net, 2, rng);
    Tensor dense_logits = forward(net, in);

    Network dec = decompose_network(net, default_d_map(net, 9));
    CHECK(validate(dec).empty());
    Tensor dec_logits = forward(dec, in);
    CHECK(rel_diff(dec_logits, dense_logits) < 1e-4);
}

TEST_CASE("per-layer d map is honored, including a 7x7 first layer at d=14") {
    Rng rng(49);
    Network net;
    net.input_shape = {3, 16, 16};
    net.layers.push_back(random_conv(8, 3, 7, rng, 1, 3));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(random_conv(8, 8, 3, rng));

    Network dec = decompose_network(net, {{0, 14}, {2, 5}});
    CHECK(validate(dec).empty());
    CHECK(std::get<DecomposedConvLayer>(dec.layers[0]).d == 14);
    CHECK(std::get<DecomposedConvLayer>(dec.layers[0]).basis.shape ==
          std::vector<int>{14, 49});
    CHECK(std::get<DecomposedConvLayer>(dec.layers[2]).d == 5);
}

TEST_CASE("decompose_network rejects bad targets") {
    Rng rng(51);
    Network net = small_cnn(rng);
    CHECK_THROWS(decompose_network(net, {{1, 5}}));   // ReLU
    CHECK_THROWS(decompose_network(net, {{99, 5}}));  // out of range
}

TEST_CASE("centered variant stores the mean as a frozen extra basis row") {
    Rng rng(53);
    Tensor weight({6, 4, 3, 3});
    fill_gaussian(weight, rng, 0.5, 0.2);  // nonzero mean makes centering visible
    Decomposition dec = decompose_layer(weight, 3, true);
    CHECK(dec.basis.shape == std::vector<int>{4, 9});
    CHECK(dec.coeff.shape == std::vector<int>{6, 4, 4});
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 4; ++j) CHECK(dec.coeff.at(i, j, 3) == 1.0f);

    // reconstruction includes the mean row, so full rank is exact
    Decomposition full = decompose_layer(weight, 9, true);
    Tensor rec = reconstruct(full.basis, full.coeff, 3);
    CHECK(rel_diff(rec, weight) < 1e-5);

    // at equal d the centered residual cannot exceed the uncentered one
    Decomposition plain = decompose_layer(weight, 3, false);
    CHECK(dec.err2 <= plain.err2 * (1.0 + 1e-6));
}

TEST_CASE("VGG16 at d=5 has 585 basis floats across 13 conv layers") {
    // 13 layers x 5 basis kernels x 9 entries
    int widths_in[] = {3, 64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512};
    int widths_out[] = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
    Rng rng(55);
    int basis_floats = 0;
    for (int l = 0; l < 13; ++l) {
        Tensor w({widths_out[l], widths_in[l], 3, 3});
        fill_gaussian(w, rng, 0.0, 0.02);
        Decomposition dec = decompose_layer(w, 5);
        basis_floats += int(dec.basis.numel());
    }
    CHECK(basis_floats == 585);
}
