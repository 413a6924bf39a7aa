#include <cmath>

#include "bknet/conv.hpp"
#include "bknet/decompose.hpp"
#include "bknet/runtime.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace bknet;
using namespace bknet::testing;

namespace {

DecomposedConvLayer random_decomposed(Rng& rng, int c_out, int c_in, int d, double zero_p = 0.0) {
    Network tmp;
    tmp.input_shape = {c_in, 6, 6};
    tmp.layers.push_back(random_conv(c_out, c_in, 3, rng));
    tmp = decompose_network(tmp, {{0, d}});
    auto l = std::get<DecomposedConvLayer>(tmp.layers[0]);
    for (std::size_t i = 0; i < l.coeff.numel(); ++i)
        if (rng.uniform() < zero_p) {
            l.coeff.data[i] = 0.0f;
            l.mask[i] = 0;
        }
    return l;
}

}  // namespace

TEST_CASE("CSR stores exactly the nonzeros and expands losslessly") {
    Rng rng(141);
    Tensor coeff({3, 4, 5});
    fill_gaussian(coeff, rng);
    for (std::size_t i = 0; i < coeff.numel(); i += 3) coeff.data[i] = 0.0f;

    CsrCoefficients csr = csr_from_coeff(coeff);
    std::size_t nz = 0;
    for (float v : coeff.data)
        if (v != 0.0f) ++nz;
    CHECK(csr.nnz() == nz);
    for (int i = 0; i < 3; ++i)
        for (int p = csr.row_ptr[std::size_t(i)] + 1; p < csr.row_ptr[std::size_t(i) + 1]; ++p)
            CHECK(csr.col[std::size_t(p - 1)] < csr.col[std::size_t(p)]);  // sorted per row

    Tensor back = csr_expand(csr);
    CHECK(back.data == coeff.data);

    Tensor dense({2, 2, 2}, 1.0f);
    CHECK(csr_from_coeff(dense).nnz() == 8);
    Tensor zeros({2, 2, 2}, 0.0f);
    CsrCoefficients empty = csr_from_coeff(zeros);
    CHECK(empty.nnz() == 0);
    for (int rp : empty.row_ptr) CHECK(rp == 0);
}

TEST_CASE("stage1 with a delta kernel replicates the input layout") {
    Rng rng(143);
    Tensor input({1, 2, 4, 4});
    fill_gaussian(input, rng);
    Tensor basis({1, 9}, 0.0f);
    basis.at(0, 4) = 1.0f;  // center tap
    Tensor planes = stage1(input, basis, 3, 1, 1);
    CHECK(planes.shape == std::vector<int>{1, 2, 4, 4});
    CHECK(rel_diff(planes, input) == 0.0);
}

TEST_CASE("stage1 planes match per-channel conv2d") {
    Rng rng(145);
    Tensor input({2, 3, 5, 5});
    fill_gaussian(input, rng);
    Tensor basis({4, 9});
    fill_gaussian(basis, rng);

    Tensor planes = stage1(input, basis, 3, 1, 1);
    CHECK(planes.shape == std::vector<int>{2, 12, 5, 5});
    for (int j = 0; j < 3; ++j)
        for (int m = 0; m < 4; ++m) {
            Tensor one({2, 1, 5, 5});
            for (int b = 0; b < 2; ++b)
                for (int p = 0; p < 25; ++p)
                    one.data[std::size_t(b) * 25 + std::size_t(p)] =
                        input.data[(std::size_t(b) * 3 + j) * 25 + std::size_t(p)];
            Tensor w({1, 1, 3, 3});
            for (int t = 0; t < 9; ++t) w.data[std::size_t(t)] = basis.at(m, t);
            Tensor ref = conv2d(one, w, {}, 1, 1);
            for (int b = 0; b < 2; ++b)
                for (int p = 0; p < 25; ++p) {
                    const float got =
                        planes.data[((std::size_t(b) * 12) + std::size_t(j * 4 + m)) * 25 +
                                    std::size_t(p)];
                    CHECK(got ==
                          doctest::Approx(ref.data[std::size_t(b) * 25 + std::size_t(p)])
                              .epsilon(1e-6));
                }
        }
}

TEST_CASE("stage1 with c_in=1 gives d plain convolution planes") {
    Rng rng(147);
    Tensor input({1, 1, 4, 4});
    fill_gaussian(input, rng);
    Tensor basis({3, 9});
    fill_gaussian(basis, rng);
    Tensor planes = stage1(input, basis, 3, 1, 1);
    CHECK(planes.shape == std::vector<int>{1, 3, 4, 4});
}

TEST_CASE("stage2 handles empty rows and single entries") {
    Tensor inter({1, 4, 2, 2});
    for (std::size_t i = 0; i < inter.numel(); ++i) inter.data[i] = float(i + 1);

    CsrCoefficients csr;
    csr.c_out = 2;
    csr.c_in = 2;
    csr.d = 2;
    csr.row_ptr = {0, 0, 1};  // row 0 empty; row 1 single entry (col 0, val 2)
    csr.col = {0};
    csr.val = {2.0f};
    std::vector<float> bias = {0.25f, -1.0f};

    Tensor out = stage2(inter, csr, bias, 2, 2);
    for (int p = 0; p < 4; ++p) CHECK(out.data[std::size_t(p)] == 0.25f);
    for (int p = 0; p < 4; ++p)
        CHECK(out.data[4 + std::size_t(p)] ==
              doctest::Approx(2.0f * inter.data[std::size_t(p)] - 1.0f));
}

TEST_CASE("stage2 equals the dense contraction oracle") {
    Rng rng(149);
    Tensor coeff({3, 2, 4});
    fill_gaussian(coeff, rng);
    for (std::size_t i = 0; i < coeff.numel(); i += 2) coeff.data[i] = 0.0f;
    Tensor inter({2, 8, 3, 3});
    fill_gaussian(inter, rng);
    std::vector<float> bias = {0.1f, 0.2f, 0.3f};

    Tensor out = stage2(inter, csr_from_coeff(coeff), bias, 3, 3);

    // oracle: dense einsum over (j, m)
    Tensor expect({2, 3, 3, 3}, 0.0f);
    for (int b = 0; b < 2; ++b)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 2; ++j)
                for (int m = 0; m < 4; ++m)
                    for (int p = 0; p < 9; ++p)
                        expect.data[(std::size_t(b) * 3 + i) * 9 + std::size_t(p)] +=
                            coeff.at(i, j, m) *
                            inter.data[(std::size_t(b) * 8 + std::size_t(j * 4 + m)) * 9 +
                                       std::size_t(p)];
    for (int b = 0; b < 2; ++b)
        for (int i = 0; i < 3; ++i)
            for (int p = 0; p < 9; ++p)
                expect.data[(std::size_t(b) * 3 + i) * 9 + std::size_t(p)] += bias[std::size_t(i)];
    CHECK(rel_diff(out, expect) < 1e-6);
}

TEST_CASE("two-stage path equals dense convolution with reconstructed weights") {
    Rng rng(151);
    for (int trial = 0; trial < 10; ++trial) {
        const int c_in = 1 + int(rng.below(4));
        const int c_out = 1 + int(rng.below(5));
        const int d = 1 + int(rng.below(4));
        DecomposedConvLayer l = random_decomposed(rng, c_out, c_in, std::min(d, 9), 0.4);
        const int stride = 1 + int(rng.below(2));
        l.stride = stride;
        l.padding = 1;

        const int hw = stride == 2 ? 7 : 6;
        Tensor input({2, c_in, hw, hw});
        fill_gaussian(input, rng);

        Tensor theta = reconstruct(l);
        Tensor ref = conv2d(input, theta, l.bias, l.stride, l.padding);

        const int oh = conv_out_extent(hw, 3, l.stride, l.padding);
        Tensor inter = stage1(input, l.basis, 3, l.stride, l.padding);
        Tensor got = stage2(inter, csr_from_coeff(l.coeff), l.bias, oh, oh);
        CHECK(rel_diff(ref, got) < 1e-5);
    }
}

TEST_CASE("infer matches forward on a compiled decomposed network") {
    Rng rng(153);
    Network net = small_cnn(rng);
    net = decompose_network(net, default_d_map(net, 9));
    Tensor in = random_batch(net, 3, rng);
    Tensor ref = forward(net, in);

    CompiledSparseModel model = compile(net);
    Tensor got = infer(model, in);
    CHECK(rel_diff(ref, got) < 1e-5);

    // deterministic across runs
    Tensor again = infer(model, in);
    CHECK(got.data == again.data);
}

TEST_CASE("infer with every coefficient pruned is driven by biases alone") {
    Rng rng(155);
    Network net;
    net.input_shape = {2, 4, 4};
    net.layers.push_back(random_conv(3, 2, 3, rng));
    net = decompose_network(net, {{0, 4}});
    auto& l = std::get<DecomposedConvLayer>(net.layers[0]);
    l.coeff.fill(0.0f);
    std::fill(l.mask.begin(), l.mask.end(), std::uint8_t(0));
    l.bias = {0.5f, -1.5f, 2.0f};

    CompiledSparseModel model = compile(net);
    Tensor in = random_batch(net, 1, rng);
    Tensor out = infer(model, in);
    for (int c = 0; c < 3; ++c)
        for (int p = 0; p < 16; ++p)
            CHECK(out.data[std::size_t(c) * 16 + std::size_t(p)] == l.bias[std::size_t(c)]);
}

TEST_CASE("infer handles skip edges like forward") {
    Rng rng(157);
    Network net;
    net.input_shape = {3, 6, 6};
    net.layers.push_back(random_conv(4, 3, 3, rng));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(random_conv(4, 4, 3, rng));
    ConvLayer proj = random_conv(4, 3, 1, rng, 1, 0);
    net.skips.push_back({-1, 2, proj});
    net.skips.push_back({0, 2, std::nullopt});
    net = decompose_network(net, default_d_map(net, 6));
    REQUIRE(validate(net).empty());

    Tensor in = random_batch(net, 2, rng);
    CompiledSparseModel model = compile(net);
    CHECK(rel_diff(forward(net, in), infer(model, in)) < 1e-5);
}

TEST_CASE("flop ledger follows the closed-form counts on random shapes") {
    Rng rng(159);
    for (int trial = 0; trial < 10; ++trial) {
        const int c_in = 1 + int(rng.below(6));
        const int c_out = 1 + int(rng.below(8));
        const int d = 1 + int(rng.below(5));
        const int hw = 4 + 2 * int(rng.below(4));
        Network net;
        net.input_shape = {c_in, hw, hw};
        net.layers.push_back(random_conv(c_out, c_in, 3, rng));
        net = decompose_network(net, {{0, std::min(d, 9)}});
        auto& l = std::get<DecomposedConvLayer>(net.layers[0]);
        std::size_t nnz = 0;
        for (std::size_t i = 0; i < l.coeff.numel(); ++i) {
            if (rng.uniform() < 0.5) l.coeff.data[i] = 0.0f;
            if (l.coeff.data[i] != 0.0f) ++nnz;
        }

        FlopLedger ledger = count_flops(net);
        REQUIRE(ledger.layers.size() == 1);
        const auto& f = ledger.layers[0];
        const std::uint64_t ohw = std::uint64_t(hw) * hw;
        CHECK(f.dense_macs == std::uint64_t(c_out) * c_in * 9 * ohw);
        CHECK(f.stage1_macs == std::uint64_t(c_in) * l.d * 9 * ohw);
        CHECK(f.stage2_macs == nnz * ohw);
        CHECK(f.two_stage_total == f.stage1_macs + f.stage2_macs);
        CHECK(f.params_conv == l.basis.numel() + nnz);

        // the computable superiority condition
        const double bound = double(c_in) * c_out * (9.0 - double(l.d) * 9.0 / c_out);
        if (l.d < c_out && double(nnz) < bound) CHECK(f.two_stage_total < f.dense_macs);
    }
}

TEST_CASE("ledger totals are additive over layers") {
    Rng rng(161);
    Network net = small_cnn(rng);
    net = decompose_network(net, default_d_map(net, 5));
    FlopLedger ledger = count_flops(net);
    std::uint64_t dense = 0, two = 0, params = 0;
    for (const auto& f : ledger.layers) {
        dense += f.dense_macs;
        two += f.two_stage_total;
        params += f.params;
    }
    CHECK(dense == ledger.dense_macs_total);
    CHECK(two == ledger.two_stage_total);
    CHECK(params == ledger.params_total);
}

TEST_CASE("dense conv 64->64 k3 at 32x32 counts 37748736 MACs") {
    Rng rng(163);
    Network net;
    net.input_shape = {64, 32, 32};
    net.layers.push_back(random_conv(64, 64, 3, rng));
    FlopLedger ledger = count_flops(net);
    CHECK(ledger.dense_macs_total == 37748736ull);
}

TEST_CASE("benchmark on a tiny model produces ordered statistics") {
    Rng rng(165);
    Network net;
    net.input_shape = {4, 8, 8};
    net.layers.push_back(random_conv(8, 4, 3, rng));
    net = decompose_network(net, {{0, 5}});
    BenchmarkResult res = benchmark(net, 1, 5);
    CHECK(res.dense_median_ms > 0);
    CHECK(res.two_stage_median_ms > 0);
    CHECK(res.dense_p95_ms >= res.dense_median_ms);
    CHECK(res.two_stage_p95_ms >= res.two_stage_median_ms);
    CHECK(res.two_stage_peak_mb > 0);
    CHECK_THROWS(benchmark(net, 1, 3));  // repetitions >= 5
}

TEST_CASE("parallel stage execution is bit-identical to serial") {
    Rng rng(167);
    Network net = small_cnn(rng);
    net = decompose_network(net, default_d_map(net, 5));
    CompiledSparseModel model = compile(net);
    Tensor in = random_batch(net, 4, rng);
    Tensor serial = infer(model, in, 0);
    Tensor threaded = infer(model, in, 3);
    CHECK(serial.data == threaded.data);
}
