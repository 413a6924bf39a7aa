#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bknet/network.hpp"

namespace bknet {

// Sparse coefficient rows: per output channel, (col, val) pairs sorted by
// col where col = input_channel * d + basis_index. No explicit zeros.
struct CsrCoefficients {
    int c_out = 0, c_in = 0, d = 0;  // d counts stored basis rows
    std::vector<int> row_ptr;        // length c_out + 1
    std::vector<int> col;
    std::vector<float> val;

    std::size_t nnz() const { return val.size(); }
};

CsrCoefficients csr_from_coeff(const Tensor& coeff);
Tensor csr_expand(const CsrCoefficients& csr);  // c_out x c_in x d, exact

struct CompiledDecomposed {
    Tensor basis;  // rows x k^2
    CsrCoefficients coeff;
    std::vector<float> bias;
    int stride = 1, padding = 0, kernel = 3;
    Tensor dense_weight;  // reconstructed, for the dense reference path
};

struct CompiledLayer {
    LayerKind kind;
    CompiledDecomposed dec;  // when kind == DecomposedConv
    LayerSpec op;            // all other kinds (and projections)
};

struct LayerFlops {
    int layer = -1;
    std::string name;
    std::uint64_t dense_macs = 0;
    std::uint64_t stage1_macs = 0;
    std::uint64_t stage2_macs = 0;
    std::uint64_t two_stage_total = 0;  // stage1+stage2, or dense_macs for plain layers
    std::uint64_t params = 0;
    std::uint64_t params_conv = 0;  // conv weights only: basis + nnz, or dense kernel
};

struct FlopLedger {
    std::vector<LayerFlops> layers;
    std::uint64_t dense_macs_total = 0;
    std::uint64_t two_stage_total = 0;
    std::uint64_t params_total = 0;
    std::uint64_t params_conv_total = 0;

    std::string to_json() const;
};

// MAC and parameter accounting at the network's declared input size.
// One MAC is one FLOP unit; zeros in coefficient tensors are not counted.
FlopLedger count_flops(const Network& net);

struct CompiledSparseModel {
    std::vector<CompiledLayer> layers;
    std::vector<SkipEdge> skips;
    std::array<int, 3> input_shape{};
    int num_classes = 0;
    FlopLedger ledger;
};

CompiledSparseModel compile(const Network& net);

// Stage 1: channel-by-channel convolution with each basis kernel.
// Output plane (j, m) sits at index j * rows + m; c_in * rows planes.
Tensor stage1(const Tensor& input, const Tensor& basis, int kernel, int stride, int padding,
              int threads = 0);

// Stage 2: sparse weighted sum over intermediate planes plus bias.
Tensor stage2(const Tensor& intermediate, const CsrCoefficients& coeffs,
              const std::vector<float>& bias, int out_h, int out_w, int threads = 0);

// Two-stage inference; matches the reconstruction-path forward.
Tensor infer(const CompiledSparseModel& model, const Tensor& batch, int threads = 0);

struct BenchmarkResult {
    int batch = 1, repetitions = 0, threads = 0;
    double dense_median_ms = 0, dense_p95_ms = 0;
    double two_stage_median_ms = 0, two_stage_p95_ms = 0;
    double stage1_median_ms = 0, stage2_median_ms = 0;
    double dense_peak_mb = 0, two_stage_peak_mb = 0;

    std::string to_json() const;
    std::string to_csv() const;
};

// Wall-clock comparison of the dense path (reconstructed weights through
// im2col convolution) and the two-stage sparse path on the same model.
// Warmup runs are excluded; medians over `repetitions` timed runs.
BenchmarkResult benchmark(const Network& net, int batch, int repetitions, int threads = 0);

}  // namespace bknet
