#pragma once

#include <string>
#include <vector>

#include "bknet/network.hpp"

namespace bknet {

struct LayerSparsity {
    int layer = -1;
    int width = 0;  // output channels
    int d = 0;
    std::size_t nnz = 0;
    std::size_t total = 0;
    double sparsity_pct = 0;  // 100 * (1 - nnz/total)
};

struct SparsityReport {
    std::vector<LayerSparsity> layers;
    std::size_t nnz_total = 0;
    std::size_t coeff_total = 0;
    double sparsity_pct = 0;

    std::string to_json() const;
};

// s * population standard deviation over all coefficient entries
// (mean-centered, zeros included). With nonzero_only the statistic runs
// over nonzero entries instead. Pinned mean-row coefficients of centered
// layers are excluded either way.
double compute_threshold(const DecomposedConvLayer& layer, double s, bool nonzero_only = false);

// Per-layer magnitude pruning: |a| < tau prunes (mask cleared, value set
// to exactly +0.0), equality survives; already-pruned slots stay pruned.
SparsityReport prune(Network& net, double s, bool std_nonzero_only = false);

// Counts without modifying the network.
SparsityReport sparsity_report(const Network& net);

}  // namespace bknet
