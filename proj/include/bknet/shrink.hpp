#pragma once

#include <string>
#include <vector>

#include "bknet/network.hpp"

namespace bknet {

struct LayerRedundancy {
    int layer = -1;
    std::vector<int> p_in;   // nonzero-coefficient count per input channel
    std::vector<int> p_out;  // per output channel
    std::vector<int> in_set;   // P_in: indices with p_in == 0
    std::vector<int> out_set;  // P_out: indices with p_out == 0
    std::vector<int> dead_basis;
};

// Wire w carries the activation entering layer w (wire 0 is the network
// input, wire i+1 the output of layer i, after any skip addition).
// Wires joined by pass-through layers form a segment (identical dead
// sets); segments joined by identity skips form a removal group (their
// retained channel sets must match).
struct RedundancyReport {
    std::vector<LayerRedundancy> layers;  // one entry per decomposed layer
    std::vector<int> segment_of;          // wire -> segment root wire
    std::vector<int> group_of;            // wire -> removal group root wire
    std::vector<std::vector<char>> wire_dead;       // per wire, flag per channel
    std::vector<std::vector<char>> wire_removable;  // per wire (uniform per group)
    int iterations_to_fixpoint = 0;
};

// p_in / p_out / dead basis indices of one layer's coefficients.
LayerRedundancy redundancy_vectors(const DecomposedConvLayer& layer);

// Iterates redundancy-set propagation to a fixpoint: adjacent layers
// unify through the shared wire, projection merges intersect the two
// producer-side sets, identity skips require deadness at both endpoints,
// and every implied coefficient is zeroed (masks cleared). Mutates `net`.
RedundancyReport propagate(Network& net);

struct WidthRow {
    int layer = -1;
    std::string name;
    int width_before = 0, width_after = 0;
    int d_before = 0, d_after = 0;  // 0 for dense layers
    std::size_t nnz = 0;
};

struct ShrinkResult {
    Network net;
    std::vector<WidthRow> width_table;
};

// Physically removes dead channels (and dead basis kernels) named by the
// report. First-layer inputs and final outputs are never removed; a group
// that would lose every channel keeps its first one.
ShrinkResult shrink(const Network& net, const RedundancyReport& report);

std::string width_table_csv(const std::vector<WidthRow>& rows);

}  // namespace bknet
