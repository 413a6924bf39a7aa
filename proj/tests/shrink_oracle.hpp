#pragma once

// Independent dead-channel-elimination oracle plus a generator of random
// sparse networks with skip edges. The oracle works by plain forward and
// backward reachability over explicit (wire, channel) nodes of the layer
// connection multigraph; it shares no code with the propagation pass it
// checks.

#include <deque>
#include <vector>

#include "bknet/decompose.hpp"
#include "bknet/network.hpp"
#include "bknet/rng.hpp"

namespace bknet::testing {

struct OracleDead {
    // dead[w][c] == channel c of wire w is always-zero or unused
    std::vector<std::vector<char>> dead;
};

inline OracleDead dead_channel_oracle(const Network& net) {
    const auto shapes = infer_shapes(net);
    const int n_layers = int(net.layers.size());
    const int wires = n_layers + 1;

    std::vector<int> channels(static_cast<std::size_t>(wires));
    channels[0] = net.input_shape[0];
    for (int i = 0; i < n_layers; ++i) channels[std::size_t(i + 1)] = shapes[std::size_t(i)][0];

    std::vector<int> offset(std::size_t(wires) + 1, 0);
    for (int w = 0; w < wires; ++w)
        offset[std::size_t(w) + 1] = offset[std::size_t(w)] + channels[std::size_t(w)];
    const int nodes = offset[std::size_t(wires)];

    std::vector<std::vector<int>> out_edges(static_cast<std::size_t>(nodes)), in_edges(static_cast<std::size_t>(nodes));
    auto link = [&](int w_from, int c_from, int w_to, int c_to) {
        const int a = offset[std::size_t(w_from)] + c_from;
        const int b = offset[std::size_t(w_to)] + c_to;
        out_edges[std::size_t(a)].push_back(b);
        in_edges[std::size_t(b)].push_back(a);
    };

    for (int i = 0; i < n_layers; ++i) {
        const LayerSpec& layer = net.layers[std::size_t(i)];
        switch (kind_of(layer)) {
            case LayerKind::Conv: {
                const auto& l = std::get<ConvLayer>(layer);
                const int kk = l.kernel() * l.kernel();
                for (int o = 0; o < l.c_out(); ++o)
                    for (int j = 0; j < l.c_in(); ++j) {
                        bool nz = false;
                        for (int t = 0; t < kk && !nz; ++t)
                            nz = l.weight.data[(std::size_t(o) * l.c_in() + j) * kk +
                                               std::size_t(t)] != 0.0f;
                        if (nz) link(i, j, i + 1, o);
                    }
                break;
            }
            case LayerKind::DecomposedConv: {
                const auto& l = std::get<DecomposedConvLayer>(layer);
                const int rows = l.basis_rows();
                for (int o = 0; o < l.c_out(); ++o)
                    for (int j = 0; j < l.c_in(); ++j) {
                        bool nz = false;
                        for (int m = 0; m < rows && !nz; ++m) nz = l.coeff.at(o, j, m) != 0.0f;
                        if (nz) link(i, j, i + 1, o);
                    }
                break;
            }
            case LayerKind::Linear: {
                const auto& l = std::get<LinearLayer>(layer);
                const int spatial =
                    i == 0 ? net.input_shape[1] * net.input_shape[2]
                           : shapes[std::size_t(i) - 1][1] * shapes[std::size_t(i) - 1][2];
                for (int o = 0; o < l.out_features(); ++o)
                    for (int j = 0; j < channels[std::size_t(i)]; ++j) {
                        bool nz = false;
                        for (int s = 0; s < spatial && !nz; ++s)
                            nz = l.weight.at(o, j * spatial + s) != 0.0f;
                        if (nz) link(i, j, i + 1, o);
                    }
                break;
            }
            default:
                for (int c = 0; c < channels[std::size_t(i)]; ++c) link(i, c, i + 1, c);
                break;
        }
    }
    for (const auto& e : net.skips) {
        if (e.projection) {
            const ConvLayer& p = *e.projection;
            for (int o = 0; o < p.c_out(); ++o)
                for (int j = 0; j < p.c_in(); ++j)
                    if (p.weight.at(o, j, 0, 0) != 0.0f) link(e.src + 1, j, e.dst + 1, o);
        } else {
            for (int c = 0; c < channels[std::size_t(e.src) + 1]; ++c)
                link(e.src + 1, c, e.dst + 1, c);
        }
    }

    auto reach = [&](const std::vector<int>& seeds,
                     const std::vector<std::vector<int>>& edges) {
        std::vector<char> seen(std::size_t(nodes), 0);
        std::deque<int> q(seeds.begin(), seeds.end());
        for (int s : seeds) seen[std::size_t(s)] = 1;
        while (!q.empty()) {
            const int u = q.front();
            q.pop_front();
            for (int v : edges[std::size_t(u)])
                if (!seen[std::size_t(v)]) {
                    seen[std::size_t(v)] = 1;
                    q.push_back(v);
                }
        }
        return seen;
    };

    std::vector<int> sources, sinks;
    for (int c = 0; c < channels[0]; ++c) sources.push_back(offset[0] + c);
    for (int c = 0; c < channels[std::size_t(wires) - 1]; ++c)
        sinks.push_back(offset[std::size_t(wires) - 1] + c);
    const auto fwd = reach(sources, out_edges);
    const auto bwd = reach(sinks, in_edges);

    OracleDead out;
    out.dead.resize(std::size_t(wires));
    for (int w = 0; w < wires; ++w) {
        out.dead[std::size_t(w)].assign(std::size_t(channels[std::size_t(w)]), 0);
        for (int c = 0; c < channels[std::size_t(w)]; ++c) {
            const int node = offset[std::size_t(w)] + c;
            out.dead[std::size_t(w)][std::size_t(c)] =
                !(fwd[std::size_t(node)] && bwd[std::size_t(node)]);
        }
    }
    return out;
}

// Random sparse network of up to `max_blocks` conv blocks with optional
// BN (inactive shift/mean so zero stays zero), optional pooling, optional
// identity or projection skips, and a GAP+Linear head half the time.
// All biases are zero, so shrinking must preserve the function exactly.
inline Network random_sparse_net(Rng& rng, int max_blocks = 4) {
    const int n_blocks = 2 + int(rng.below(std::uint64_t(max_blocks - 1)));
    Network net;
    const int hw = 6;
    net.input_shape = {2 + int(rng.below(3)), hw, hw};

    auto sparse_decomposed = [&](int c_out, int c_in) {
        DecomposedConvLayer l;
        l.kernel = 3;
        l.stride = 1;
        l.padding = 1;
        l.d = 1 + int(rng.below(4));
        l.basis = Tensor({l.d, 9});
        fill_gaussian(l.basis, rng, 0.0, 0.5);
        l.coeff = Tensor({c_out, c_in, l.d}, 0.0f);
        const double keep_p = rng.uniform(0.25, 0.8);
        for (auto& a : l.coeff.data)
            if (rng.uniform() < keep_p) a = float(rng.gaussian(0.0, 0.5));
        // plant whole-row / whole-column / whole-slice zeros
        if (rng.uniform() < 0.6) {
            const int o = int(rng.below(std::uint64_t(c_out)));
            for (int j = 0; j < c_in; ++j)
                for (int m = 0; m < l.d; ++m) l.coeff.at(o, j, m) = 0.0f;
        }
        if (rng.uniform() < 0.4) {
            const int j = int(rng.below(std::uint64_t(c_in)));
            for (int o = 0; o < c_out; ++o)
                for (int m = 0; m < l.d; ++m) l.coeff.at(o, j, m) = 0.0f;
        }
        if (rng.uniform() < 0.3 && l.d > 1) {
            const int m = int(rng.below(std::uint64_t(l.d)));
            for (int o = 0; o < c_out; ++o)
                for (int j = 0; j < c_in; ++j) l.coeff.at(o, j, m) = 0.0f;
        }
        l.mask = full_mask(l.coeff);
        for (std::size_t p = 0; p < l.coeff.numel(); ++p)
            if (l.coeff.data[p] == 0.0f) l.mask[p] = 0;
        l.bias.assign(std::size_t(c_out), 0.0f);
        return l;
    };

    auto inactive_bn = [&](int c) {
        BatchNormLayer bn = make_batchnorm(c);
        for (auto& g : bn.gamma) g = float(rng.uniform(0.5, 1.5));
        for (auto& v : bn.running_var) v = float(rng.uniform(0.5, 2.0));
        return bn;  // beta = 0, mean = 0: BN(0) == 0
    };

    int cur_c = net.input_shape[0];
    std::vector<int> block_end_wire;  // wire index after each block
    for (int b = 0; b < n_blocks; ++b) {
        const int c_out = 2 + int(rng.below(4));
        net.layers.push_back(sparse_decomposed(c_out, cur_c));
        cur_c = c_out;
        if (rng.uniform() < 0.5) net.layers.push_back(inactive_bn(cur_c));
        if (rng.uniform() < 0.6) net.layers.push_back(ReluLayer{});
        block_end_wire.push_back(int(net.layers.size()));
    }

    // one optional skip between block boundaries
    if (block_end_wire.size() >= 2 && rng.uniform() < 0.7) {
        const int a = int(rng.below(std::uint64_t(block_end_wire.size() - 1)));
        const int bidx =
            a + 1 + int(rng.below(std::uint64_t(block_end_wire.size() - 1 - a)));
        const int src_layer = block_end_wire[std::size_t(a)] - 1;
        const int dst_layer = block_end_wire[std::size_t(bidx)] - 1;
        const auto shapes = infer_shapes(net);
        const int src_c = shapes[std::size_t(src_layer)][0];
        const int dst_c = shapes[std::size_t(dst_layer)][0];
        SkipEdge edge;
        edge.src = src_layer;
        edge.dst = dst_layer;
        if (src_c == dst_c && rng.uniform() < 0.5) {
            // identity skip
        } else {
            ConvLayer proj;
            proj.weight = Tensor({dst_c, src_c, 1, 1}, 0.0f);
            const double keep_p = rng.uniform(0.3, 0.9);
            for (auto& v : proj.weight.data)
                if (rng.uniform() < keep_p) v = float(rng.gaussian(0.0, 0.5));
            proj.bias.assign(std::size_t(dst_c), 0.0f);
            proj.stride = 1;
            proj.padding = 0;
            edge.projection = std::move(proj);
        }
        net.skips.push_back(std::move(edge));
    }

    if (rng.uniform() < 0.5) {
        net.layers.push_back(GlobalAvgPoolLayer{});
        LinearLayer head;
        const int classes = 2 + int(rng.below(2));
        head.weight = Tensor({classes, cur_c}, 0.0f);
        const double keep_p = rng.uniform(0.5, 1.0);
        for (auto& v : head.weight.data)
            if (rng.uniform() < keep_p) v = float(rng.gaussian(0.0, 0.5));
        head.bias.assign(std::size_t(classes), 0.0f);
        net.layers.push_back(std::move(head));
        net.num_classes = classes;
    }
    return net;
}

}  // namespace bknet::testing
