#include "bknet/shrink.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace bknet {

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(std::size_t(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[std::size_t(x)] != x) {
            parent[std::size_t(x)] = parent[std::size_t(parent[std::size_t(x)])];
            x = parent[std::size_t(x)];
        }
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::size_t(std::max(a, b))] = std::min(a, b);
    }
};

// Coefficient access for the three kinds of channel transforms plus skip
// projections, uniform enough for the propagation loop.
struct Port {
    enum class Kind { DecomposedLayer, ConvLayer, LinearLayer, Projection } kind;
    int layer = -1;  // layer index, or skip index for projections
    int spatial = 1;  // H*W at the linear input wire
};

bool block_nonzero_out(const Network& net, const Port& p, int c) {
    switch (p.kind) {
        case Port::Kind::DecomposedLayer: {
            const auto& l = std::get<DecomposedConvLayer>(net.layers[std::size_t(p.layer)]);
            const int rows = l.basis_rows();
            const std::size_t base = std::size_t(c) * l.c_in() * rows;
            for (std::size_t i = 0; i < std::size_t(l.c_in()) * rows; ++i)
                if (l.coeff.data[base + i] != 0.0f) return true;
            return false;
        }
        case Port::Kind::ConvLayer: {
            const auto& l = std::get<ConvLayer>(net.layers[std::size_t(p.layer)]);
            const std::size_t sz = l.weight.numel() / std::size_t(l.c_out());
            for (std::size_t i = 0; i < sz; ++i)
                if (l.weight.data[std::size_t(c) * sz + i] != 0.0f) return true;
            return false;
        }
        case Port::Kind::LinearLayer: {
            const auto& l = std::get<LinearLayer>(net.layers[std::size_t(p.layer)]);
            for (int f = 0; f < l.in_features(); ++f)
                if (l.weight.at(c, f) != 0.0f) return true;
            return false;
        }
        case Port::Kind::Projection: {
            const auto& l = *net.skips[std::size_t(p.layer)].projection;
            for (int j = 0; j < l.c_in(); ++j)
                if (l.weight.at(c, j, 0, 0) != 0.0f) return true;
            return false;
        }
    }
    return true;
}

bool block_nonzero_in(const Network& net, const Port& p, int c) {
    switch (p.kind) {
        case Port::Kind::DecomposedLayer: {
            const auto& l = std::get<DecomposedConvLayer>(net.layers[std::size_t(p.layer)]);
            const int rows = l.basis_rows();
            for (int i = 0; i < l.c_out(); ++i)
                for (int m = 0; m < rows; ++m)
                    if (l.coeff.at(i, c, m) != 0.0f) return true;
            return false;
        }
        case Port::Kind::ConvLayer: {
            const auto& l = std::get<ConvLayer>(net.layers[std::size_t(p.layer)]);
            const int kk = l.kernel() * l.kernel();
            for (int i = 0; i < l.c_out(); ++i)
                for (int t = 0; t < kk; ++t)
                    if (l.weight.data[(std::size_t(i) * l.c_in() + c) * kk + std::size_t(t)] !=
                        0.0f)
                        return true;
            return false;
        }
        case Port::Kind::LinearLayer: {
            const auto& l = std::get<LinearLayer>(net.layers[std::size_t(p.layer)]);
            for (int o = 0; o < l.out_features(); ++o)
                for (int s = 0; s < p.spatial; ++s)
                    if (l.weight.at(o, c * p.spatial + s) != 0.0f) return true;
            return false;
        }
        case Port::Kind::Projection: {
            const auto& l = *net.skips[std::size_t(p.layer)].projection;
            for (int i = 0; i < l.c_out(); ++i)
                if (l.weight.at(i, c, 0, 0) != 0.0f) return true;
            return false;
        }
    }
    return true;
}

// Zeroes everything the port writes into output channel c; returns true
// if any value changed.
bool zero_out_channel(Network& net, const Port& p, int c) {
    bool changed = false;
    switch (p.kind) {
        case Port::Kind::DecomposedLayer: {
            auto& l = std::get<DecomposedConvLayer>(net.layers[std::size_t(p.layer)]);
            const int rows = l.basis_rows();
            const std::size_t base = std::size_t(c) * l.c_in() * rows;
            for (std::size_t i = 0; i < std::size_t(l.c_in()) * rows; ++i) {
                if (l.coeff.data[base + i] != 0.0f) changed = true;
                l.coeff.data[base + i] = 0.0f;
                l.mask[base + i] = 0;
            }
            break;
        }
        case Port::Kind::ConvLayer: {
            auto& l = std::get<ConvLayer>(net.layers[std::size_t(p.layer)]);
            const std::size_t sz = l.weight.numel() / std::size_t(l.c_out());
            for (std::size_t i = 0; i < sz; ++i) {
                float& v = l.weight.data[std::size_t(c) * sz + i];
                if (v != 0.0f) changed = true;
                v = 0.0f;
            }
            break;
        }
        case Port::Kind::LinearLayer: {
            auto& l = std::get<LinearLayer>(net.layers[std::size_t(p.layer)]);
            for (int f = 0; f < l.in_features(); ++f) {
                float& v = l.weight.at(c, f);
                if (v != 0.0f) changed = true;
                v = 0.0f;
            }
            break;
        }
        case Port::Kind::Projection: {
            auto& l = *net.skips[std::size_t(p.layer)].projection;
            for (int j = 0; j < l.c_in(); ++j) {
                float& v = l.weight.at(c, j, 0, 0);
                if (v != 0.0f) changed = true;
                v = 0.0f;
            }
            break;
        }
    }
    return changed;
}

bool zero_in_channel(Network& net, const Port& p, int c) {
    bool changed = false;
    switch (p.kind) {
        case Port::Kind::DecomposedLayer: {
            auto& l = std::get<DecomposedConvLayer>(net.layers[std::size_t(p.layer)]);
            const int rows = l.basis_rows();
            for (int i = 0; i < l.c_out(); ++i)
                for (int m = 0; m < rows; ++m) {
                    float& v = l.coeff.at(i, c, m);
                    if (v != 0.0f) changed = true;
                    v = 0.0f;
                    l.mask[(std::size_t(i) * l.c_in() + c) * rows + std::size_t(m)] = 0;
                }
            break;
        }
        case Port::Kind::ConvLayer: {
            auto& l = std::get<ConvLayer>(net.layers[std::size_t(p.layer)]);
            const int kk = l.kernel() * l.kernel();
            for (int i = 0; i < l.c_out(); ++i)
                for (int t = 0; t < kk; ++t) {
                    float& v = l.weight.data[(std::size_t(i) * l.c_in() + c) * kk + std::size_t(t)];
                    if (v != 0.0f) changed = true;
                    v = 0.0f;
                }
            break;
        }
        case Port::Kind::LinearLayer: {
            auto& l = std::get<LinearLayer>(net.layers[std::size_t(p.layer)]);
            for (int o = 0; o < l.out_features(); ++o)
                for (int s = 0; s < p.spatial; ++s) {
                    float& v = l.weight.at(o, c * p.spatial + s);
                    if (v != 0.0f) changed = true;
                    v = 0.0f;
                }
            break;
        }
        case Port::Kind::Projection: {
            auto& l = *net.skips[std::size_t(p.layer)].projection;
            for (int i = 0; i < l.c_out(); ++i) {
                float& v = l.weight.at(i, c, 0, 0);
                if (v != 0.0f) changed = true;
                v = 0.0f;
            }
            break;
        }
    }
    return changed;
}

struct Producer {
    enum class Kind { Input, Port, IdentityFrom } kind;
    Port port;
    int from_segment = -1;
};

struct Consumer {
    enum class Kind { Output, Port, IdentityTo, ProjectionTo } kind;
    Port port;
    int to_segment = -1;  // segment of the merge wire for Identity/Projection reads
};

struct Topology {
    int wires = 0;
    std::vector<int> channels;       // per wire
    std::vector<int> spatial;        // H*W per wire
    std::vector<int> segment_of;     // wire -> segment root
    std::vector<int> group_of;       // wire -> removal group root
    std::vector<std::vector<Producer>> producers;  // per segment root
    std::vector<std::vector<Consumer>> consumers;  // per segment root
    std::vector<int> segment_roots;
};

Port make_port(const Network& net, int layer, int spatial_in) {
    Port p;
    p.layer = layer;
    p.spatial = spatial_in;
    switch (kind_of(net.layers[std::size_t(layer)])) {
        case LayerKind::Conv: p.kind = Port::Kind::ConvLayer; break;
        case LayerKind::DecomposedConv: p.kind = Port::Kind::DecomposedLayer; break;
        case LayerKind::Linear: p.kind = Port::Kind::LinearLayer; break;
        default: throw std::logic_error("not a transform layer");
    }
    return p;
}

Topology build_topology(const Network& net) {
    auto diags = validate(net);
    if (!diags.empty())
        throw std::invalid_argument("propagate: network invalid: " + diags.front());
    const auto shapes = infer_shapes(net);
    const int n_layers = int(net.layers.size());

    Topology topo;
    topo.wires = n_layers + 1;
    topo.channels.resize(std::size_t(topo.wires));
    topo.spatial.resize(std::size_t(topo.wires));
    topo.channels[0] = net.input_shape[0];
    topo.spatial[0] = net.input_shape[1] * net.input_shape[2];
    for (int i = 0; i < n_layers; ++i) {
        topo.channels[std::size_t(i) + 1] = shapes[std::size_t(i)][0];
        topo.spatial[std::size_t(i) + 1] = shapes[std::size_t(i)][1] * shapes[std::size_t(i)][2];
    }

    // A wire that receives a skip addition carries a different value than
    // the wire before the pass-through layer, so the segment breaks there.
    std::vector<char> has_incoming_skip(std::size_t(n_layers), 0);
    for (const auto& e : net.skips) has_incoming_skip[std::size_t(e.dst)] = 1;

    UnionFind segments(topo.wires);
    for (int i = 0; i < n_layers; ++i)
        if (!is_channel_transform(net.layers[std::size_t(i)]) &&
            !has_incoming_skip[std::size_t(i)])
            segments.unite(i + 1, i);

    UnionFind groups(topo.wires);
    for (int i = 0; i < n_layers; ++i)
        if (!is_channel_transform(net.layers[std::size_t(i)])) groups.unite(i + 1, i);
    for (const auto& e : net.skips)
        if (!e.projection) groups.unite(e.src + 1, e.dst + 1);

    topo.segment_of.resize(std::size_t(topo.wires));
    topo.group_of.resize(std::size_t(topo.wires));
    for (int w = 0; w < topo.wires; ++w) {
        topo.segment_of[std::size_t(w)] = segments.find(w);
        topo.group_of[std::size_t(w)] = groups.find(w);
        if (topo.segment_of[std::size_t(w)] == w) topo.segment_roots.push_back(w);
    }

    topo.producers.resize(std::size_t(topo.wires));
    topo.consumers.resize(std::size_t(topo.wires));
    auto seg = [&](int w) { return topo.segment_of[std::size_t(w)]; };

    topo.producers[std::size_t(seg(0))].push_back({Producer::Kind::Input, Port{}, -1});
    topo.consumers[std::size_t(seg(topo.wires - 1))].push_back(
        {Consumer::Kind::Output, Port{}, -1});

    for (int i = 0; i < n_layers; ++i) {
        if (is_channel_transform(net.layers[std::size_t(i)])) {
            Port port = make_port(net, i, topo.spatial[std::size_t(i)]);
            topo.producers[std::size_t(seg(i + 1))].push_back({Producer::Kind::Port, port, -1});
            topo.consumers[std::size_t(seg(i))].push_back({Consumer::Kind::Port, port, -1});
        } else if (seg(i) != seg(i + 1)) {
            // pass-through split by a skip addition: channel-identity link
            topo.producers[std::size_t(seg(i + 1))].push_back(
                {Producer::Kind::IdentityFrom, Port{}, seg(i)});
            topo.consumers[std::size_t(seg(i))].push_back(
                {Consumer::Kind::IdentityTo, Port{}, seg(i + 1)});
        }
    }
    for (std::size_t e = 0; e < net.skips.size(); ++e) {
        const SkipEdge& edge = net.skips[e];
        const int s_src = seg(edge.src + 1), s_dst = seg(edge.dst + 1);
        if (edge.projection) {
            Port port;
            port.kind = Port::Kind::Projection;
            port.layer = int(e);
            topo.producers[std::size_t(s_dst)].push_back({Producer::Kind::Port, port, -1});
            topo.consumers[std::size_t(s_src)].push_back(
                {Consumer::Kind::ProjectionTo, port, s_dst});
        } else {
            topo.producers[std::size_t(s_dst)].push_back(
                {Producer::Kind::IdentityFrom, Port{}, s_src});
            topo.consumers[std::size_t(s_src)].push_back(
                {Consumer::Kind::IdentityTo, Port{}, s_dst});
        }
    }
    return topo;
}

}  // namespace

LayerRedundancy redundancy_vectors(const DecomposedConvLayer& layer) {
    LayerRedundancy r;
    const int c_out = layer.c_out(), c_in = layer.c_in(), rows = layer.basis_rows();
    r.p_in.assign(std::size_t(c_in), 0);
    r.p_out.assign(std::size_t(c_out), 0);
    std::vector<int> basis_use(std::size_t(rows), 0);
    for (int i = 0; i < c_out; ++i)
        for (int j = 0; j < c_in; ++j)
            for (int m = 0; m < rows; ++m)
                if (layer.coeff.at(i, j, m) != 0.0f) {
                    ++r.p_in[std::size_t(j)];
                    ++r.p_out[std::size_t(i)];
                    ++basis_use[std::size_t(m)];
                }
    for (int j = 0; j < c_in; ++j)
        if (r.p_in[std::size_t(j)] == 0) r.in_set.push_back(j);
    for (int i = 0; i < c_out; ++i)
        if (r.p_out[std::size_t(i)] == 0) r.out_set.push_back(i);
    for (int m = 0; m < rows; ++m)
        if (basis_use[std::size_t(m)] == 0) r.dead_basis.push_back(m);
    return r;
}

RedundancyReport propagate(Network& net) {
    Topology topo = build_topology(net);
    const int wires = topo.wires;

    std::vector<std::vector<char>> az(static_cast<std::size_t>(wires)), uu(static_cast<std::size_t>(wires));
    for (int root : topo.segment_roots) {
        az[std::size_t(root)].assign(std::size_t(topo.channels[std::size_t(root)]), 0);
        uu[std::size_t(root)].assign(std::size_t(topo.channels[std::size_t(root)]), 0);
    }

    long total_channels = 0;
    for (int w = 0; w < wires; ++w) total_channels += topo.channels[std::size_t(w)];

    int iterations = 0;
    bool changed = true;
    while (changed) {
        changed = false;
        if (++iterations > int(total_channels) + 2)
            throw std::logic_error("propagate: fixpoint iteration guard tripped");

        // Always-zero sets flow forward.
        for (int root : topo.segment_roots) {
            auto& flags = az[std::size_t(root)];
            for (int c = 0; c < topo.channels[std::size_t(root)]; ++c) {
                if (flags[std::size_t(c)]) continue;
                bool all_zero = true;
                for (const auto& p : topo.producers[std::size_t(root)]) {
                    if (p.kind == Producer::Kind::Input) {
                        all_zero = false;
                    } else if (p.kind == Producer::Kind::IdentityFrom) {
                        if (!az[std::size_t(p.from_segment)][std::size_t(c)]) all_zero = false;
                    } else if (block_nonzero_out(net, p.port, c)) {
                        all_zero = false;
                    }
                    if (!all_zero) break;
                }
                if (all_zero) {
                    flags[std::size_t(c)] = 1;
                    changed = true;
                }
            }
        }

        // Unused sets flow backward.
        for (auto it = topo.segment_roots.rbegin(); it != topo.segment_roots.rend(); ++it) {
            const int root = *it;
            auto& flags = uu[std::size_t(root)];
            for (int c = 0; c < topo.channels[std::size_t(root)]; ++c) {
                if (flags[std::size_t(c)]) continue;
                bool unused = true;
                for (const auto& cons : topo.consumers[std::size_t(root)]) {
                    switch (cons.kind) {
                        case Consumer::Kind::Output: unused = false; break;
                        case Consumer::Kind::Port:
                            if (block_nonzero_in(net, cons.port, c)) unused = false;
                            break;
                        case Consumer::Kind::IdentityTo:
                            if (!uu[std::size_t(cons.to_segment)][std::size_t(c)]) unused = false;
                            break;
                        case Consumer::Kind::ProjectionTo: {
                            // read live iff some projection row into a
                            // still-used merge channel is nonzero
                            const auto& proj =
                                *net.skips[std::size_t(cons.port.layer)].projection;
                            const auto& sink_uu = uu[std::size_t(cons.to_segment)];
                            for (int i = 0; i < proj.c_out() && unused; ++i)
                                if (proj.weight.at(i, c, 0, 0) != 0.0f &&
                                    !sink_uu[std::size_t(i)])
                                    unused = false;
                            break;
                        }
                    }
                    if (!unused) break;
                }
                if (unused) {
                    flags[std::size_t(c)] = 1;
                    changed = true;
                }
            }
        }

        // Zero every coefficient implied by the dead channels.
        for (int root : topo.segment_roots) {
            for (int c = 0; c < topo.channels[std::size_t(root)]; ++c) {
                if (!az[std::size_t(root)][std::size_t(c)] &&
                    !uu[std::size_t(root)][std::size_t(c)])
                    continue;
                for (const auto& p : topo.producers[std::size_t(root)])
                    if (p.kind == Producer::Kind::Port)
                        changed |= zero_out_channel(net, p.port, c);
                for (const auto& cons : topo.consumers[std::size_t(root)])
                    if (cons.kind == Consumer::Kind::Port ||
                        cons.kind == Consumer::Kind::ProjectionTo)
                        changed |= zero_in_channel(net, cons.port, c);
            }
        }
    }

    RedundancyReport rep;
    rep.segment_of = topo.segment_of;
    rep.group_of = topo.group_of;
    rep.iterations_to_fixpoint = iterations;
    rep.wire_dead.resize(std::size_t(wires));
    for (int w = 0; w < wires; ++w) {
        const int root = topo.segment_of[std::size_t(w)];
        auto& dead = rep.wire_dead[std::size_t(w)];
        dead.assign(std::size_t(topo.channels[std::size_t(w)]), 0);
        for (int c = 0; c < topo.channels[std::size_t(w)]; ++c)
            dead[std::size_t(c)] =
                az[std::size_t(root)][std::size_t(c)] || uu[std::size_t(root)][std::size_t(c)];
    }

    // Removable = dead across every segment in the group; the input and
    // output groups are never removable, nor may a group lose all channels.
    const int input_group = topo.group_of[0];
    const int output_group = topo.group_of[std::size_t(wires - 1)];
    rep.wire_removable.resize(std::size_t(wires));
    std::vector<std::vector<char>> group_removable(static_cast<std::size_t>(wires));
    for (int w = 0; w < wires; ++w) {
        const int g = topo.group_of[std::size_t(w)];
        auto& flags = group_removable[std::size_t(g)];
        if (flags.empty()) flags.assign(std::size_t(topo.channels[std::size_t(w)]), 1);
        for (int c = 0; c < topo.channels[std::size_t(w)]; ++c)
            if (!rep.wire_dead[std::size_t(w)][std::size_t(c)]) flags[std::size_t(c)] = 0;
    }
    for (int w = 0; w < wires; ++w) {
        const int g = topo.group_of[std::size_t(w)];
        auto& flags = group_removable[std::size_t(g)];
        if (g == input_group || g == output_group)
            std::fill(flags.begin(), flags.end(), char(0));
        else if (std::count(flags.begin(), flags.end(), char(1)) == int(flags.size()))
            flags[0] = 0;  // keep one channel alive
    }
    for (int w = 0; w < wires; ++w)
        rep.wire_removable[std::size_t(w)] = group_removable[std::size_t(topo.group_of[std::size_t(w)])];

    for (std::size_t i = 0; i < net.layers.size(); ++i)
        if (kind_of(net.layers[i]) == LayerKind::DecomposedConv) {
            LayerRedundancy lr = redundancy_vectors(std::get<DecomposedConvLayer>(net.layers[i]));
            lr.layer = int(i);
            rep.layers.push_back(std::move(lr));
        }
    return rep;
}

namespace {

std::vector<int> keep_list(const std::vector<char>& removable) {
    std::vector<int> keep;
    for (std::size_t c = 0; c < removable.size(); ++c)
        if (!removable[c]) keep.push_back(int(c));
    return keep;
}

std::vector<float> slice_vec(const std::vector<float>& v, const std::vector<int>& keep) {
    std::vector<float> out;
    out.reserve(keep.size());
    for (int k : keep) out.push_back(v[std::size_t(k)]);
    return out;
}

}  // namespace

ShrinkResult shrink(const Network& net, const RedundancyReport& report) {
    const int n_layers = int(net.layers.size());
    if (int(report.wire_removable.size()) != n_layers + 1)
        throw std::invalid_argument("shrink: report does not match network");
    const auto shapes = infer_shapes(net);

    ShrinkResult res;
    res.net = net;
    Network& out = res.net;

    auto keep_at = [&](int wire) { return keep_list(report.wire_removable[std::size_t(wire)]); };

    for (int i = 0; i < n_layers; ++i) {
        const std::vector<int> keep_in = keep_at(i);
        const std::vector<int> keep_out = keep_at(i + 1);
        LayerSpec& layer = out.layers[std::size_t(i)];
        WidthRow row;
        row.layer = i;
        row.name = kind_name(kind_of(layer));

        switch (kind_of(layer)) {
            case LayerKind::Conv: {
                auto& l = std::get<ConvLayer>(layer);
                row.width_before = l.c_out();
                const int k = l.kernel();
                Tensor w({int(keep_out.size()), int(keep_in.size()), k, k});
                for (std::size_t a = 0; a < keep_out.size(); ++a)
                    for (std::size_t b = 0; b < keep_in.size(); ++b)
                        for (int t = 0; t < k * k; ++t)
                            w.data[(a * keep_in.size() + b) * std::size_t(k * k) + std::size_t(t)] =
                                l.weight.data[(std::size_t(keep_out[a]) * l.c_in() +
                                               std::size_t(keep_in[b])) *
                                                  std::size_t(k * k) +
                                              std::size_t(t)];
                l.weight = std::move(w);
                l.bias = slice_vec(l.bias, keep_out);
                row.width_after = l.c_out();
                for (float v : l.weight.data)
                    if (v != 0.0f) ++row.nnz;
                res.width_table.push_back(std::move(row));
                break;
            }
            case LayerKind::DecomposedConv: {
                auto& l = std::get<DecomposedConvLayer>(layer);
                row.width_before = l.c_out();
                row.d_before = l.d;
                const int rows = l.basis_rows();
                Tensor coeff({int(keep_out.size()), int(keep_in.size()), rows});
                std::vector<std::uint8_t> mask(coeff.numel(), 1);
                for (std::size_t a = 0; a < keep_out.size(); ++a)
                    for (std::size_t b = 0; b < keep_in.size(); ++b)
                        for (int m = 0; m < rows; ++m) {
                            const std::size_t src =
                                (std::size_t(keep_out[a]) * l.c_in() + std::size_t(keep_in[b])) *
                                    std::size_t(rows) +
                                std::size_t(m);
                            const std::size_t dst =
                                (a * keep_in.size() + b) * std::size_t(rows) + std::size_t(m);
                            coeff.data[dst] = l.coeff.data[src];
                            mask[dst] = l.mask[src];
                        }

                // dead basis rows on the sliced coefficients
                const int learned = l.centered ? rows - 1 : rows;
                std::vector<char> basis_dead(std::size_t(rows), 1);
                for (std::size_t p = 0; p < coeff.numel(); ++p)
                    if (coeff.data[p] != 0.0f) basis_dead[p % std::size_t(rows)] = 0;
                for (int m = learned; m < rows; ++m) basis_dead[std::size_t(m)] = 0;  // mean row
                std::vector<int> keep_m;
                for (int m = 0; m < rows; ++m)
                    if (!basis_dead[std::size_t(m)]) keep_m.push_back(m);
                int kept_learned = 0;
                for (int m : keep_m)
                    if (m < learned) ++kept_learned;
                if (kept_learned == 0) {
                    keep_m.insert(keep_m.begin(), 0);
                    kept_learned = 1;
                }

                Tensor basis({int(keep_m.size()), l.kernel * l.kernel});
                for (std::size_t a = 0; a < keep_m.size(); ++a)
                    for (int t = 0; t < l.kernel * l.kernel; ++t)
                        basis.at(int(a), t) = l.basis.at(keep_m[a], t);
                Tensor coeff2({coeff.shape[0], coeff.shape[1], int(keep_m.size())});
                std::vector<std::uint8_t> mask2(coeff2.numel(), 1);
                for (int a = 0; a < coeff.shape[0]; ++a)
                    for (int b = 0; b < coeff.shape[1]; ++b)
                        for (std::size_t m = 0; m < keep_m.size(); ++m) {
                            coeff2.at(a, b, int(m)) = coeff.at(a, b, keep_m[m]);
                            mask2[(std::size_t(a) * coeff.shape[1] + std::size_t(b)) *
                                      keep_m.size() +
                                  m] =
                                mask[(std::size_t(a) * coeff.shape[1] + std::size_t(b)) *
                                         std::size_t(rows) +
                                     std::size_t(keep_m[m])];
                        }

                l.basis = std::move(basis);
                l.coeff = std::move(coeff2);
                l.mask = std::move(mask2);
                l.bias = slice_vec(l.bias, keep_out);
                l.d = kept_learned;

                row.width_after = l.c_out();
                row.d_after = l.d;
                for (float v : l.coeff.data)
                    if (v != 0.0f) ++row.nnz;
                res.width_table.push_back(std::move(row));
                break;
            }
            case LayerKind::Linear: {
                auto& l = std::get<LinearLayer>(layer);
                row.width_before = l.out_features();
                const int spatial =
                    i == 0 ? net.input_shape[1] * net.input_shape[2]
                           : shapes[std::size_t(i) - 1][1] * shapes[std::size_t(i) - 1][2];
                Tensor w({int(keep_out.size()), int(keep_in.size()) * spatial});
                for (std::size_t a = 0; a < keep_out.size(); ++a)
                    for (std::size_t b = 0; b < keep_in.size(); ++b)
                        for (int s = 0; s < spatial; ++s)
                            w.at(int(a), int(b) * spatial + s) =
                                l.weight.at(keep_out[a], keep_in[b] * spatial + s);
                l.weight = std::move(w);
                l.bias = slice_vec(l.bias, keep_out);
                row.width_after = l.out_features();
                for (float v : l.weight.data)
                    if (v != 0.0f) ++row.nnz;
                res.width_table.push_back(std::move(row));
                break;
            }
            case LayerKind::BatchNorm: {
                auto& l = std::get<BatchNormLayer>(layer);
                l.gamma = slice_vec(l.gamma, keep_in);
                l.beta = slice_vec(l.beta, keep_in);
                l.running_mean = slice_vec(l.running_mean, keep_in);
                l.running_var = slice_vec(l.running_var, keep_in);
                break;
            }
            default: break;
        }
    }

    for (std::size_t e = 0; e < out.skips.size(); ++e) {
        if (!out.skips[e].projection) continue;
        const SkipEdge& edge = net.skips[e];
        const std::vector<int> keep_in = keep_at(edge.src + 1);
        const std::vector<int> keep_out = keep_at(edge.dst + 1);
        ConvLayer& l = *out.skips[e].projection;
        Tensor w({int(keep_out.size()), int(keep_in.size()), 1, 1});
        for (std::size_t a = 0; a < keep_out.size(); ++a)
            for (std::size_t b = 0; b < keep_in.size(); ++b)
                w.at(int(a), int(b), 0, 0) = l.weight.at(keep_out[a], keep_in[b], 0, 0);
        l.weight = std::move(w);
        l.bias = slice_vec(l.bias, keep_out);
    }

    auto diags = validate(out);
    if (!diags.empty())
        throw std::logic_error("shrink: result fails validation: " + diags.front());
    return res;
}

std::string width_table_csv(const std::vector<WidthRow>& rows) {
    std::ostringstream os;
    os << "layer,name,width_before,width_after,d_before,d_after,nnz\n";
    for (const auto& r : rows)
        os << r.layer << "," << r.name << "," << r.width_before << "," << r.width_after << ","
           << r.d_before << "," << r.d_after << "," << r.nnz << "\n";
    return os.str();
}

}  // namespace bknet
