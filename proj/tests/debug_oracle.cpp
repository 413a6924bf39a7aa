// Standalone debugging harness for oracle/propagate mismatches.
#include <cstdio>

#include "bknet/shrink.hpp"
#include "shrink_oracle.hpp"

using namespace bknet;
using namespace bknet::testing;

int main() {
    Rng rng(123);
    for (int trial = 0; trial < 40; ++trial) {
        Network net = random_sparse_net(rng);
        Network original = net;
        RedundancyReport rep = propagate(net);
        const auto oracle = dead_channel_oracle(original);
        bool bad = false;
        for (std::size_t w = 0; w < oracle.dead.size() && !bad; ++w)
            if (rep.wire_dead[w] != oracle.dead[w]) bad = true;
        if (!bad) continue;

        std::printf("=== trial %d ===\n", trial);
        std::printf("input C=%d  layers:\n", original.input_shape[0]);
        for (std::size_t i = 0; i < original.layers.size(); ++i) {
            const auto& l = original.layers[i];
            std::printf("  %zu: %s", i, kind_name(kind_of(l)));
            if (kind_of(l) == LayerKind::DecomposedConv) {
                const auto& d = std::get<DecomposedConvLayer>(l);
                std::printf(" c_out=%d c_in=%d d=%d", d.c_out(), d.c_in(), d.d);
            }
            std::printf("\n");
        }
        for (const auto& e : original.skips)
            std::printf("  skip %d->%d proj=%d\n", e.src, e.dst, bool(e.projection));
        for (std::size_t w = 0; w < oracle.dead.size(); ++w) {
            std::printf("  wire %zu: mine=", w);
            for (char c : rep.wire_dead[w]) std::printf("%d", int(c));
            std::printf(" oracle=");
            for (char c : oracle.dead[w]) std::printf("%d", int(c));
            std::printf("%s\n", rep.wire_dead[w] != oracle.dead[w] ? "  <-- MISMATCH" : "");
        }
        // connectivity dump of decomposed layers (nonzero (out,in) blocks)
        for (std::size_t i = 0; i < original.layers.size(); ++i) {
            if (kind_of(original.layers[i]) != LayerKind::DecomposedConv) continue;
            const auto& d = std::get<DecomposedConvLayer>(original.layers[i]);
            std::printf("  L%zu blocks:\n", i);
            for (int o = 0; o < d.c_out(); ++o) {
                std::printf("    out %d: ", o);
                for (int j = 0; j < d.c_in(); ++j) {
                    bool nz = false;
                    for (int m = 0; m < d.basis_rows(); ++m)
                        if (d.coeff.at(o, j, m) != 0.0f) nz = true;
                    std::printf("%d", int(nz));
                }
                std::printf("\n");
            }
        }
        return 1;
    }
    std::printf("no mismatch found\n");
    return 0;
}
