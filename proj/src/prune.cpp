#include "bknet/prune.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace bknet {

namespace {

// Iterates the learned coefficient slots (skips the pinned mean slice of
// centered layers).
template <class Fn>
void for_each_learned(const DecomposedConvLayer& l, Fn&& fn) {
    const int rows = l.basis_rows();
    const int learned = l.centered ? rows - 1 : rows;
    const int n = l.c_out() * l.c_in();
    for (int r = 0; r < n; ++r)
        for (int m = 0; m < learned; ++m) fn(std::size_t(r) * rows + m);
}

LayerSparsity layer_sparsity(int idx, const DecomposedConvLayer& l) {
    LayerSparsity s;
    s.layer = idx;
    s.width = l.c_out();
    s.d = l.d;
    for_each_learned(l, [&](std::size_t pos) {
        ++s.total;
        if (l.coeff.data[pos] != 0.0f) ++s.nnz;
    });
    s.sparsity_pct = s.total ? 100.0 * (1.0 - double(s.nnz) / double(s.total)) : 0.0;
    return s;
}

SparsityReport finish_report(std::vector<LayerSparsity> rows) {
    SparsityReport rep;
    rep.layers = std::move(rows);
    for (const auto& r : rep.layers) {
        rep.nnz_total += r.nnz;
        rep.coeff_total += r.total;
    }
    rep.sparsity_pct =
        rep.coeff_total ? 100.0 * (1.0 - double(rep.nnz_total) / double(rep.coeff_total)) : 0.0;
    return rep;
}

}  // namespace

double compute_threshold(const DecomposedConvLayer& layer, double s, bool nonzero_only) {
    if (s < 0) throw std::invalid_argument("compute_threshold: sensitivity must be >= 0");
    if (layer.coeff.numel() == 0) throw std::invalid_argument("compute_threshold: empty tensor");
    double sum = 0;
    std::size_t count = 0;
    for_each_learned(layer, [&](std::size_t pos) {
        const float a = layer.coeff.data[pos];
        if (nonzero_only && a == 0.0f) return;
        sum += a;
        ++count;
    });
    if (count == 0) return 0.0;
    const double mean = sum / double(count);
    double var = 0;
    for_each_learned(layer, [&](std::size_t pos) {
        const float a = layer.coeff.data[pos];
        if (nonzero_only && a == 0.0f) return;
        var += (double(a) - mean) * (double(a) - mean);
    });
    var /= double(count);
    return s * std::sqrt(var);
}

SparsityReport prune(Network& net, double s, bool std_nonzero_only) {
    std::vector<LayerSparsity> rows;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (kind_of(net.layers[i]) != LayerKind::DecomposedConv) continue;
        auto& l = std::get<DecomposedConvLayer>(net.layers[i]);
        const double tau = compute_threshold(l, s, std_nonzero_only);
        for_each_learned(l, [&](std::size_t pos) {
            if (!l.mask[pos]) {
                l.coeff.data[pos] = 0.0f;
                return;
            }
            if (std::abs(double(l.coeff.data[pos])) < tau) {
                l.mask[pos] = 0;
                l.coeff.data[pos] = 0.0f;
            }
        });
        rows.push_back(layer_sparsity(int(i), l));
    }
    return finish_report(std::move(rows));
}

SparsityReport sparsity_report(const Network& net) {
    std::vector<LayerSparsity> rows;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (kind_of(net.layers[i]) != LayerKind::DecomposedConv) continue;
        rows.push_back(layer_sparsity(int(i), std::get<DecomposedConvLayer>(net.layers[i])));
    }
    return finish_report(std::move(rows));
}

std::string SparsityReport::to_json() const {
    nlohmann::json j;
    j["layers"] = nlohmann::json::array();
    for (const auto& r : layers) {
        nlohmann::json row;
        row["layer"] = r.layer;
        row["width"] = r.width;
        row["basis"] = r.d;
        row["nnz"] = r.nnz;
        row["total"] = r.total;
        row["sparsity_pct"] = r.sparsity_pct;
        j["layers"].push_back(row);
    }
    j["nnz_total"] = nnz_total;
    j["coeff_total"] = coeff_total;
    j["sparsity_pct"] = sparsity_pct;
    return j.dump(2);
}

}  // namespace bknet
