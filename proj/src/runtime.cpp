#include "bknet/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "bknet/conv.hpp"
#include "bknet/decompose.hpp"
#include "bknet/threads.hpp"
#include "json.hpp"

namespace bknet {

CsrCoefficients csr_from_coeff(const Tensor& coeff) {
    if (coeff.rank() != 3) throw std::invalid_argument("csr_from_coeff: rank-3 tensor required");
    CsrCoefficients csr;
    csr.c_out = coeff.shape[0];
    csr.c_in = coeff.shape[1];
    csr.d = coeff.shape[2];
    csr.row_ptr.assign(std::size_t(csr.c_out) + 1, 0);
    for (int i = 0; i < csr.c_out; ++i) {
        for (int j = 0; j < csr.c_in; ++j)
            for (int m = 0; m < csr.d; ++m) {
                const float v = coeff.at(i, j, m);
                if (v == 0.0f) continue;
                csr.col.push_back(j * csr.d + m);
                csr.val.push_back(v);
            }
        csr.row_ptr[std::size_t(i) + 1] = int(csr.val.size());
    }
    return csr;
}

Tensor csr_expand(const CsrCoefficients& csr) {
    Tensor out({csr.c_out, csr.c_in, csr.d}, 0.0f);
    for (int i = 0; i < csr.c_out; ++i)
        for (int p = csr.row_ptr[std::size_t(i)]; p < csr.row_ptr[std::size_t(i) + 1]; ++p)
            out.data[std::size_t(i) * csr.c_in * csr.d + std::size_t(csr.col[std::size_t(p)])] =
                csr.val[std::size_t(p)];
    return out;
}

Tensor stage1(const Tensor& input, const Tensor& basis, int kernel, int stride, int padding,
              int threads) {
    if (input.rank() != 4) throw std::invalid_argument("stage1: input must be NCHW");
    if (basis.rank() != 2 || basis.shape[1] != kernel * kernel)
        throw std::invalid_argument("stage1: basis must be rows x k^2");
    const int n = input.shape[0], c_in = input.shape[1], h = input.shape[2], w = input.shape[3];
    const int rows = basis.shape[0];
    const int oh = conv_out_extent(h, kernel, stride, padding);
    const int ow = conv_out_extent(w, kernel, stride, padding);

    Tensor out({n, c_in * rows, oh, ow}, 0.0f);
    parallel_for(n * c_in, threads, [&](int t) {
        const int b = t / c_in, j = t % c_in;
        for (int m = 0; m < rows; ++m) {
            const float* ker = &basis.data[std::size_t(m) * kernel * kernel];
            float* dst = &out.data[((std::size_t(b) * c_in + j) * rows + std::size_t(m)) *
                                   std::size_t(oh) * ow];
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    float acc = 0;
                    for (int ky = 0; ky < kernel; ++ky) {
                        const int iy = oy * stride - padding + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kernel; ++kx) {
                            const int ix = ox * stride - padding + kx;
                            if (ix < 0 || ix >= w) continue;
                            acc += input.at(b, j, iy, ix) * ker[ky * kernel + kx];
                        }
                    }
                    dst[oy * ow + ox] = acc;
                }
        }
    });
    return out;
}

Tensor stage2(const Tensor& intermediate, const CsrCoefficients& coeffs,
              const std::vector<float>& bias, int out_h, int out_w, int threads) {
    const int n = intermediate.shape[0];
    const int planes = intermediate.shape[1];
    if (planes != coeffs.c_in * coeffs.d)
        throw std::invalid_argument("stage2: plane count != c_in * d");
    if (intermediate.shape[2] != out_h || intermediate.shape[3] != out_w)
        throw std::invalid_argument("stage2: spatial shape mismatch");
    const int hw = out_h * out_w;

    Tensor out({n, coeffs.c_out, out_h, out_w}, 0.0f);
    parallel_for(n * coeffs.c_out, threads, [&](int t) {
        const int b = t / coeffs.c_out, i = t % coeffs.c_out;
        float* dst = &out.data[(std::size_t(b) * coeffs.c_out + std::size_t(i)) * hw];
        const float bi = bias.empty() ? 0.0f : bias[std::size_t(i)];
        for (int p = 0; p < hw; ++p) dst[p] = bi;
        for (int e = coeffs.row_ptr[std::size_t(i)]; e < coeffs.row_ptr[std::size_t(i) + 1]; ++e) {
            const int c = coeffs.col[std::size_t(e)];
            if (c < 0 || c >= planes) throw std::out_of_range("stage2: column index out of range");
            const float v = coeffs.val[std::size_t(e)];
            const float* src = &intermediate.data[(std::size_t(b) * planes + std::size_t(c)) * hw];
            for (int p = 0; p < hw; ++p) dst[p] += v * src[p];
        }
    });
    return out;
}

FlopLedger count_flops(const Network& net) {
    const auto shapes = infer_shapes(net);
    FlopLedger ledger;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& layer = net.layers[i];
        const auto& os = shapes[i];
        const std::uint64_t ohw = std::uint64_t(os[1]) * os[2];
        LayerFlops f;
        f.layer = int(i);
        f.name = kind_name(kind_of(layer));
        switch (kind_of(layer)) {
            case LayerKind::Conv: {
                const auto& l = std::get<ConvLayer>(layer);
                const std::uint64_t kk = std::uint64_t(l.kernel()) * l.kernel();
                f.dense_macs = std::uint64_t(l.c_out()) * l.c_in() * kk * ohw;
                f.two_stage_total = f.dense_macs;
                f.params_conv = l.weight.numel();
                f.params = f.params_conv + l.bias.size();
                break;
            }
            case LayerKind::DecomposedConv: {
                const auto& l = std::get<DecomposedConvLayer>(layer);
                const std::uint64_t kk = std::uint64_t(l.kernel) * l.kernel;
                std::uint64_t nnz = 0;
                for (float v : l.coeff.data)
                    if (v != 0.0f) ++nnz;
                f.dense_macs = std::uint64_t(l.c_out()) * l.c_in() * kk * ohw;
                f.stage1_macs = std::uint64_t(l.c_in()) * l.basis_rows() * kk * ohw;
                f.stage2_macs = nnz * ohw;
                f.two_stage_total = f.stage1_macs + f.stage2_macs;
                f.params_conv = l.basis.numel() + nnz;
                f.params = f.params_conv + l.bias.size();
                break;
            }
            case LayerKind::Linear: {
                const auto& l = std::get<LinearLayer>(layer);
                f.dense_macs = std::uint64_t(l.in_features()) * l.out_features();
                f.two_stage_total = f.dense_macs;
                f.params = l.weight.numel() + l.bias.size();
                break;
            }
            case LayerKind::BatchNorm: {
                const auto& l = std::get<BatchNormLayer>(layer);
                f.params = 2 * std::uint64_t(l.channels());  // gamma, beta
                break;
            }
            default: break;  // pools / ReLU / GAP: zero MACs, zero params
        }
        ledger.layers.push_back(std::move(f));
    }
    for (std::size_t e = 0; e < net.skips.size(); ++e) {
        if (!net.skips[e].projection) continue;
        const ConvLayer& p = *net.skips[e].projection;
        const auto& os = shapes[std::size_t(net.skips[e].dst)];
        LayerFlops f;
        f.layer = int(net.layers.size() + e);
        f.name = "SkipProjection";
        f.dense_macs = std::uint64_t(p.c_out()) * p.c_in() * std::uint64_t(os[1]) * os[2];
        f.two_stage_total = f.dense_macs;
        f.params_conv = p.weight.numel();
        f.params = f.params_conv + p.bias.size();
        ledger.layers.push_back(std::move(f));
    }
    for (const auto& f : ledger.layers) {
        ledger.dense_macs_total += f.dense_macs;
        ledger.two_stage_total += f.two_stage_total;
        ledger.params_total += f.params;
        ledger.params_conv_total += f.params_conv;
    }
    return ledger;
}

CompiledSparseModel compile(const Network& net) {
    auto diags = validate(net);
    if (!diags.empty())
        throw std::invalid_argument("compile: network invalid: " + diags.front());

    CompiledSparseModel model;
    model.input_shape = net.input_shape;
    model.num_classes = net.num_classes;
    model.skips = net.skips;
    model.ledger = count_flops(net);
    for (const auto& layer : net.layers) {
        CompiledLayer cl;
        cl.kind = kind_of(layer);
        if (cl.kind == LayerKind::DecomposedConv) {
            const auto& l = std::get<DecomposedConvLayer>(layer);
            cl.dec.basis = l.basis;
            cl.dec.coeff = csr_from_coeff(l.coeff);
            cl.dec.bias = l.bias;
            cl.dec.stride = l.stride;
            cl.dec.padding = l.padding;
            cl.dec.kernel = l.kernel;
            cl.dec.dense_weight = reconstruct(l);
        } else {
            cl.op = layer;
        }
        model.layers.push_back(std::move(cl));
    }
    return model;
}

Tensor infer(const CompiledSparseModel& model, const Tensor& batch, int threads) {
    if (batch.rank() != 4 || batch.shape[1] != model.input_shape[0] ||
        batch.shape[2] != model.input_shape[1] || batch.shape[3] != model.input_shape[2])
        throw std::invalid_argument("infer: batch does not match model input shape");

    std::vector<Tensor> outputs;
    outputs.reserve(model.layers.size());
    const Tensor* cur = &batch;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const CompiledLayer& cl = model.layers[i];
        Tensor out;
        if (cl.kind == LayerKind::DecomposedConv) {
            const auto& d = cl.dec;
            const int oh = conv_out_extent(cur->shape[2], d.kernel, d.stride, d.padding);
            const int ow = conv_out_extent(cur->shape[3], d.kernel, d.stride, d.padding);
            Tensor inter = stage1(*cur, d.basis, d.kernel, d.stride, d.padding, threads);
            out = stage2(inter, d.coeff, d.bias, oh, ow, threads);
        } else {
            out = eval_layer(cl.op, *cur);
        }
        for (std::size_t e = 0; e < model.skips.size(); ++e) {
            const SkipEdge& edge = model.skips[e];
            if (edge.dst != int(i)) continue;
            const Tensor& src_out = edge.src < 0 ? batch : outputs[std::size_t(edge.src)];
            if (edge.projection) {
                Tensor proj = conv2d_fast(src_out, edge.projection->weight, edge.projection->bias,
                                          edge.projection->stride, edge.projection->padding);
                add_inplace(out, proj);
            } else {
                add_inplace(out, src_out);
            }
        }
        outputs.push_back(std::move(out));
        cur = &outputs.back();
    }
    Tensor logits = outputs.empty() ? batch : outputs.back();
    return logits.reshaped({logits.shape[0], int(logits.numel()) / logits.shape[0]});
}

namespace {

double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double p95_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t idx =
        std::min(xs.size() - 1, std::size_t(std::ceil(0.95 * double(xs.size())) - 1));
    return xs[idx];
}

// Peak live tensor bytes along the schedule (input + output + workspace
// per layer, plus resident model parameters).
struct PeakEstimate {
    double dense_mb = 0;
    double two_stage_mb = 0;
};

PeakEstimate estimate_peak(const Network& net, int batch) {
    const auto shapes = infer_shapes(net);
    std::uint64_t model_bytes = 0;
    std::uint64_t dense_peak = 0, two_peak = 0;
    std::array<int, 3> in = net.input_shape;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& os = shapes[i];
        const std::uint64_t in_b = std::uint64_t(batch) * in[0] * in[1] * in[2] * 4;
        const std::uint64_t out_b = std::uint64_t(batch) * os[0] * os[1] * os[2] * 4;
        std::uint64_t dense_ws = 0, two_ws = 0;
        if (kind_of(net.layers[i]) == LayerKind::Conv) {
            const auto& l = std::get<ConvLayer>(net.layers[i]);
            dense_ws = std::uint64_t(l.c_in()) * l.kernel() * l.kernel() * os[1] * os[2] * 4;
            model_bytes += (l.weight.numel() + l.bias.size()) * 4;
            two_ws = dense_ws;
        } else if (kind_of(net.layers[i]) == LayerKind::DecomposedConv) {
            const auto& l = std::get<DecomposedConvLayer>(net.layers[i]);
            dense_ws = std::uint64_t(l.c_in()) * l.kernel * l.kernel * os[1] * os[2] * 4;
            two_ws = std::uint64_t(batch) * l.c_in() * l.basis_rows() * os[1] * os[2] * 4;
            std::uint64_t nnz = 0;
            for (float v : l.coeff.data)
                if (v != 0.0f) ++nnz;
            model_bytes += (l.basis.numel() + l.bias.size()) * 4 + nnz * 8;
        } else if (kind_of(net.layers[i]) == LayerKind::Linear) {
            const auto& l = std::get<LinearLayer>(net.layers[i]);
            model_bytes += (l.weight.numel() + l.bias.size()) * 4;
        } else if (kind_of(net.layers[i]) == LayerKind::BatchNorm) {
            model_bytes += 4 * std::get<BatchNormLayer>(net.layers[i]).gamma.size() * 4;
        }
        dense_peak = std::max(dense_peak, in_b + out_b + dense_ws);
        two_peak = std::max(two_peak, in_b + out_b + two_ws);
        in = os;
    }
    PeakEstimate pe;
    pe.dense_mb = double(dense_peak + model_bytes) / (1024.0 * 1024.0);
    pe.two_stage_mb = double(two_peak + model_bytes) / (1024.0 * 1024.0);
    return pe;
}

}  // namespace

BenchmarkResult benchmark(const Network& net, int batch, int repetitions, int threads) {
    if (repetitions < 5) throw std::invalid_argument("benchmark: repetitions must be >= 5");
    CompiledSparseModel model = compile(net);

    // Dense reference model: decomposed layers replaced by their
    // reconstructed dense convolutions.
    Network dense = net;
    for (auto& layer : dense.layers) {
        if (kind_of(layer) != LayerKind::DecomposedConv) continue;
        const auto& l = std::get<DecomposedConvLayer>(layer);
        ConvLayer c;
        c.weight = reconstruct(l);
        c.bias = l.bias;
        c.stride = l.stride;
        c.padding = l.padding;
        layer = std::move(c);
    }

    Tensor input({batch, net.input_shape[0], net.input_shape[1], net.input_shape[2]});
    for (std::size_t i = 0; i < input.numel(); ++i)
        input.data[i] = float(std::sin(0.37 * double(i)));

    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point a, clock::time_point b) {
        return std::chrono::duration<double, std::milli>(b - a).count();
    };

    // warmup, excluded from statistics
    (void)forward(dense, input);
    (void)infer(model, input, threads);

    std::vector<double> dense_ms, two_ms, s1_ms, s2_ms;
    for (int r = 0; r < repetitions; ++r) {
        auto t0 = clock::now();
        Tensor out = forward(dense, input);
        auto t1 = clock::now();
        dense_ms.push_back(ms_since(t0, t1));
        (void)out;
    }
    for (int r = 0; r < repetitions; ++r) {
        double s1 = 0, s2 = 0;
        auto t0 = clock::now();
        // two-stage run with per-stage timers
        std::vector<Tensor> outputs;
        const Tensor* cur = &input;
        for (std::size_t i = 0; i < model.layers.size(); ++i) {
            const CompiledLayer& cl = model.layers[i];
            Tensor out;
            if (cl.kind == LayerKind::DecomposedConv) {
                const auto& d = cl.dec;
                const int oh = conv_out_extent(cur->shape[2], d.kernel, d.stride, d.padding);
                const int ow = conv_out_extent(cur->shape[3], d.kernel, d.stride, d.padding);
                auto a = clock::now();
                Tensor inter = stage1(*cur, d.basis, d.kernel, d.stride, d.padding, threads);
                auto b = clock::now();
                out = stage2(inter, d.coeff, d.bias, oh, ow, threads);
                auto c = clock::now();
                s1 += ms_since(a, b);
                s2 += ms_since(b, c);
            } else {
                out = eval_layer(cl.op, *cur);
            }
            for (std::size_t e = 0; e < model.skips.size(); ++e) {
                const SkipEdge& edge = model.skips[e];
                if (edge.dst != int(i)) continue;
                const Tensor& src_out = edge.src < 0 ? input : outputs[std::size_t(edge.src)];
                if (edge.projection) {
                    Tensor proj =
                        conv2d_fast(src_out, edge.projection->weight, edge.projection->bias,
                                    edge.projection->stride, edge.projection->padding);
                    add_inplace(out, proj);
                } else {
                    add_inplace(out, src_out);
                }
            }
            outputs.push_back(std::move(out));
            cur = &outputs.back();
        }
        auto t1 = clock::now();
        two_ms.push_back(ms_since(t0, t1));
        s1_ms.push_back(s1);
        s2_ms.push_back(s2);
    }

    BenchmarkResult res;
    res.batch = batch;
    res.repetitions = repetitions;
    res.threads = threads;
    res.dense_median_ms = median_of(dense_ms);
    res.dense_p95_ms = p95_of(dense_ms);
    res.two_stage_median_ms = median_of(two_ms);
    res.two_stage_p95_ms = p95_of(two_ms);
    res.stage1_median_ms = median_of(s1_ms);
    res.stage2_median_ms = median_of(s2_ms);
    const PeakEstimate pe = estimate_peak(net, batch);
    res.dense_peak_mb = pe.dense_mb;
    res.two_stage_peak_mb = pe.two_stage_mb;
    return res;
}

std::string FlopLedger::to_json() const {
    nlohmann::json j;
    j["layers"] = nlohmann::json::array();
    for (const auto& f : layers) {
        nlohmann::json row;
        row["layer"] = f.layer;
        row["name"] = f.name;
        row["dense_macs"] = f.dense_macs;
        row["stage1_macs"] = f.stage1_macs;
        row["stage2_macs"] = f.stage2_macs;
        row["two_stage_total"] = f.two_stage_total;
        row["params"] = f.params;
        row["params_conv"] = f.params_conv;
        j["layers"].push_back(row);
    }
    j["dense_macs_total"] = dense_macs_total;
    j["two_stage_total"] = two_stage_total;
    j["params_total"] = params_total;
    j["params_conv_total"] = params_conv_total;
    return j.dump(2);
}

std::string BenchmarkResult::to_json() const {
    nlohmann::json j;
    j["batch"] = batch;
    j["repetitions"] = repetitions;
    j["threads"] = threads;
    j["dense_median_ms"] = dense_median_ms;
    j["dense_p95_ms"] = dense_p95_ms;
    j["two_stage_median_ms"] = two_stage_median_ms;
    j["two_stage_p95_ms"] = two_stage_p95_ms;
    j["stage1_median_ms"] = stage1_median_ms;
    j["stage2_median_ms"] = stage2_median_ms;
    j["dense_peak_mb"] = dense_peak_mb;
    j["two_stage_peak_mb"] = two_stage_peak_mb;
    return j.dump(2);
}

std::string BenchmarkResult::to_csv() const {
    char buf[384];
    std::snprintf(buf, sizeof(buf),
                  "variant,batch,median_ms,p95_ms,stage1_ms,stage2_ms,peak_mb\n"
                  "dense,%d,%.6g,%.6g,0,0,%.6g\n"
                  "two_stage,%d,%.6g,%.6g,%.6g,%.6g,%.6g\n",
                  batch, dense_median_ms, dense_p95_ms, dense_peak_mb, batch,
                  two_stage_median_ms, two_stage_p95_ms, stage1_median_ms, stage2_median_ms,
                  two_stage_peak_mb);
    return buf;
}

}  // namespace bknet
