#include "bknet/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bknet/conv.hpp"
#include "bknet/decompose.hpp"
#include "bknet/linalg.hpp"

namespace bknet {

namespace {

int pool_out_extent(int in, int window, int stride) {
    if (in < window) throw std::invalid_argument("pool window larger than input");
    if ((in - window) % stride != 0)
        throw std::invalid_argument("pool output extent not exact for in=" + std::to_string(in));
    return (in - window) / stride + 1;
}

}  // namespace

std::array<int, 3> layer_output_shape(const LayerSpec& layer, const std::array<int, 3>& in) {
    const int c = in[0], h = in[1], w = in[2];
    switch (kind_of(layer)) {
        case LayerKind::Conv: {
            const auto& l = std::get<ConvLayer>(layer);
            if (l.c_in() != c)
                throw std::invalid_argument("conv expects " + std::to_string(l.c_in()) +
                                            " channels, got " + std::to_string(c));
            return {l.c_out(), conv_out_extent(h, l.kernel(), l.stride, l.padding),
                    conv_out_extent(w, l.kernel(), l.stride, l.padding)};
        }
        case LayerKind::DecomposedConv: {
            const auto& l = std::get<DecomposedConvLayer>(layer);
            if (l.c_in() != c)
                throw std::invalid_argument("decomposed conv expects " + std::to_string(l.c_in()) +
                                            " channels, got " + std::to_string(c));
            return {l.c_out(), conv_out_extent(h, l.kernel, l.stride, l.padding),
                    conv_out_extent(w, l.kernel, l.stride, l.padding)};
        }
        case LayerKind::Linear: {
            const auto& l = std::get<LinearLayer>(layer);
            if (l.in_features() != c * h * w)
                throw std::invalid_argument("linear expects " + std::to_string(l.in_features()) +
                                            " features, got " + std::to_string(c * h * w));
            return {l.out_features(), 1, 1};
        }
        case LayerKind::ReLU: return in;
        case LayerKind::MaxPool: {
            const auto& l = std::get<MaxPoolLayer>(layer);
            return {c, pool_out_extent(h, l.window, l.stride), pool_out_extent(w, l.window, l.stride)};
        }
        case LayerKind::AvgPool: {
            const auto& l = std::get<AvgPoolLayer>(layer);
            return {c, pool_out_extent(h, l.window, l.stride), pool_out_extent(w, l.window, l.stride)};
        }
        case LayerKind::BatchNorm: {
            const auto& l = std::get<BatchNormLayer>(layer);
            if (l.channels() != c)
                throw std::invalid_argument("batchnorm expects " + std::to_string(l.channels()) +
                                            " channels, got " + std::to_string(c));
            return in;
        }
        case LayerKind::GlobalAvgPool: return {c, 1, 1};
    }
    throw std::logic_error("unknown layer kind");
}

std::vector<std::array<int, 3>> infer_shapes(const Network& net) {
    std::vector<std::array<int, 3>> shapes;
    shapes.reserve(net.layers.size());
    std::array<int, 3> cur = net.input_shape;
    for (const auto& layer : net.layers) {
        cur = layer_output_shape(layer, cur);
        shapes.push_back(cur);
    }
    return shapes;
}

std::vector<std::string> validate(const Network& net) {
    std::vector<std::string> diags;
    auto add = [&](int idx, const std::string& msg) {
        diags.push_back("layer " + std::to_string(idx) + ": " + msg);
    };

    if (net.input_shape[0] <= 0 || net.input_shape[1] <= 0 || net.input_shape[2] <= 0)
        diags.push_back("network: input shape must be positive");

    // Local layer invariants.
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& layer = net.layers[i];
        switch (kind_of(layer)) {
            case LayerKind::Conv: {
                const auto& l = std::get<ConvLayer>(layer);
                if (l.weight.rank() != 4 || l.weight.shape[2] != l.weight.shape[3])
                    add(int(i), "conv weight must be rank-4 with square kernel");
                else if (int(l.bias.size()) != l.c_out())
                    add(int(i), "conv bias length != c_out");
                break;
            }
            case LayerKind::DecomposedConv: {
                const auto& l = std::get<DecomposedConvLayer>(layer);
                const int kk = l.kernel * l.kernel;
                if (l.d < 1 || l.d > kk) add(int(i), "d outside [1, k^2]");
                if (l.basis.rank() != 2 || l.basis.shape[0] != l.basis_rows() ||
                    l.basis.shape[1] != kk)
                    add(int(i), "basis shape inconsistent with d and kernel");
                if (l.coeff.rank() != 3 || l.coeff.shape[2] != l.basis_rows())
                    add(int(i), "coeff shape inconsistent with basis rows");
                if (l.mask.size() != l.coeff.numel())
                    add(int(i), "prune mask not congruent to coefficients");
                else
                    for (std::size_t p = 0; p < l.mask.size(); ++p)
                        if (!l.mask[p] && l.coeff.data[p] != 0.0f) {
                            add(int(i), "masked coefficient not exactly zero");
                            break;
                        }
                if (int(l.bias.size()) != l.c_out()) add(int(i), "bias length != c_out");
                break;
            }
            case LayerKind::Linear: {
                const auto& l = std::get<LinearLayer>(layer);
                if (l.weight.rank() != 2) add(int(i), "linear weight must be rank-2");
                else if (int(l.bias.size()) != l.out_features())
                    add(int(i), "linear bias length != out_features");
                break;
            }
            case LayerKind::BatchNorm: {
                const auto& l = std::get<BatchNormLayer>(layer);
                const std::size_t n = l.gamma.size();
                if (l.beta.size() != n || l.running_mean.size() != n || l.running_var.size() != n)
                    add(int(i), "batchnorm parameter vectors disagree in length");
                for (float v : l.running_var)
                    if (v < 0.0f) {
                        add(int(i), "batchnorm running variance negative");
                        break;
                    }
                break;
            }
            default: break;
        }
    }

    // Shape chain.
    std::vector<std::array<int, 3>> shapes(net.layers.size(), {0, 0, 0});
    bool chain_ok = true;
    {
        std::array<int, 3> cur = net.input_shape;
        for (std::size_t i = 0; i < net.layers.size() && chain_ok; ++i) {
            try {
                cur = layer_output_shape(net.layers[i], cur);
                shapes[i] = cur;
            } catch (const std::exception& e) {
                add(int(i), std::string("shape chain: ") + e.what());
                chain_ok = false;
            }
        }
        if (chain_ok && net.num_classes > 0 && !net.layers.empty()) {
            const auto& s = shapes.back();
            if (s[0] * s[1] * s[2] != net.num_classes)
                add(int(net.layers.size()) - 1, "final output size != declared class count");
        }
    }

    // Skip edges.
    const int n = int(net.layers.size());
    for (std::size_t e = 0; e < net.skips.size(); ++e) {
        const SkipEdge& edge = net.skips[e];
        auto eadd = [&](const std::string& msg) {
            diags.push_back("skip " + std::to_string(e) + ": " + msg);
        };
        if (edge.src < -1 || edge.dst < 0 || edge.src >= n || edge.dst >= n) {
            eadd("endpoint out of range");
            continue;
        }
        if (edge.src >= edge.dst) {
            eadd("must be forward-only (src < dst)");
            continue;
        }
        if (edge.projection) {
            const ConvLayer& p = *edge.projection;
            if (p.weight.rank() != 4 || p.kernel() != 1) eadd("projection must be a 1x1 conv");
        }
        if (chain_ok) {
            std::array<int, 3> src_shape =
                edge.src < 0 ? net.input_shape : shapes[std::size_t(edge.src)];
            std::array<int, 3> merged = src_shape;
            if (edge.projection) {
                try {
                    merged = layer_output_shape(LayerSpec(*edge.projection), src_shape);
                } catch (const std::exception& ex) {
                    eadd(std::string("projection shape: ") + ex.what());
                    continue;
                }
            }
            if (merged != shapes[std::size_t(edge.dst)])
                eadd("source output shape (after projection) does not match destination");
        }
        for (std::size_t f = 0; f < e; ++f) {
            const SkipEdge& other = net.skips[f];
            const bool disjoint = other.dst <= edge.src || edge.dst <= other.src;
            const bool nested = (edge.src <= other.src && other.dst <= edge.dst) ||
                                (other.src <= edge.src && edge.dst <= other.dst);
            if (!disjoint && !nested) eadd("crosses skip " + std::to_string(f));
        }
    }
    return diags;
}

namespace {

Tensor linear_forward(const LinearLayer& l, const Tensor& x) {
    const int n = x.shape[0];
    const int feat = int(x.numel()) / n;
    Tensor xin = x.reshaped({n, feat});
    Tensor wt({feat, l.out_features()});
    for (int o = 0; o < l.out_features(); ++o)
        for (int f = 0; f < feat; ++f) wt.at(f, o) = l.weight.at(o, f);
    Tensor out = matmul(xin, wt);
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < l.out_features(); ++o) out.at(b, o) += l.bias[std::size_t(o)];
    return out.reshaped({n, l.out_features(), 1, 1});
}

Tensor relu_forward(const Tensor& x) {
    Tensor out = x;
    for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
    return out;
}

Tensor maxpool_forward(const MaxPoolLayer& l, const Tensor& x, std::vector<int>* argmax) {
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const int oh = pool_out_extent(h, l.window, l.stride), ow = pool_out_extent(w, l.window, l.stride);
    Tensor out({n, c, oh, ow});
    if (argmax) argmax->assign(out.numel(), -1);
    std::size_t oi = 0;
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox, ++oi) {
                    float best = -INFINITY;
                    int best_idx = -1;
                    for (int ky = 0; ky < l.window; ++ky)
                        for (int kx = 0; kx < l.window; ++kx) {
                            const int iy = oy * l.stride + ky, ix = ox * l.stride + kx;
                            const int flat =
                                ((b * c + ch) * h + iy) * w + ix;
                            const float v = x.data[std::size_t(flat)];
                            if (v > best) {
                                best = v;
                                best_idx = flat;
                            }
                        }
                    out.data[oi] = best;
                    if (argmax) (*argmax)[oi] = best_idx;
                }
    return out;
}

Tensor avgpool_forward(const AvgPoolLayer& l, const Tensor& x) {
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const int oh = pool_out_extent(h, l.window, l.stride), ow = pool_out_extent(w, l.window, l.stride);
    const float inv = 1.0f / float(l.window * l.window);
    Tensor out({n, c, oh, ow});
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    float acc = 0;
                    for (int ky = 0; ky < l.window; ++ky)
                        for (int kx = 0; kx < l.window; ++kx)
                            acc += x.at(b, ch, oy * l.stride + ky, ox * l.stride + kx);
                    out.at(b, ch, oy, ox) = acc * inv;
                }
    return out;
}

Tensor gap_forward(const Tensor& x) {
    const int n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    const float inv = 1.0f / float(hw);
    Tensor out({n, c, 1, 1});
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const float* plane = &x.data[(std::size_t(b) * c + ch) * hw];
            float acc = 0;
            for (int i = 0; i < hw; ++i) acc += plane[i];
            out.at(b, ch, 0, 0) = acc * inv;
        }
    return out;
}

Tensor batchnorm_eval(const BatchNormLayer& l, const Tensor& x) {
    const int n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    Tensor out(x.shape);
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const float inv_std = 1.0f / std::sqrt(l.running_var[std::size_t(ch)] + l.eps);
            const float g = l.gamma[std::size_t(ch)] * inv_std;
            const float shift = l.beta[std::size_t(ch)] - l.running_mean[std::size_t(ch)] * g;
            const float* src = &x.data[(std::size_t(b) * c + ch) * hw];
            float* dst = &out.data[(std::size_t(b) * c + ch) * hw];
            for (int i = 0; i < hw; ++i) dst[i] = src[i] * g + shift;
        }
    return out;
}

Tensor batchnorm_train(BatchNormLayer& l, const Tensor& x, Tensor& xhat,
                       std::vector<float>& inv_std_out, std::vector<float>& mean_out) {
    const int n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    const float m = float(n) * float(hw);
    xhat = Tensor(x.shape);
    inv_std_out.assign(std::size_t(c), 0.0f);
    mean_out.assign(std::size_t(c), 0.0f);
    Tensor out(x.shape);
    for (int ch = 0; ch < c; ++ch) {
        double mean = 0;
        for (int b = 0; b < n; ++b) {
            const float* src = &x.data[(std::size_t(b) * c + ch) * hw];
            for (int i = 0; i < hw; ++i) mean += src[i];
        }
        mean /= m;
        double var = 0;
        for (int b = 0; b < n; ++b) {
            const float* src = &x.data[(std::size_t(b) * c + ch) * hw];
            for (int i = 0; i < hw; ++i) {
                const double d = src[i] - mean;
                var += d * d;
            }
        }
        var /= m;  // biased batch variance

        const float inv_std = 1.0f / std::sqrt(float(var) + l.eps);
        inv_std_out[std::size_t(ch)] = inv_std;
        mean_out[std::size_t(ch)] = float(mean);
        const float g = l.gamma[std::size_t(ch)], beta = l.beta[std::size_t(ch)];
        for (int b = 0; b < n; ++b) {
            const float* src = &x.data[(std::size_t(b) * c + ch) * hw];
            float* xh = &xhat.data[(std::size_t(b) * c + ch) * hw];
            float* dst = &out.data[(std::size_t(b) * c + ch) * hw];
            for (int i = 0; i < hw; ++i) {
                xh[i] = (src[i] - float(mean)) * inv_std;
                dst[i] = g * xh[i] + beta;
            }
        }
        l.running_mean[std::size_t(ch)] =
            (1.0f - l.momentum) * l.running_mean[std::size_t(ch)] + l.momentum * float(mean);
        l.running_var[std::size_t(ch)] =
            (1.0f - l.momentum) * l.running_var[std::size_t(ch)] + l.momentum * float(var);
    }
    return out;
}

Tensor run_conv_like(const LayerSpec& layer, const Tensor& x) {
    if (kind_of(layer) == LayerKind::Conv) {
        const auto& l = std::get<ConvLayer>(layer);
        return conv2d_fast(x, l.weight, l.bias, l.stride, l.padding);
    }
    const auto& l = std::get<DecomposedConvLayer>(layer);
    Tensor theta = reconstruct(l);
    return conv2d_fast(x, theta, l.bias, l.stride, l.padding);
}

template <bool Training>
Tensor forward_impl(Network& net, const Tensor& batch, ForwardCache* cache) {
    if (batch.rank() != 4)
        throw std::invalid_argument("forward: batch must be NCHW");
    if (batch.shape[1] != net.input_shape[0] || batch.shape[2] != net.input_shape[1] ||
        batch.shape[3] != net.input_shape[2])
        throw std::invalid_argument("forward: batch shape does not match network input shape");

    const std::size_t n_layers = net.layers.size();
    std::vector<Tensor> outputs;
    outputs.reserve(n_layers);
    if (cache) {
        cache->input = batch;
        cache->bn_xhat.assign(n_layers, Tensor());
        cache->bn_inv_std.assign(n_layers, {});
        cache->bn_centered_mean.assign(n_layers, {});
        cache->pool_argmax.assign(n_layers, {});
        cache->skip_proj_out.assign(net.skips.size(), Tensor());
    }

    const Tensor* cur = &batch;
    for (std::size_t i = 0; i < n_layers; ++i) {
        LayerSpec& layer = net.layers[i];
        Tensor out;
        switch (kind_of(layer)) {
            case LayerKind::Conv:
            case LayerKind::DecomposedConv: out = run_conv_like(layer, *cur); break;
            case LayerKind::Linear: out = linear_forward(std::get<LinearLayer>(layer), *cur); break;
            case LayerKind::ReLU: out = relu_forward(*cur); break;
            case LayerKind::MaxPool:
                out = maxpool_forward(std::get<MaxPoolLayer>(layer), *cur,
                                      cache ? &cache->pool_argmax[i] : nullptr);
                break;
            case LayerKind::AvgPool: out = avgpool_forward(std::get<AvgPoolLayer>(layer), *cur); break;
            case LayerKind::BatchNorm: {
                auto& bn = std::get<BatchNormLayer>(layer);
                if constexpr (Training) {
                    out = batchnorm_train(bn, *cur, cache->bn_xhat[i], cache->bn_inv_std[i],
                                          cache->bn_centered_mean[i]);
                } else {
                    out = batchnorm_eval(bn, *cur);
                }
                break;
            }
            case LayerKind::GlobalAvgPool: out = gap_forward(*cur); break;
        }

        for (std::size_t e = 0; e < net.skips.size(); ++e) {
            const SkipEdge& edge = net.skips[e];
            if (edge.dst != int(i)) continue;
            const Tensor& src_out = edge.src < 0 ? batch : outputs[std::size_t(edge.src)];
            if (edge.projection) {
                Tensor proj = conv2d_fast(src_out, edge.projection->weight, edge.projection->bias,
                                          edge.projection->stride, edge.projection->padding);
                add_inplace(out, proj);
                if (cache) cache->skip_proj_out[e] = std::move(proj);
            } else {
                add_inplace(out, src_out);
            }
        }

        outputs.push_back(std::move(out));
        cur = &outputs.back();
    }

    Tensor logits = outputs.empty() ? batch : outputs.back();
    const int n = logits.shape[0];
    logits = logits.reshaped({n, int(logits.numel()) / n});
    if (cache) cache->outputs = std::move(outputs);
    return logits;
}

}  // namespace

Tensor forward(const Network& net, const Tensor& batch, ForwardCache* cache) {
    // Eval mode never mutates; the const_cast is confined here.
    return forward_impl<false>(const_cast<Network&>(net), batch, cache);
}

Tensor eval_layer(const LayerSpec& layer, const Tensor& input) {
    switch (kind_of(layer)) {
        case LayerKind::Conv:
        case LayerKind::DecomposedConv: return run_conv_like(layer, input);
        case LayerKind::Linear: return linear_forward(std::get<LinearLayer>(layer), input);
        case LayerKind::ReLU: return relu_forward(input);
        case LayerKind::MaxPool:
            return maxpool_forward(std::get<MaxPoolLayer>(layer), input, nullptr);
        case LayerKind::AvgPool: return avgpool_forward(std::get<AvgPoolLayer>(layer), input);
        case LayerKind::BatchNorm: return batchnorm_eval(std::get<BatchNormLayer>(layer), input);
        case LayerKind::GlobalAvgPool: return gap_forward(input);
    }
    throw std::logic_error("unknown layer kind");
}

Tensor forward_train(Network& net, const Tensor& batch, ForwardCache& cache) {
    return forward_impl<true>(net, batch, &cache);
}

std::vector<int> predict_classes(const Tensor& logits) {
    const int n = logits.shape[0], c = logits.shape[1];
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int b = 0; b < n; ++b) {
        int best = 0;
        float best_v = logits.at(b, 0);
        for (int j = 1; j < c; ++j)
            if (logits.at(b, j) > best_v) {
                best_v = logits.at(b, j);
                best = j;
            }
        out[std::size_t(b)] = best;
    }
    return out;
}

}  // namespace bknet
