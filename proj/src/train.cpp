#include "bknet/train.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "bknet/conv.hpp"
#include "bknet/decompose.hpp"

namespace bknet {

const char* param_group_name(ParamGroup g) {
    return g == ParamGroup::Basis ? "basis" : "coefficients";
}

void TrainConfig::check() const {
    if (gamma < 0) throw std::invalid_argument("train config: gamma must be >= 0");
    if (alternation_interval < 1)
        throw std::invalid_argument("train config: alternation_interval must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
}

float lr_at_epoch(const TrainConfig& cfg, int epoch) {
    float lr = cfg.base_lr;
    if (cfg.schedule == LrSchedule::Step5075) {
        if (cfg.epochs > 0) {
            if (epoch >= cfg.epochs / 2) lr *= 0.1f;
            if (epoch >= (3 * cfg.epochs) / 4) lr *= 0.1f;
        }
    } else {
        const double t = cfg.epochs > 0 ? double(epoch) / double(cfg.epochs) : 0.0;
        lr = float(double(cfg.base_lr) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t)));
    }
    return lr;
}

std::string epoch_log_csv(const std::vector<EpochLog>& logs) {
    std::ostringstream os;
    os << "epoch,active_group,data_loss,l1_term,train_acc,test_acc,coeff_sparsity\n";
    char buf[192];
    for (const auto& l : logs) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g\n", l.epoch,
                      l.active_group.c_str(), l.data_loss, l.l1_term, l.train_acc, l.test_acc,
                      l.coeff_sparsity);
        os << buf;
    }
    return os.str();
}

XentResult softmax_xent(const Tensor& logits, const std::vector<int>& labels,
                        std::size_t label_offset) {
    const int n = logits.shape[0], c = logits.shape[1];
    XentResult res;
    res.grad = Tensor({n, c});
    double loss = 0;
    for (int b = 0; b < n; ++b) {
        const int y = labels[label_offset + std::size_t(b)];
        float row_max = logits.at(b, 0);
        for (int j = 1; j < c; ++j) row_max = std::max(row_max, logits.at(b, j));
        double denom = 0;
        for (int j = 0; j < c; ++j) denom += std::exp(double(logits.at(b, j)) - row_max);
        loss -= double(logits.at(b, y)) - row_max - std::log(denom);

        int argmax = 0;
        for (int j = 1; j < c; ++j)
            if (logits.at(b, j) > logits.at(b, argmax)) argmax = j;
        if (argmax == y) ++res.correct;

        for (int j = 0; j < c; ++j) {
            const double p = std::exp(double(logits.at(b, j)) - row_max) / denom;
            res.grad.at(b, j) = float((p - (j == y ? 1.0 : 0.0)) / n);
        }
    }
    res.loss = loss / n;
    return res;
}

template <class T>
DecompGradsT<T> decomposed_weight_grads(const TensorT<T>& grad_theta, const TensorT<T>& basis,
                                        const TensorT<T>& coeff,
                                        const std::vector<std::uint8_t>* mask, T gamma,
                                        ActiveSet active, bool centered) {
    const int rows_b = basis.shape[0], kk = basis.shape[1];
    const int c_out = coeff.shape[0], c_in = coeff.shape[1];
    const int n = c_out * c_in;
    if (coeff.shape[2] != rows_b || int(grad_theta.numel()) != n * kk)
        throw std::invalid_argument("decomposed_weight_grads: shape mismatch");
    const int learned = centered ? rows_b - 1 : rows_b;

    DecompGradsT<T> out;
    out.grad_basis = TensorT<T>(basis.shape, T(0));
    out.grad_coeff = TensorT<T>(coeff.shape, T(0));

    const bool basis_active = active != ActiveSet::Coefficients;
    const bool coeff_active = active != ActiveSet::Basis;

    if (basis_active) {
        // grad_B[m,:] = sum_r coeff[r,m] * G[r,:]
        for (int r = 0; r < n; ++r) {
            const T* grow = &grad_theta.data[std::size_t(r) * kk];
            const T* crow = &coeff.data[std::size_t(r) * rows_b];
            for (int m = 0; m < learned; ++m) {
                const T cm = crow[m];
                if (cm == T(0)) continue;
                T* brow = &out.grad_basis.data[std::size_t(m) * kk];
                for (int p = 0; p < kk; ++p) brow[p] += cm * grow[p];
            }
        }
    }
    if (coeff_active) {
        // grad_A[r,m] = G[r,:] . B[m,:] + gamma * sign(A[r,m])
        for (int r = 0; r < n; ++r) {
            const T* grow = &grad_theta.data[std::size_t(r) * kk];
            const T* crow = &coeff.data[std::size_t(r) * rows_b];
            T* arow = &out.grad_coeff.data[std::size_t(r) * rows_b];
            for (int m = 0; m < learned; ++m) {
                if (mask && !(*mask)[std::size_t(r) * rows_b + m]) continue;
                const T* brow = &basis.data[std::size_t(m) * kk];
                T acc = 0;
                for (int p = 0; p < kk; ++p) acc += grow[p] * brow[p];
                const T a = crow[m];
                if (a > T(0)) acc += gamma;
                else if (a < T(0)) acc -= gamma;
                arow[m] = acc;
            }
        }
    }
    return out;
}

DecompGradsT<float> decomposed_backward(const DecomposedConvLayer& layer, const Tensor& grad_theta,
                                        float gamma, ActiveSet active) {
    return decomposed_weight_grads(grad_theta, layer.basis, layer.coeff, &layer.mask, gamma,
                                   active, layer.centered);
}

NetGrads make_grad_buffers(const Network& net) {
    NetGrads g;
    g.layers.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& layer = net.layers[i];
        LayerGrads& lg = g.layers[i];
        switch (kind_of(layer)) {
            case LayerKind::Conv: {
                const auto& l = std::get<ConvLayer>(layer);
                lg.weight = Tensor(l.weight.shape, 0.0f);
                lg.bias.assign(l.bias.size(), 0.0f);
                break;
            }
            case LayerKind::DecomposedConv: {
                const auto& l = std::get<DecomposedConvLayer>(layer);
                lg.basis = Tensor(l.basis.shape, 0.0f);
                lg.coeff = Tensor(l.coeff.shape, 0.0f);
                lg.bias.assign(l.bias.size(), 0.0f);
                break;
            }
            case LayerKind::Linear: {
                const auto& l = std::get<LinearLayer>(layer);
                lg.weight = Tensor(l.weight.shape, 0.0f);
                lg.bias.assign(l.bias.size(), 0.0f);
                break;
            }
            case LayerKind::BatchNorm: {
                const auto& l = std::get<BatchNormLayer>(layer);
                lg.gamma.assign(l.gamma.size(), 0.0f);
                lg.beta.assign(l.beta.size(), 0.0f);
                break;
            }
            default: break;
        }
    }
    g.skip_proj.resize(net.skips.size());
    for (std::size_t e = 0; e < net.skips.size(); ++e)
        if (net.skips[e].projection) {
            g.skip_proj[e].weight = Tensor(net.skips[e].projection->weight.shape, 0.0f);
            g.skip_proj[e].bias.assign(net.skips[e].projection->bias.size(), 0.0f);
        }
    return g;
}

namespace {

void zero_grads(NetGrads& g) {
    auto zero_layer = [](LayerGrads& lg) {
        lg.weight.fill(0.0f);
        lg.basis.fill(0.0f);
        lg.coeff.fill(0.0f);
        std::fill(lg.bias.begin(), lg.bias.end(), 0.0f);
        std::fill(lg.gamma.begin(), lg.gamma.end(), 0.0f);
        std::fill(lg.beta.begin(), lg.beta.end(), 0.0f);
    };
    for (auto& lg : g.layers) zero_layer(lg);
    for (auto& lg : g.skip_proj) zero_layer(lg);
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
    Tensor g = upstream;
    for (std::size_t i = 0; i < g.numel(); ++i)
        if (input.data[i] <= 0.0f) g.data[i] = 0.0f;
    return g;
}

Tensor maxpool_backward(const Tensor& input, const Tensor& upstream,
                        const std::vector<int>& argmax) {
    Tensor g(input.shape, 0.0f);
    for (std::size_t i = 0; i < upstream.numel(); ++i)
        g.data[std::size_t(argmax[i])] += upstream.data[i];
    return g;
}

Tensor avgpool_backward(const AvgPoolLayer& l, const Tensor& input, const Tensor& upstream) {
    const int n = input.shape[0], c = input.shape[1], h = input.shape[2], w = input.shape[3];
    const int oh = upstream.shape[2], ow = upstream.shape[3];
    const float inv = 1.0f / float(l.window * l.window);
    Tensor g(input.shape, 0.0f);
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const float v = upstream.at(b, ch, oy, ox) * inv;
                    for (int ky = 0; ky < l.window; ++ky)
                        for (int kx = 0; kx < l.window; ++kx)
                            g.at(b, ch, oy * l.stride + ky, ox * l.stride + kx) += v;
                }
    (void)h;
    (void)w;
    return g;
}

Tensor gap_backward(const Tensor& input, const Tensor& upstream) {
    const int n = input.shape[0], c = input.shape[1], hw = input.shape[2] * input.shape[3];
    const float inv = 1.0f / float(hw);
    Tensor g(input.shape);
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const float v = upstream.at(b, ch, 0, 0) * inv;
            float* dst = &g.data[(std::size_t(b) * c + ch) * hw];
            for (int i = 0; i < hw; ++i) dst[i] = v;
        }
    return g;
}

Tensor linear_backward(const LinearLayer& l, const Tensor& input, const Tensor& upstream,
                       LayerGrads& lg) {
    const int n = input.shape[0];
    const int feat = int(input.numel()) / n, out_f = l.out_features();
    for (int b = 0; b < n; ++b) {
        const float* x = &input.data[std::size_t(b) * feat];
        const float* g = &upstream.data[std::size_t(b) * out_f];
        for (int o = 0; o < out_f; ++o) {
            const float go = g[o];
            lg.bias[std::size_t(o)] += go;
            if (go == 0.0f) continue;
            float* wrow = &lg.weight.data[std::size_t(o) * feat];
            for (int f = 0; f < feat; ++f) wrow[f] += go * x[f];
        }
    }
    Tensor gx(input.shape, 0.0f);
    for (int b = 0; b < n; ++b) {
        const float* g = &upstream.data[std::size_t(b) * out_f];
        float* dst = &gx.data[std::size_t(b) * feat];
        for (int o = 0; o < out_f; ++o) {
            const float go = g[o];
            if (go == 0.0f) continue;
            const float* wrow = &l.weight.data[std::size_t(o) * feat];
            for (int f = 0; f < feat; ++f) dst[f] += go * wrow[f];
        }
    }
    return gx;
}

Tensor batchnorm_backward(const BatchNormLayer& l, const ForwardCache& cache, std::size_t idx,
                          const Tensor& upstream, LayerGrads& lg) {
    const Tensor& xhat = cache.bn_xhat[idx];
    const std::vector<float>& inv_std = cache.bn_inv_std[idx];
    const int n = upstream.shape[0], c = upstream.shape[1],
              hw = upstream.shape[2] * upstream.shape[3];
    const double m = double(n) * hw;
    Tensor gx(upstream.shape);
    for (int ch = 0; ch < c; ++ch) {
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int b = 0; b < n; ++b) {
            const float* dy = &upstream.data[(std::size_t(b) * c + ch) * hw];
            const float* xh = &xhat.data[(std::size_t(b) * c + ch) * hw];
            for (int i = 0; i < hw; ++i) {
                sum_dy += dy[i];
                sum_dy_xhat += double(dy[i]) * xh[i];
            }
        }
        lg.beta[std::size_t(ch)] += float(sum_dy);
        lg.gamma[std::size_t(ch)] += float(sum_dy_xhat);

        const double gs = double(l.gamma[std::size_t(ch)]) * inv_std[std::size_t(ch)] / m;
        for (int b = 0; b < n; ++b) {
            const float* dy = &upstream.data[(std::size_t(b) * c + ch) * hw];
            const float* xh = &xhat.data[(std::size_t(b) * c + ch) * hw];
            float* dst = &gx.data[(std::size_t(b) * c + ch) * hw];
            for (int i = 0; i < hw; ++i)
                dst[i] = float(gs * (m * dy[i] - sum_dy - double(xh[i]) * sum_dy_xhat));
        }
    }
    return gx;
}

}  // namespace

double backward(Network& net, const ForwardCache& cache, const Tensor& grad_logits, float gamma,
                ActiveSet active, NetGrads& grads) {
    const std::size_t n_layers = net.layers.size();
    if (cache.outputs.size() != n_layers)
        throw std::invalid_argument("backward: cache does not match network");

    std::vector<Tensor> grad_acc(n_layers);
    {
        const Tensor& last = cache.outputs.back();
        grad_acc[n_layers - 1] = grad_logits.reshaped(last.shape);
    }

    double l1 = 0;
    for (std::size_t ii = n_layers; ii-- > 0;) {
        if (grad_acc[ii].numel() == 0) grad_acc[ii] = Tensor(cache.outputs[ii].shape, 0.0f);
        const Tensor& g_out = grad_acc[ii];
        const Tensor& input = ii == 0 ? cache.input : cache.outputs[ii - 1];

        // Skip edges terminating here: the addition routes the same
        // upstream gradient into the source (through the projection).
        for (std::size_t e = 0; e < net.skips.size(); ++e) {
            const SkipEdge& edge = net.skips[e];
            if (edge.dst != int(ii)) continue;
            if (edge.src < 0) {
                if (edge.projection) {
                    const Tensor& src_out = cache.input;
                    auto pg = conv2d_grads(src_out, edge.projection->weight, g_out,
                                           edge.projection->stride, edge.projection->padding);
                    add_inplace(grads.skip_proj[e].weight, pg.grad_weight);
                    for (std::size_t b = 0; b < pg.grad_bias.size(); ++b)
                        grads.skip_proj[e].bias[b] += pg.grad_bias[b];
                }
                continue;  // gradients into the network input are not used
            }
            const Tensor& src_out = cache.outputs[std::size_t(edge.src)];
            if (grad_acc[std::size_t(edge.src)].numel() == 0)
                grad_acc[std::size_t(edge.src)] = Tensor(src_out.shape, 0.0f);
            if (edge.projection) {
                auto pg = conv2d_grads(src_out, edge.projection->weight, g_out,
                                       edge.projection->stride, edge.projection->padding);
                add_inplace(grads.skip_proj[e].weight, pg.grad_weight);
                for (std::size_t b = 0; b < pg.grad_bias.size(); ++b)
                    grads.skip_proj[e].bias[b] += pg.grad_bias[b];
                add_inplace(grad_acc[std::size_t(edge.src)], pg.grad_input);
            } else {
                add_inplace(grad_acc[std::size_t(edge.src)], g_out);
            }
        }

        LayerSpec& layer = net.layers[ii];
        LayerGrads& lg = grads.layers[ii];
        Tensor g_in;
        switch (kind_of(layer)) {
            case LayerKind::Conv: {
                const auto& l = std::get<ConvLayer>(layer);
                auto cg = conv2d_grads(input, l.weight, g_out, l.stride, l.padding);
                add_inplace(lg.weight, cg.grad_weight);
                for (std::size_t b = 0; b < cg.grad_bias.size(); ++b) lg.bias[b] += cg.grad_bias[b];
                g_in = std::move(cg.grad_input);
                break;
            }
            case LayerKind::DecomposedConv: {
                const auto& l = std::get<DecomposedConvLayer>(layer);
                Tensor theta = reconstruct(l);
                auto cg = conv2d_grads(input, theta, g_out, l.stride, l.padding);
                for (std::size_t b = 0; b < cg.grad_bias.size(); ++b) lg.bias[b] += cg.grad_bias[b];
                auto dg = decomposed_backward(l, cg.grad_weight, gamma, active);
                add_inplace(lg.basis, dg.grad_basis);
                add_inplace(lg.coeff, dg.grad_coeff);
                g_in = std::move(cg.grad_input);

                const int learned = l.centered ? l.basis_rows() - 1 : l.basis_rows();
                const int rows = l.basis_rows();
                for (int r = 0; r < l.c_out() * l.c_in(); ++r)
                    for (int m = 0; m < learned; ++m)
                        l1 += std::abs(double(l.coeff.data[std::size_t(r) * rows + m]));
                break;
            }
            case LayerKind::Linear:
                g_in = linear_backward(std::get<LinearLayer>(layer), input, g_out, lg);
                break;
            case LayerKind::ReLU: g_in = relu_backward(input, g_out); break;
            case LayerKind::MaxPool:
                g_in = maxpool_backward(input, g_out, cache.pool_argmax[ii]);
                break;
            case LayerKind::AvgPool:
                g_in = avgpool_backward(std::get<AvgPoolLayer>(layer), input, g_out);
                break;
            case LayerKind::BatchNorm:
                g_in = batchnorm_backward(std::get<BatchNormLayer>(layer), cache, ii, g_out, lg);
                break;
            case LayerKind::GlobalAvgPool: g_in = gap_backward(input, g_out); break;
        }

        if (ii > 0) {
            if (grad_acc[ii - 1].numel() == 0) grad_acc[ii - 1] = std::move(g_in);
            else add_inplace(grad_acc[ii - 1], g_in);
        }
    }
    return double(gamma) * l1;
}

Sgd::Sgd(Network& net, const TrainConfig& cfg)
    : momentum_(cfg.momentum), weight_decay_(cfg.weight_decay), net_(&net) {
    auto push = [&](float* value, std::size_t size, Slot::Cls cls,
                    const std::uint8_t* mask = nullptr, int tail_guard = 0, int stride = 0) {
        Slot s;
        s.value = value;
        s.size = size;
        s.cls = cls;
        s.mask = mask;
        s.grad = nullptr;
        s.velocity.assign(size, 0.0f);
        s.tail_guard = tail_guard;
        s.stride = stride > 0 ? stride : int(size);
        slots_.push_back(std::move(s));
    };
    for (auto& layer : net.layers) {
        switch (kind_of(layer)) {
            case LayerKind::Conv: {
                auto& l = std::get<ConvLayer>(layer);
                push(l.weight.data.data(), l.weight.numel(), Slot::Cls::Dense);
                push(l.bias.data(), l.bias.size(), Slot::Cls::Bias);
                break;
            }
            case LayerKind::DecomposedConv: {
                auto& l = std::get<DecomposedConvLayer>(layer);
                const int kk = l.kernel * l.kernel;
                push(l.basis.data.data(), l.basis.numel(), Slot::Cls::Basis, nullptr,
                     l.centered ? kk : 0);
                push(l.coeff.data.data(), l.coeff.numel(), Slot::Cls::Coeff, l.mask.data(),
                     l.centered ? 1 : 0, l.basis_rows());
                push(l.bias.data(), l.bias.size(), Slot::Cls::Bias);
                break;
            }
            case LayerKind::Linear: {
                auto& l = std::get<LinearLayer>(layer);
                push(l.weight.data.data(), l.weight.numel(), Slot::Cls::Dense);
                push(l.bias.data(), l.bias.size(), Slot::Cls::Bias);
                break;
            }
            case LayerKind::BatchNorm: {
                auto& l = std::get<BatchNormLayer>(layer);
                push(l.gamma.data(), l.gamma.size(), Slot::Cls::BnScale);
                push(l.beta.data(), l.beta.size(), Slot::Cls::BnShift);
                break;
            }
            default: break;
        }
    }
    for (auto& edge : net.skips)
        if (edge.projection) {
            push(edge.projection->weight.data.data(), edge.projection->weight.numel(),
                 Slot::Cls::Dense);
            push(edge.projection->bias.data(), edge.projection->bias.size(), Slot::Cls::Bias);
        }
}

void Sgd::bind_grads(const NetGrads& grads, Network& net) {
    std::size_t slot = 0;
    auto bind = [&](const float* g) { slots_[slot++].grad = g; };
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerGrads& lg = grads.layers[i];
        switch (kind_of(net.layers[i])) {
            case LayerKind::Conv:
            case LayerKind::Linear:
                bind(lg.weight.data.data());
                bind(lg.bias.data());
                break;
            case LayerKind::DecomposedConv:
                bind(lg.basis.data.data());
                bind(lg.coeff.data.data());
                bind(lg.bias.data());
                break;
            case LayerKind::BatchNorm:
                bind(lg.gamma.data());
                bind(lg.beta.data());
                break;
            default: break;
        }
    }
    for (std::size_t e = 0; e < net.skips.size(); ++e)
        if (net.skips[e].projection) {
            bind(grads.skip_proj[e].weight.data.data());
            bind(grads.skip_proj[e].bias.data());
        }
    if (slot != slots_.size()) throw std::logic_error("sgd: grad binding out of sync");
}

void Sgd::step(const NetGrads& grads, float lr, ActiveSet active) {
    bind_grads(grads, *net_);
    for (auto& s : slots_) {
        const bool is_active = s.cls == Slot::Cls::Basis  ? active != ActiveSet::Coefficients
                               : s.cls == Slot::Cls::Coeff ? active != ActiveSet::Basis
                                                           : true;
        if (!is_active) continue;
        const bool decay = s.cls != Slot::Cls::Coeff && s.cls != Slot::Cls::BnShift;
        for (std::size_t i = 0; i < s.size; ++i) {
            if (s.mask && !s.mask[i]) {
                s.value[i] = 0.0f;
                continue;
            }
            if (s.tail_guard > 0 && int(i) % s.stride >= s.stride - s.tail_guard) continue;
            float g = s.grad[i];
            if (decay) g += weight_decay_ * s.value[i];
            s.velocity[i] = momentum_ * s.velocity[i] + g;
            s.value[i] -= lr * s.velocity[i];
        }
    }
}

void Sgd::reset_group_velocity(ParamGroup group) {
    const Slot::Cls cls = group == ParamGroup::Basis ? Slot::Cls::Basis : Slot::Cls::Coeff;
    for (auto& s : slots_)
        if (s.cls == cls) std::fill(s.velocity.begin(), s.velocity.end(), 0.0f);
}

EpochResult train_epoch(Network& net, const Dataset& data, const TrainConfig& cfg,
                        ActiveSet active, Sgd& sgd, float lr, Rng& rng) {
    cfg.check();
    const int n = data.size();
    if (n == 0) throw std::invalid_argument("train_epoch: empty dataset");

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[std::size_t(i)] = i;
    rng.shuffle(order);

    NetGrads grads = make_grad_buffers(net);
    double loss_sum = 0, l1_sum = 0;
    int correct = 0, batches = 0;

    for (int start = 0; start < n; start += cfg.batch_size) {
        const std::size_t count = std::size_t(std::min(cfg.batch_size, n - start));
        Tensor batch = gather_batch(data, order, std::size_t(start), count, cfg.augment, rng);
        std::vector<int> labels(count);
        for (std::size_t i = 0; i < count; ++i)
            labels[i] = data.labels[std::size_t(order[std::size_t(start) + i])];

        ForwardCache cache;
        Tensor logits = forward_train(net, batch, cache);
        XentResult xent = softmax_xent(logits, labels, 0);
        if (!std::isfinite(xent.loss))
            throw std::runtime_error("train_epoch: non-finite loss (lr=" + std::to_string(lr) +
                                     ", batch at " + std::to_string(start) + ")");

        zero_grads(grads);
        const double l1 = backward(net, cache, xent.grad, cfg.gamma, active, grads);
        sgd.step(grads, lr, active);

        loss_sum += xent.loss * double(count);
        l1_sum += l1;
        correct += xent.correct;
        ++batches;
    }

    EpochResult res;
    res.loss.data_loss = loss_sum / n;
    res.loss.l1_term = batches > 0 ? l1_sum / batches : 0.0;
    res.loss.total = res.loss.data_loss + res.loss.l1_term;
    res.train_acc = double(correct) / n;
    return res;
}

double evaluate(const Network& net, const Dataset& data, int batch_size) {
    const int n = data.size();
    if (n == 0) return 0.0;
    int correct = 0;
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[std::size_t(i)] = i;
    Rng unused(0);
    for (int start = 0; start < n; start += batch_size) {
        const std::size_t count = std::size_t(std::min(batch_size, n - start));
        Tensor batch = gather_batch(data, order, std::size_t(start), count, false, unused);
        Tensor logits = forward(net, batch);
        auto cls = predict_classes(logits);
        for (std::size_t i = 0; i < count; ++i)
            if (cls[i] == data.labels[std::size_t(start) + i]) ++correct;
    }
    return double(correct) / n;
}

double coefficient_sparsity(const Network& net) {
    std::size_t total = 0, small = 0;
    for (const auto& layer : net.layers) {
        if (kind_of(layer) != LayerKind::DecomposedConv) continue;
        const auto& l = std::get<DecomposedConvLayer>(layer);
        const int rows = l.basis_rows();
        const int learned = l.centered ? rows - 1 : rows;
        for (int r = 0; r < l.c_out() * l.c_in(); ++r)
            for (int m = 0; m < learned; ++m) {
                ++total;
                if (std::abs(l.coeff.data[std::size_t(r) * rows + m]) < 1e-3f) ++small;
            }
    }
    return total == 0 ? 0.0 : double(small) / double(total);
}

namespace {

bool has_decomposed(const Network& net) {
    for (const auto& l : net.layers)
        if (kind_of(l) == LayerKind::DecomposedConv) return true;
    return false;
}

std::vector<EpochLog> run_training(Network& net, const DataSplit& data, const TrainConfig& cfg,
                                   const char* seed_tag, bool alternate) {
    cfg.check();
    std::vector<EpochLog> logs;
    if (cfg.epochs == 0) return logs;

    Rng rng(derive_seed(cfg.seed, seed_tag));
    Sgd sgd(net, cfg);
    int prev_phase = -1;
    for (int e = 0; e < cfg.epochs; ++e) {
        ActiveSet active = ActiveSet::Both;
        std::string group_name = "joint";
        if (alternate) {
            const int phase = (e / cfg.alternation_interval) % 2;
            const ParamGroup group =
                phase == 0 ? cfg.start_group
                           : (cfg.start_group == ParamGroup::Basis ? ParamGroup::Coefficients
                                                                   : ParamGroup::Basis);
            if (phase != prev_phase) {
                sgd.reset_group_velocity(group);
                prev_phase = phase;
            }
            active = group == ParamGroup::Basis ? ActiveSet::Basis : ActiveSet::Coefficients;
            group_name = param_group_name(group);
        }

        EpochResult res = train_epoch(net, data.train, cfg, active, sgd, lr_at_epoch(cfg, e), rng);
        EpochLog log;
        log.epoch = e;
        log.active_group = group_name;
        log.data_loss = res.loss.data_loss;
        log.l1_term = res.loss.l1_term;
        log.train_acc = res.train_acc;
        log.test_acc = evaluate(net, data.test, cfg.batch_size);
        log.coeff_sparsity = coefficient_sparsity(net);
        logs.push_back(std::move(log));
    }
    return logs;
}

}  // namespace

std::vector<EpochLog> retrain(Network& net, const DataSplit& data, const TrainConfig& cfg) {
    if (!has_decomposed(net))
        throw std::invalid_argument("retrain: network has no decomposed layers");
    return run_training(net, data, cfg, "retrain", true);
}

std::vector<EpochLog> finetune_masked(Network& net, const DataSplit& data, const TrainConfig& cfg) {
    if (!has_decomposed(net))
        throw std::invalid_argument("finetune: network has no decomposed layers");
    TrainConfig ft = cfg;
    ft.gamma = 0.0f;
    return run_training(net, data, ft, "finetune", false);
}

std::vector<EpochLog> pretrain_dense(Network& net, const DataSplit& data, const TrainConfig& cfg) {
    return run_training(net, data, cfg, "pretrain", false);
}

void init_parameters(Network& net, Rng& rng) {
    auto init_conv = [&](ConvLayer& l) {
        const double bound = std::sqrt(6.0 / (double(l.c_in()) * l.kernel() * l.kernel()));
        fill_uniform(l.weight, rng, -bound, bound);
        std::fill(l.bias.begin(), l.bias.end(), 0.0f);
    };
    for (auto& layer : net.layers) {
        switch (kind_of(layer)) {
            case LayerKind::Conv: init_conv(std::get<ConvLayer>(layer)); break;
            case LayerKind::Linear: {
                auto& l = std::get<LinearLayer>(layer);
                const double bound = std::sqrt(6.0 / double(l.in_features()));
                fill_uniform(l.weight, rng, -bound, bound);
                std::fill(l.bias.begin(), l.bias.end(), 0.0f);
                break;
            }
            case LayerKind::BatchNorm: {
                auto& l = std::get<BatchNormLayer>(layer);
                std::fill(l.gamma.begin(), l.gamma.end(), 1.0f);
                std::fill(l.beta.begin(), l.beta.end(), 0.0f);
                std::fill(l.running_mean.begin(), l.running_mean.end(), 0.0f);
                std::fill(l.running_var.begin(), l.running_var.end(), 1.0f);
                break;
            }
            default: break;
        }
    }
    for (auto& edge : net.skips)
        if (edge.projection) init_conv(*edge.projection);
}

template DecompGradsT<float> decomposed_weight_grads<float>(const TensorT<float>&,
                                                            const TensorT<float>&,
                                                            const TensorT<float>&,
                                                            const std::vector<std::uint8_t>*, float,
                                                            ActiveSet, bool);
template DecompGradsT<double> decomposed_weight_grads<double>(const TensorT<double>&,
                                                              const TensorT<double>&,
                                                              const TensorT<double>&,
                                                              const std::vector<std::uint8_t>*,
                                                              double, ActiveSet, bool);

}  // namespace bknet
