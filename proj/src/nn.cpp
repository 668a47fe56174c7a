#include "casseg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "casseg/errors.hpp"
#include "casseg/random.hpp"

namespace casseg {

namespace {

constexpr std::size_t npos = kNoParameters;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void dense_forward(const Tensor& in, const Tensor& w, const Tensor& b, Tensor& out) {
    const std::size_t pixels = in.shape()[0] * in.shape()[1];
    const std::size_t nin = w.shape()[1], nout = w.shape()[0];
    const double* x = in.data().data();
    const double* wd = w.data().data();
    double* y = out.data().data();
    for (std::size_t p = 0; p < pixels; ++p) {
        const double* xp = x + p * nin;
        double* yp = y + p * nout;
        for (std::size_t o = 0; o < nout; ++o) {
            double acc = b[o];
            const double* wo = wd + o * nin;
            for (std::size_t i = 0; i < nin; ++i) acc += wo[i] * xp[i];
            yp[o] = acc;
        }
    }
}

void dense_backward(const Tensor& in, const Tensor& w, const Tensor& g, Tensor& gw, Tensor& gb, Tensor& gin) {
    const std::size_t pixels = in.shape()[0] * in.shape()[1];
    const std::size_t nin = w.shape()[1], nout = w.shape()[0];
    const double* x = in.data().data();
    const double* wd = w.data().data();
    const double* gd = g.data().data();
    double* gwd = gw.data().data();
    double* gind = gin.data().data();
    for (std::size_t p = 0; p < pixels; ++p) {
        const double* xp = x + p * nin;
        const double* gp = gd + p * nout;
        double* gip = gind + p * nin;
        for (std::size_t o = 0; o < nout; ++o) {
            const double go = gp[o];
            if (go == 0.0) continue;
            gb[o] += go;
            const double* wo = wd + o * nin;
            double* gwo = gwd + o * nin;
            for (std::size_t i = 0; i < nin; ++i) {
                gwo[i] += go * xp[i];
                gip[i] += go * wo[i];
            }
        }
    }
}

void conv_forward(const Tensor& in, const Tensor& w, const Tensor& b, Tensor& out) {
    const std::size_t h = in.shape()[0], wd = in.shape()[1], cin = in.shape()[2];
    const std::size_t cout = w.shape()[0], k = w.shape()[1];
    const auto r = static_cast<std::ptrdiff_t>(k / 2);
    const double* x = in.data().data();
    const double* wt = w.data().data();
    double* y = out.data().data();
    for (std::size_t yy = 0; yy < h; ++yy) {
        for (std::size_t xx = 0; xx < wd; ++xx) {
            double* yp = y + (yy * wd + xx) * cout;
            for (std::size_t o = 0; o < cout; ++o) yp[o] = b[o];
            for (std::size_t dy = 0; dy < k; ++dy) {
                const auto sy = static_cast<std::ptrdiff_t>(yy) + static_cast<std::ptrdiff_t>(dy) - r;
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t dx = 0; dx < k; ++dx) {
                    const auto sx = static_cast<std::ptrdiff_t>(xx) + static_cast<std::ptrdiff_t>(dx) - r;
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(wd)) continue;
                    const double* xp = x + (static_cast<std::size_t>(sy) * wd + static_cast<std::size_t>(sx)) * cin;
                    for (std::size_t o = 0; o < cout; ++o) {
                        const double* wo = wt + ((o * k + dy) * k + dx) * cin;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < cin; ++i) acc += wo[i] * xp[i];
                        yp[o] += acc;
                    }
                }
            }
        }
    }
}

void conv_backward(const Tensor& in, const Tensor& w, const Tensor& g, Tensor& gw, Tensor& gb, Tensor& gin) {
    const std::size_t h = in.shape()[0], wd = in.shape()[1], cin = in.shape()[2];
    const std::size_t cout = w.shape()[0], k = w.shape()[1];
    const auto r = static_cast<std::ptrdiff_t>(k / 2);
    const double* x = in.data().data();
    const double* wt = w.data().data();
    const double* gd = g.data().data();
    double* gwt = gw.data().data();
    double* gind = gin.data().data();
    for (std::size_t yy = 0; yy < h; ++yy) {
        for (std::size_t xx = 0; xx < wd; ++xx) {
            const double* gp = gd + (yy * wd + xx) * cout;
            for (std::size_t o = 0; o < cout; ++o) gb[o] += gp[o];
            for (std::size_t dy = 0; dy < k; ++dy) {
                const auto sy = static_cast<std::ptrdiff_t>(yy) + static_cast<std::ptrdiff_t>(dy) - r;
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t dx = 0; dx < k; ++dx) {
                    const auto sx = static_cast<std::ptrdiff_t>(xx) + static_cast<std::ptrdiff_t>(dx) - r;
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(wd)) continue;
                    const std::size_t src = (static_cast<std::size_t>(sy) * wd + static_cast<std::size_t>(sx)) * cin;
                    const double* xp = x + src;
                    double* gip = gind + src;
                    for (std::size_t o = 0; o < cout; ++o) {
                        const double go = gp[o];
                        if (go == 0.0) continue;
                        const std::size_t woff = ((o * k + dy) * k + dx) * cin;
                        const double* wo = wt + woff;
                        double* gwo = gwt + woff;
                        for (std::size_t i = 0; i < cin; ++i) {
                            gwo[i] += go * xp[i];
                            gip[i] += go * wo[i];
                        }
                    }
                }
            }
        }
    }
}

void softmax_forward(const Tensor& in, Tensor& out) {
    const std::size_t c = in.shape()[2];
    const std::size_t pixels = in.size() / c;
    for (std::size_t p = 0; p < pixels; ++p) {
        const double* x = in.data().data() + p * c;
        double* y = out.data().data() + p * c;
        const double mx = *std::max_element(x, x + c);
        double sum = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
            y[i] = std::exp(x[i] - mx);
            sum += y[i];
        }
        for (std::size_t i = 0; i < c; ++i) y[i] /= sum;
    }
}

// Jacobian-vector product: dL/dx_i = s_i (g_i - sum_j s_j g_j).
void softmax_backward(const Tensor& out, const Tensor& g, Tensor& gin) {
    const std::size_t c = out.shape()[2];
    const std::size_t pixels = out.size() / c;
    for (std::size_t p = 0; p < pixels; ++p) {
        const double* s = out.data().data() + p * c;
        const double* gp = g.data().data() + p * c;
        double* gi = gin.data().data() + p * c;
        double dot = 0.0;
        for (std::size_t i = 0; i < c; ++i) dot += s[i] * gp[i];
        for (std::size_t i = 0; i < c; ++i) gi[i] = s[i] * (gp[i] - dot);
    }
}

std::size_t channels_out(const LayerSpec& spec, std::size_t in) {
    return std::visit(overloaded{[](const Dense& d) { return d.out; },
                                 [](const Conv2d& c) { return c.out_channels; },
                                 [in](const Relu&) { return in; },
                                 [in](const SoftmaxChannels&) { return in; }},
                      spec);
}

Shape output_shape(const LayerSpec& spec, const Shape& in) {
    return Shape{in[0], in[1], channels_out(spec, in[2])};
}

void check_layer_input(const LayerSpec& spec, const Shape& shape, std::size_t index) {
    if (shape.size() != 3) throw ShapeError("forward: input must be a rank-3 [H, W, C] tensor");
    const std::size_t expected = std::visit(overloaded{[](const Dense& d) { return d.in; },
                                                       [](const Conv2d& c) { return c.in_channels; },
                                                       [&](const auto&) { return shape[2]; }},
                                            spec);
    if (shape[2] != expected) {
        throw ShapeError("layer " + std::to_string(index) + " (" + layer_name(spec) + ") expects " +
                         std::to_string(expected) + " channels, got " + std::to_string(shape[2]));
    }
}

} // namespace

std::string layer_name(const LayerSpec& spec) {
    return std::visit(overloaded{[](const Dense& d) { return "Dense{" + std::to_string(d.in) + "," + std::to_string(d.out) + "}"; },
                                 [](const Conv2d& c) {
                                     return "Conv2d{" + std::to_string(c.in_channels) + "," +
                                            std::to_string(c.out_channels) + ",k" + std::to_string(c.kernel) + "}";
                                 },
                                 [](const Relu&) { return std::string("Relu"); },
                                 [](const SoftmaxChannels&) { return std::string("SoftmaxChannels"); }},
                      spec);
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : params) n += t.size();
    return n;
}

std::size_t Network::input_channels() const {
    for (const auto& spec : layers) {
        if (auto d = std::get_if<Dense>(&spec)) return d->in;
        if (auto c = std::get_if<Conv2d>(&spec)) return c->in_channels;
    }
    return 0;
}

std::size_t Network::output_channels() const {
    std::size_t c = input_channels();
    for (const auto& spec : layers) c = channels_out(spec, c);
    return c;
}

Network network_init(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
    if (specs.empty()) throw ShapeError("network_init: no layers");
    Network net;
    net.layers = specs;
    net.seed = seed;
    std::size_t channels = 0;
    bool have_channels = false;
    for (std::size_t li = 0; li < specs.size(); ++li) {
        const auto& spec = specs[li];
        if (std::holds_alternative<SoftmaxChannels>(spec) && li + 1 != specs.size()) {
            throw ShapeError("network_init: SoftmaxChannels must be the final layer");
        }
        std::size_t in = 0, fan_in = 0;
        Shape wshape;
        std::size_t out = 0;
        if (auto d = std::get_if<Dense>(&spec)) {
            if (d->in == 0 || d->out == 0) throw ShapeError("network_init: Dense with zero width");
            in = d->in;
            out = d->out;
            fan_in = d->in;
            wshape = {d->out, d->in};
        } else if (auto c = std::get_if<Conv2d>(&spec)) {
            if (c->kernel % 2 == 0) throw ShapeError("network_init: Conv2d kernel must be odd");
            if (c->in_channels == 0 || c->out_channels == 0) throw ShapeError("network_init: Conv2d with zero channels");
            in = c->in_channels;
            out = c->out_channels;
            fan_in = c->kernel * c->kernel * c->in_channels;
            wshape = {c->out_channels, c->kernel, c->kernel, c->in_channels};
        } else {
            net.param_offset.push_back(npos);
            continue;
        }
        if (have_channels && in != channels) {
            throw ShapeError("network_init: layer " + std::to_string(li) + " (" + layer_name(spec) + ") expects " +
                             std::to_string(in) + " channels but receives " + std::to_string(channels));
        }
        Rng rng = Rng::stream(seed, li);
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        std::vector<double> w(shape_size(wshape));
        for (auto& v : w) v = rng.normal(0.0, stddev);
        net.param_offset.push_back(net.params.size());
        net.params.emplace_back(wshape, std::move(w));
        net.params.emplace_back(Shape{out}, 0.0);
        channels = out;
        have_channels = true;
    }
    if (!have_channels) throw ShapeError("network_init: no parameterized layer");
    return net;
}

ForwardCache forward(const Network& net, const Tensor& input) {
    ForwardCache cache;
    cache.inputs.reserve(net.layers.size());
    Tensor current = input;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const auto& spec = net.layers[li];
        check_layer_input(spec, current.shape(), li);
        Tensor out(output_shape(spec, current.shape()), 0.0);
        const std::size_t off = net.param_offset[li];
        std::visit(overloaded{[&](const Dense&) { dense_forward(current, net.params[off], net.params[off + 1], out); },
                              [&](const Conv2d&) { conv_forward(current, net.params[off], net.params[off + 1], out); },
                              [&](const Relu&) {
                                  for (std::size_t i = 0; i < out.size(); ++i) out[i] = current[i] > 0.0 ? current[i] : 0.0;
                              },
                              [&](const SoftmaxChannels&) { softmax_forward(current, out); }},
                   spec);
        cache.inputs.push_back(std::move(current));
        current = std::move(out);
    }
    cache.output = std::move(current);
    return cache;
}

BackwardResult backward(const Network& net, const ForwardCache& cache, const Tensor& grad_output) {
    if (cache.inputs.size() != net.layers.size()) throw StateError("backward: cache does not match network depth");
    if (grad_output.shape() != cache.output.shape()) throw StateError("backward: grad_output shape differs from output");

    BackwardResult result;
    result.param_grads.reserve(net.params.size());
    for (const auto& p : net.params) result.param_grads.emplace_back(p.shape(), 0.0);

    Tensor grad = grad_output;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const auto& spec = net.layers[li];
        const Tensor& in = cache.inputs[li];
        const Tensor& out = li + 1 < net.layers.size() ? cache.inputs[li + 1] : cache.output;
        if (out.shape() != output_shape(spec, in.shape())) throw StateError("backward: cache shapes do not match network");
        Tensor gin(in.shape(), 0.0);
        const std::size_t off = net.param_offset[li];
        std::visit(overloaded{[&](const Dense&) {
                                  dense_backward(in, net.params[off], grad, result.param_grads[off],
                                                 result.param_grads[off + 1], gin);
                              },
                              [&](const Conv2d&) {
                                  conv_backward(in, net.params[off], grad, result.param_grads[off],
                                                result.param_grads[off + 1], gin);
                              },
                              [&](const Relu&) {
                                  for (std::size_t i = 0; i < gin.size(); ++i) gin[i] = in[i] > 0.0 ? grad[i] : 0.0;
                              },
                              [&](const SoftmaxChannels&) { softmax_backward(out, grad, gin); }},
                   spec);
        grad = std::move(gin);
    }
    result.grad_input = std::move(grad);
    return result;
}

std::string to_string(LossKind kind) {
    switch (kind) {
    case LossKind::cas: return "cas";
    case LossKind::ce: return "ce";
    case LossKind::cace: return "cace";
    }
    return "?";
}

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "cas") return LossKind::cas;
    if (name == "ce") return LossKind::ce;
    if (name == "cace") return LossKind::cace;
    throw ConfigError("unknown loss kind '" + name + "'");
}

LossWithGradient evaluate_loss(LossKind kind, double alpha, const DescriptorField& output,
                               const RegionPartition& target) {
    switch (kind) {
    case LossKind::cas: {
        const CasConfig cfg(alpha);
        return LossWithGradient{cas_forward(output, target, cfg).total, cas_backward(output, target, cfg)};
    }
    case LossKind::ce: return ce_loss(output, target);
    case LossKind::cace: {
        auto r = cace_loss(output, target);
        return LossWithGradient{r.loss, std::move(r.gradient)};
    }
    }
    throw ConfigError("evaluate_loss: unknown loss kind");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (adam && !(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
        throw ConfigError("invalid Adam parameters");
    }
}

OptimizerState make_optimizer_state(const Network& net) {
    OptimizerState s;
    for (const auto& p : net.params) {
        s.first.emplace_back(p.shape(), 0.0);
        s.second.emplace_back(p.shape(), 0.0);
    }
    return s;
}

void optimizer_step(Network& net, const std::vector<Tensor>& grads, const TrainConfig& cfg, OptimizerState& state) {
    if (grads.size() != net.params.size()) throw ShapeError("optimizer_step: gradient count differs from parameters");
    if (state.first.size() != net.params.size()) state = make_optimizer_state(net);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].shape() != net.params[i].shape()) throw ShapeError("optimizer_step: gradient shape mismatch");
    }
    ++state.step;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        auto w = net.params[i].data();
        auto g = grads[i].data();
        auto m1 = state.first[i].data();
        if (!cfg.adam) {
            for (std::size_t j = 0; j < w.size(); ++j) {
                m1[j] = cfg.momentum * m1[j] + g[j];
                w[j] -= cfg.learning_rate * m1[j];
            }
            continue;
        }
        auto m2 = state.second[i].data();
        const double t = static_cast<double>(state.step);
        const double c1 = 1.0 - std::pow(cfg.beta1, t);
        const double c2 = 1.0 - std::pow(cfg.beta2, t);
        for (std::size_t j = 0; j < w.size(); ++j) {
            m1[j] = cfg.beta1 * m1[j] + (1.0 - cfg.beta1) * g[j];
            m2[j] = cfg.beta2 * m2[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            w[j] -= cfg.learning_rate * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + cfg.epsilon);
        }
    }
}

ObjectiveResult objective_and_gradient(const Network& net, LossKind kind, double alpha,
                                       const std::vector<const Example*>& batch) {
    if (batch.empty()) throw DataError("objective_and_gradient: empty batch");
    ObjectiveResult result;
    for (const auto& p : net.params) result.param_grads.emplace_back(p.shape(), 0.0);
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const Example* ex : batch) {
        auto cache = forward(net, ex->input);
        const DescriptorField out(cache.output);
        auto lg = evaluate_loss(kind, alpha, out, ex->target);
        result.loss += lg.loss * scale;
        auto& g = lg.gradient.tensor();
        for (auto& v : g.data()) v *= scale;
        auto br = backward(net, cache, g);
        for (std::size_t i = 0; i < result.param_grads.size(); ++i) {
            auto dst = result.param_grads[i].data();
            auto src = br.param_grads[i].data();
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
    }
    return result;
}

double objective(const Network& net, LossKind kind, double alpha, const std::vector<const Example*>& batch) {
    if (batch.empty()) throw DataError("objective: empty batch");
    double loss = 0.0;
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const Example* ex : batch) {
        const DescriptorField out(forward(net, ex->input).output);
        loss += evaluate_loss(kind, alpha, out, ex->target).loss * scale;
    }
    return loss;
}

double gradcheck(const Network& net, LossKind kind, double alpha, const std::vector<const Example*>& batch, double h,
                 const GradientHook& hook) {
    if (net.params.empty()) return 0.0;
    auto analytic = objective_and_gradient(net, kind, alpha, batch);
    if (!std::isfinite(analytic.loss)) throw NumericError("gradcheck: non-finite loss");
    if (hook) hook(analytic.param_grads);

    Network probe = net;
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.params.size(); ++i) {
        for (std::size_t j = 0; j < probe.params[i].size(); ++j) {
            const double orig = probe.params[i][j];
            probe.params[i][j] = orig + h;
            const double up = objective(probe, kind, alpha, batch);
            probe.params[i][j] = orig - h;
            const double down = objective(probe, kind, alpha, batch);
            probe.params[i][j] = orig;
            if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("gradcheck: non-finite loss");
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic.param_grads[i][j];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

} // namespace casseg
