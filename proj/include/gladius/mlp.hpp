#pragma once

#include "gladius/errors.hpp"
#include "gladius/rng.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gladius {

enum class Activation { ELU, Tanh };

inline const char* to_string(Activation a) { return a == Activation::ELU ? "elu" : "tanh"; }

inline Activation activation_from_string(const std::string& name) {
    if (name == "elu") return Activation::ELU;
    if (name == "tanh") return Activation::Tanh;
    throw InvalidArgument("unknown activation '" + name + "'");
}

/// Fully connected network: linear output layer, smooth activation on every hidden layer.
struct MlpSpec {
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden_layers{10, 10};
    std::size_t output_dim = 1;
    Activation activation = Activation::ELU;

    void validate() const {
        if (input_dim == 0 || output_dim == 0) throw InvalidArgument("MlpSpec: dimensions must be >= 1");
        for (auto w : hidden_layers)
            if (w == 0) throw InvalidArgument("MlpSpec: hidden widths must be >= 1");
    }

    /// [input, hidden..., output]
    std::vector<std::size_t> widths() const {
        std::vector<std::size_t> w{input_dim};
        w.insert(w.end(), hidden_layers.begin(), hidden_layers.end());
        w.push_back(output_dim);
        return w;
    }

    std::size_t n_layers() const noexcept { return hidden_layers.size() + 1; }

    std::size_t param_count() const {
        const auto w = widths();
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < w.size(); ++l) n += w[l + 1] * w[l] + w[l + 1];
        return n;
    }

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Flat parameters laid out layer by layer: weights (row-major, out x in) then biases.
/// `widths` is the shape manifest.
struct ParamVector {
    std::vector<std::size_t> widths;
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }

    friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

inline ParamVector zero_params(const MlpSpec& spec) {
    spec.validate();
    return {spec.widths(), std::vector<double>(spec.param_count(), 0.0)};
}

inline void check_params(const MlpSpec& spec, const ParamVector& params) {
    if (params.widths != spec.widths() || params.values.size() != spec.param_count())
        throw InvalidArgument("parameter vector does not match the network spec");
}

/// Weights ~ N(0, 1/fan_in), biases zero.
inline ParamVector init_params(const MlpSpec& spec, std::uint64_t seed) {
    ParamVector p = zero_params(spec);
    Engine gen(derive_seed(seed, 0));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < p.widths.size(); ++l) {
        const auto fan_in = p.widths[l];
        const auto fan_out = p.widths[l + 1];
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < fan_in * fan_out; ++i) p.values[offset + i] = scale * normal(gen);
        offset += fan_in * fan_out + fan_out;
    }
    return p;
}

namespace detail {

inline double activate(Activation a, double x) {
    if (a == Activation::ELU) return x > 0.0 ? x : std::expm1(x);
    return std::tanh(x);
}

/// Derivative expressed through the pre-activation x and output y.
inline double activate_grad(Activation a, double x, double y) {
    if (a == Activation::ELU) return x > 0.0 ? 1.0 : y + 1.0;
    return 1.0 - y * y;
}

}  // namespace detail

/// Intermediate values of one forward pass, reused across calls to avoid allocation.
struct MlpTape {
    std::vector<std::vector<double>> pre;   // pre-activation per layer
    std::vector<std::vector<double>> post;  // post[0] = input, post[l+1] = layer l output
    std::vector<double> delta;
    std::vector<double> delta_next;

    std::span<const double> output() const { return post.back(); }
};

/// Forward pass recording intermediates into `tape`; returns the output view.
inline std::span<const double> forward(const MlpSpec& spec, const ParamVector& params,
                                       std::span<const double> input, MlpTape& tape) {
    const auto& w = params.widths;
    if (input.size() != spec.input_dim)
        throw InvalidArgument("forward: input length " + std::to_string(input.size()) + ", expected " +
                              std::to_string(spec.input_dim));
    const std::size_t layers = w.size() - 1;
    tape.pre.resize(layers);
    tape.post.resize(layers + 1);
    tape.post[0].assign(input.begin(), input.end());
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = w[l], out = w[l + 1];
        const double* weight = params.values.data() + offset;
        const double* bias = weight + in * out;
        const auto& x = tape.post[l];
        auto& z = tape.pre[l];
        auto& y = tape.post[l + 1];
        z.resize(out);
        y.resize(out);
        for (std::size_t o = 0; o < out; ++o) {
            double acc = bias[o];
            const double* row = weight + o * in;
            for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
            z[o] = acc;
            y[o] = (l + 1 < layers) ? detail::activate(spec.activation, acc) : acc;
        }
        offset += in * out + out;
    }
    return tape.post.back();
}

inline std::vector<double> forward(const MlpSpec& spec, const ParamVector& params, std::span<const double> input) {
    check_params(spec, params);
    MlpTape tape;
    const auto out = forward(spec, params, input, tape);
    return {out.begin(), out.end()};
}

/// Adds d<cotangent, f(input)>/d params into `grad` (same layout as params) using the tape
/// of the most recent forward pass. When `grad_input` is non-empty the input gradient is
/// added there too.
inline void accumulate_backward(const MlpSpec& spec, const ParamVector& params, MlpTape& tape,
                                std::span<const double> cotangent, std::span<double> grad,
                                std::span<double> grad_input = {}) {
    const auto& w = params.widths;
    const std::size_t layers = w.size() - 1;
    if (cotangent.size() != spec.output_dim)
        throw InvalidArgument("backward: cotangent length does not match output_dim");
    if (grad.size() != params.values.size()) throw InvalidArgument("backward: gradient buffer size mismatch");

    std::size_t offset = params.values.size();
    tape.delta.assign(cotangent.begin(), cotangent.end());
    for (std::size_t l = layers; l-- > 0;) {
        const std::size_t in = w[l], out = w[l + 1];
        offset -= in * out + out;
        auto& delta = tape.delta;
        if (l + 1 < layers) {
            const auto& z = tape.pre[l];
            const auto& y = tape.post[l + 1];
            for (std::size_t o = 0; o < out; ++o) delta[o] *= detail::activate_grad(spec.activation, z[o], y[o]);
        }
        const double* weight = params.values.data() + offset;
        double* gw = grad.data() + offset;
        double* gb = gw + in * out;
        const auto& x = tape.post[l];
        for (std::size_t o = 0; o < out; ++o) {
            const double d = delta[o];
            if (d == 0.0) continue;
            gb[o] += d;
            double* row = gw + o * in;
            for (std::size_t i = 0; i < in; ++i) row[i] += d * x[i];
        }
        if (l > 0 || !grad_input.empty()) {
            auto& prev = tape.delta_next;
            prev.assign(in, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                const double d = delta[o];
                if (d == 0.0) continue;
                const double* row = weight + o * in;
                for (std::size_t i = 0; i < in; ++i) prev[i] += d * row[i];
            }
            if (l == 0) {
                for (std::size_t i = 0; i < in; ++i) grad_input[i] += prev[i];
            }
            std::swap(tape.delta, tape.delta_next);
        }
    }
}

struct MlpGradients {
    ParamVector params;
    std::vector<double> input;
};

/// Gradient of <cotangent, forward(input)> with respect to parameters and input.
inline MlpGradients backward(const MlpSpec& spec, const ParamVector& params, std::span<const double> input,
                             std::span<const double> cotangent) {
    check_params(spec, params);
    MlpTape tape;
    forward(spec, params, input, tape);
    MlpGradients g{zero_params(spec), std::vector<double>(spec.input_dim, 0.0)};
    accumulate_backward(spec, params, tape, cotangent, g.params.values, g.input);
    return g;
}

/// c1 / (c2 + t)
inline double decayed_step_size(double t, double c1, double c2) {
    if (!(c1 > 0.0) || !(c2 + t > 0.0)) throw InvalidArgument("decayed_step_size: schedule must be positive");
    return c1 / (c2 + t);
}

/// params - step_size * gradient; a non-finite gradient is reported as divergence.
inline ParamVector sgd_step(const ParamVector& params, std::span<const double> gradient, double step_size,
                            std::size_t iteration = 0) {
    if (!(step_size > 0.0)) throw InvalidArgument("sgd_step: step size must be positive");
    if (gradient.size() != params.values.size()) throw InvalidArgument("sgd_step: gradient size mismatch");
    ParamVector out = params;
    for (std::size_t i = 0; i < gradient.size(); ++i) {
        if (!std::isfinite(gradient[i])) throw DivergenceError("non-finite gradient", iteration);
        out.values[i] -= step_size * gradient[i];
    }
    return out;
}

}  // namespace gladius
