#include "quail/gating.hpp"

#include <cmath>
#include <numbers>

#include "quail/error.hpp"
#include "quail/rng.hpp"

namespace quail::gating {

std::string to_string(Phi v) {
    switch (v) {
        case Phi::linear: return "linear";
        case Phi::quadratic: return "quadratic";
        case Phi::exponential: return "exponential";
        case Phi::inverse_exponential: return "inverse_exponential";
    }
    return "?";
}

std::string to_string(Anneal v) {
    switch (v) {
        case Anneal::constant: return "constant";
        case Anneal::linear: return "linear";
        case Anneal::cosine: return "cosine";
    }
    return "?";
}

std::string to_string(GateInit v) {
    switch (v) {
        case GateInit::quality: return "quality";
        case GateInit::random: return "random";
        case GateInit::ones: return "ones";
    }
    return "?";
}

Phi parse_phi(const std::string& text) {
    for (auto v : {Phi::linear, Phi::quadratic, Phi::exponential, Phi::inverse_exponential})
        if (to_string(v) == text) return v;
    throw ContractError("unknown weighting function '" + text + "'");
}

Anneal parse_anneal(const std::string& text) {
    for (auto v : {Anneal::constant, Anneal::linear, Anneal::cosine})
        if (to_string(v) == text) return v;
    throw ContractError("unknown annealing schedule '" + text + "'");
}

GateInit parse_gate_init(const std::string& text) {
    for (auto v : {GateInit::quality, GateInit::random, GateInit::ones})
        if (to_string(v) == text) return v;
    throw ContractError("unknown gate init '" + text + "'");
}

std::vector<double> expand_quality(std::span<const double> q, std::span<const std::size_t> feature_of_encoded) {
    std::vector<double> out;
    out.reserve(feature_of_encoded.size());
    for (auto j : feature_of_encoded) {
        if (j >= q.size()) throw ShapeError("expand_quality: encoded column maps past the quality vector");
        out.push_back(q[j]);
    }
    return out;
}

Matrix gate_forward(std::span<const double> g, const Matrix& x) {
    if (g.size() != x.cols()) throw ShapeError("gate_forward: gate width does not match input width");
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto in = x.row(i);
        auto o = out.row(i);
        for (std::size_t j = 0; j < g.size(); ++j) o[j] = g[j] * in[j];
    }
    return out;
}

double phi(Phi kind, double z) {
    switch (kind) {
        case Phi::linear: return z;
        case Phi::quadratic: return z * z;
        case Phi::exponential: return std::expm1(2.0 * z);
        case Phi::inverse_exponential: return -std::expm1(-2.0 * z);
    }
    return z;
}

std::vector<double> quality_weights(std::span<const double> q_expanded, Phi kind) {
    std::vector<double> w;
    w.reserve(q_expanded.size());
    for (double q : q_expanded) {
        if (!(q >= 0.0 && q <= 1.0)) throw ContractError("quality_weights: quality score outside [0, 1]");
        w.push_back(phi(kind, 1.0 - q));
    }
    return w;
}

namespace {

void check_lengths(std::span<const double> g, std::span<const double> anchor, std::span<const double> w) {
    if (g.size() != anchor.size() || g.size() != w.size()) throw ShapeError("gate loss: length mismatch");
    if (g.empty()) throw ShapeError("gate loss: empty gate vector");
}

}  // namespace

double gate_loss(std::span<const double> g, std::span<const double> anchor, std::span<const double> w) {
    check_lengths(g, anchor, w);
    double s = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const double d = g[j] - anchor[j];
        s += w[j] * d * d;
    }
    return s / static_cast<double>(g.size());
}

std::vector<double> gate_loss_gradient(std::span<const double> g, std::span<const double> anchor,
                                       std::span<const double> w) {
    check_lengths(g, anchor, w);
    const double inv_d = 1.0 / static_cast<double>(g.size());
    std::vector<double> out(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) out[j] = 2.0 * w[j] * (g[j] - anchor[j]) * inv_d;
    return out;
}

double lambda_at(double lambda0, Anneal anneal, double t, double total) {
    if (total < 1.0) throw ContractError("lambda_at: total epochs must be >= 1");
    const double frac = std::clamp(t / total, 0.0, 1.0);
    switch (anneal) {
        case Anneal::constant: return lambda0;
        case Anneal::linear: return lambda0 * (1.0 - frac);
        case Anneal::cosine: return lambda0 * (1.0 + std::cos(std::numbers::pi * frac)) / 2.0;
    }
    return lambda0;
}

bool maybe_refresh_anchor(GateState& state, std::size_t epoch) {
    if (state.config.anchor_period < 1) throw ContractError("maybe_refresh_anchor: anchor period must be >= 1");
    if (epoch < 1) throw ContractError("maybe_refresh_anchor: epochs are counted from 1");
    if (epoch % state.config.anchor_period != 0) return false;
    state.anchor = state.g;
    return true;
}

std::pair<std::vector<double>, std::vector<double>> init_gates(GateInit init, std::span<const double> q_expanded,
                                                                std::uint64_t seed) {
    std::vector<double> g;
    switch (init) {
        case GateInit::quality:
            g.assign(q_expanded.begin(), q_expanded.end());
            break;
        case GateInit::ones:
            g.assign(q_expanded.size(), 1.0);
            break;
        case GateInit::random: {
            Rng rng(derive_seed(seed, {tag("gates")}));
            g.resize(q_expanded.size());
            for (auto& v : g) v = rng.uniform();
            break;
        }
    }
    auto anchor = g;
    return {std::move(g), std::move(anchor)};
}

GateState make_gate_state(const GateConfig& config, std::span<const double> q_expanded, std::uint64_t seed) {
    if (config.anchor_period < 1) throw ContractError("gate config: anchor period must be >= 1");
    if (!(config.lambda0 >= 0.0) || !std::isfinite(config.lambda0))
        throw ContractError("gate config: lambda0 must be finite and non-negative");
    GateState s;
    s.config = config;
    std::tie(s.g, s.anchor) = init_gates(config.init, q_expanded, seed);
    s.w = quality_weights(q_expanded, config.phi);
    return s;
}

std::vector<double> gate_gradient(const Matrix& d_gated, const Matrix& x) {
    if (d_gated.rows() != x.rows() || d_gated.cols() != x.cols()) throw ShapeError("gate_gradient: shape mismatch");
    std::vector<double> out(x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto d = d_gated.row(i);
        const auto xi = x.row(i);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += d[j] * xi[j];
    }
    return out;
}

CompositeResult composite_loss_and_grad(const nn::MlpModel& model, const GateState* gates, double lambda,
                                        const Matrix& x, std::span<const double> y, nn::LossKind kind,
                                        bool train_mode, std::uint64_t dropout_seed) {
    CompositeResult res;
    if (gates == nullptr) {
        auto fwd = nn::forward(model, x, train_mode, dropout_seed);
        res.task = nn::task_loss(fwd.output, y, kind);
        res.total = res.task;
        res.grads = nn::backward_from(model, fwd.cache, nn::loss_gradient(fwd.output, y, kind));
        return res;
    }
    const auto gated = gate_forward(gates->g, x);
    auto fwd = nn::forward(model, gated, train_mode, dropout_seed);
    res.task = nn::task_loss(fwd.output, y, kind);
    res.gate = gate_loss(gates->g, gates->anchor, gates->w);
    res.total = res.task + lambda * res.gate;
    res.grads = nn::backward_from(model, fwd.cache, nn::loss_gradient(fwd.output, y, kind));
    res.grads.gate = gate_gradient(res.grads.input, x);
    const auto reg = gate_loss_gradient(gates->g, gates->anchor, gates->w);
    for (std::size_t j = 0; j < reg.size(); ++j) res.grads.gate[j] += lambda * reg[j];
    return res;
}

double composite_loss(const nn::MlpModel& model, const GateState* gates, double lambda, const Matrix& x,
                      std::span<const double> y, nn::LossKind kind, bool train_mode, std::uint64_t dropout_seed) {
    if (gates == nullptr) return nn::task_loss(nn::forward(model, x, train_mode, dropout_seed).output, y, kind);
    const auto out = nn::forward(model, gate_forward(gates->g, x), train_mode, dropout_seed).output;
    return nn::task_loss(out, y, kind) + lambda * gate_loss(gates->g, gates->anchor, gates->w);
}

}  // namespace quail::gating
