#include "quail/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <sstream>

#include "quail/gating.hpp"
#include "quail/nn.hpp"
#include "quail/rng.hpp"

namespace quail::gradcheck {

namespace {

struct Problem {
    nn::MlpModel model;
    gating::GateState gates;
    double lambda = 0.0;
    Matrix x;
    std::vector<double> y;
    nn::LossKind kind = nn::LossKind::mse;
    std::uint64_t dropout_seed = 0;
    std::string description;
};

Problem draw_problem(std::uint64_t seed) {
    Rng rng(seed);
    Problem p;
    const std::size_t d = 1 + rng.below(6);
    const std::size_t n = 1 + rng.below(16);
    const std::size_t depth = rng.below(4);
    std::vector<std::size_t> hidden;
    for (std::size_t i = 0; i < depth; ++i) hidden.push_back(1 + rng.below(8));
    const auto act = std::array{nn::Activation::relu, nn::Activation::elu, nn::Activation::gelu}[rng.below(3)];
    const bool classify = rng.bernoulli(0.5);
    const std::size_t classes = classify ? 2 + rng.below(3) : 1;
    const double dropout = rng.bernoulli(0.5) ? 0.3 : 0.0;
    p.model = nn::make_mlp(d, hidden, classes, act, dropout, rng.next());
    // Non-zero biases so that every parameter carries gradient signal.
    for (auto& layer : p.model.layers)
        for (auto& b : layer.bias) b = rng.normal(0.0, 0.5);
    p.kind = classify ? nn::LossKind::cross_entropy : nn::LossKind::mse;

    p.x = Matrix(n, d);
    for (auto& v : p.x.values()) v = rng.normal();
    for (std::size_t i = 0; i < n; ++i) p.y.push_back(classify ? static_cast<double>(rng.below(classes)) : rng.normal());

    const auto phi = std::array{gating::Phi::linear, gating::Phi::quadratic, gating::Phi::exponential,
                                gating::Phi::inverse_exponential}[rng.below(4)];
    std::vector<double> q(d);
    for (auto& v : q) v = rng.uniform();
    p.gates.config.phi = phi;
    p.gates.w = gating::quality_weights(q, phi);
    p.gates.g.resize(d);
    p.gates.anchor.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        p.gates.g[j] = rng.uniform(0.2, 1.5);
        p.gates.anchor[j] = p.gates.g[j] + rng.normal(0.0, 0.3);
    }
    p.lambda = std::exp(rng.uniform(std::log(1e-3), std::log(1.0)));
    p.dropout_seed = rng.next();

    std::ostringstream desc;
    desc << "d=" << d << " n=" << n << " hidden=[";
    for (std::size_t i = 0; i < hidden.size(); ++i) desc << (i ? "," : "") << hidden[i];
    desc << "] act=" << nn::to_string(act) << " loss=" << (classify ? "ce" : "mse") << " dropout=" << dropout
         << " phi=" << gating::to_string(phi) << " lambda=" << p.lambda;
    p.description = desc.str();
    return p;
}

}  // namespace

Report run(const Options& options) {
    Report report;
    for (std::size_t c = 0; c < options.n_configs; ++c) {
        auto p = draw_problem(derive_seed(options.seed, {tag("gradcheck"), c}));
        const auto analytic = gating::composite_loss_and_grad(p.model, &p.gates, p.lambda, p.x, p.y, p.kind, true,
                                                              p.dropout_seed);
        auto loss = [&] {
            return gating::composite_loss(p.model, &p.gates, p.lambda, p.x, p.y, p.kind, true, p.dropout_seed);
        };
        CaseReport cr;
        cr.description = p.description;
        auto check = [&](double& param, double grad) {
            const double saved = param;
            param = saved + options.h;
            const double up = loss();
            param = saved - options.h;
            const double down = loss();
            param = saved;
            const double numeric = (up - down) / (2.0 * options.h);
            const double abs_err = std::abs(numeric - grad);
            const double scale = std::max(std::abs(numeric), std::abs(grad));
            ++cr.coordinates;
            cr.max_abs_error = std::max(cr.max_abs_error, abs_err);
            const double rel = scale > 0.0 ? abs_err / scale : 0.0;
            if (scale > options.abs_floor) cr.max_rel_error = std::max(cr.max_rel_error, rel);
            if (abs_err > options.abs_floor && rel > options.rel_tol) ++cr.failures;
        };
        for (std::size_t l = 0; l < p.model.layers.size(); ++l) {
            auto w = p.model.layers[l].weight.values();
            const auto gw = analytic.grads.layers[l].weight.values();
            for (std::size_t i = 0; i < w.size(); ++i) check(w[i], gw[i]);
            auto& b = p.model.layers[l].bias;
            for (std::size_t i = 0; i < b.size(); ++i) check(b[i], analytic.grads.layers[l].bias[i]);
        }
        for (std::size_t j = 0; j < p.gates.g.size(); ++j) check(p.gates.g[j], analytic.grads.gate[j]);

        report.coordinates += cr.coordinates;
        report.failures += cr.failures;
        report.max_rel_error = std::max(report.max_rel_error, cr.max_rel_error);
        report.cases.push_back(std::move(cr));
    }
    return report;
}

}  // namespace quail::gradcheck
