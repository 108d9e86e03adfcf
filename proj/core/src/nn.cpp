#include "quail/nn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "quail/error.hpp"
#include "quail/rng.hpp"

namespace quail::nn {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::elu: return "elu";
        case Activation::gelu: return "gelu";
    }
    return "?";
}

Activation parse_activation(const std::string& text) {
    if (text == "relu") return Activation::relu;
    if (text == "elu") return Activation::elu;
    if (text == "gelu") return Activation::gelu;
    throw ContractError("unknown activation '" + text + "'");
}

std::size_t MlpModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

MlpModel make_mlp(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t output_dim,
                  Activation activation, double dropout_rate, std::uint64_t seed) {
    if (input_dim == 0 || output_dim == 0) throw ContractError("make_mlp: zero-width input or output");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ContractError("make_mlp: dropout must be in [0, 1)");
    MlpModel m;
    m.activation = activation;
    m.dropout_rate = dropout_rate;
    Rng rng(derive_seed(seed, {tag("init")}));
    std::size_t fan_in = input_dim;
    auto add = [&](std::size_t fan_out) {
        if (fan_out == 0) throw ContractError("make_mlp: zero-width hidden layer");
        Dense d{Matrix(fan_out, fan_in), std::vector<double>(fan_out, 0.0)};
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& w : d.weight.values()) w = rng.uniform(-limit, limit);
        m.layers.push_back(std::move(d));
        fan_in = fan_out;
    };
    for (auto h : hidden) add(h);
    add(output_dim);
    return m;
}

namespace {

constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

// out = in * W^T + b
Matrix affine(const Matrix& in, const Dense& layer) {
    const auto n_out = layer.weight.rows();
    const auto n_in = layer.weight.cols();
    Matrix out(in.rows(), n_out);
    for (std::size_t i = 0; i < in.rows(); ++i) {
        const auto x = in.row(i);
        for (std::size_t o = 0; o < n_out; ++o) {
            const auto w = layer.weight.row(o);
            double s = layer.bias[o];
            for (std::size_t k = 0; k < n_in; ++k) s += x[k] * w[k];
            out(i, o) = s;
        }
    }
    return out;
}

}  // namespace

double activate(Activation a, double z) noexcept {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::elu: return z > 0.0 ? z : std::expm1(z);
        case Activation::gelu: return 0.5 * z * (1.0 + std::tanh(kSqrt2OverPi * (z + kGeluC * z * z * z)));
    }
    return z;
}

double activate_derivative(Activation a, double z) noexcept {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::elu: return z > 0.0 ? 1.0 : std::exp(z);
        case Activation::gelu: {
            const double t = std::tanh(kSqrt2OverPi * (z + kGeluC * z * z * z));
            return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * kSqrt2OverPi * (1.0 + 3.0 * kGeluC * z * z);
        }
    }
    return 1.0;
}

ForwardResult forward(const MlpModel& model, const Matrix& x, bool train_mode, std::uint64_t dropout_seed) {
    if (model.layers.empty()) throw ContractError("forward: model has no layers");
    if (x.cols() != model.input_dim())
        throw ShapeError("forward: input width " + std::to_string(x.cols()) + " != model input " +
                         std::to_string(model.input_dim()));
    ForwardResult res;
    auto& cache = res.cache;
    const bool dropout = train_mode && model.dropout_rate > 0.0;
    Rng rng(dropout_seed);
    const double keep_scale = dropout ? 1.0 / (1.0 - model.dropout_rate) : 1.0;

    Matrix current = x;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        Matrix z = affine(current, model.layers[l]);
        cache.inputs.push_back(std::move(current));
        if (l + 1 == model.layers.size()) {
            res.output = std::move(z);
            break;
        }
        Matrix h(z.rows(), z.cols());
        for (std::size_t i = 0; i < z.size(); ++i) h.values()[i] = activate(model.activation, z.values()[i]);
        if (dropout) {
            Matrix scale(z.rows(), z.cols());
            for (std::size_t i = 0; i < scale.size(); ++i) {
                scale.values()[i] = rng.bernoulli(model.dropout_rate) ? 0.0 : keep_scale;
                h.values()[i] *= scale.values()[i];
            }
            cache.dropout_scale.push_back(std::move(scale));
        }
        cache.pre.push_back(std::move(z));
        current = std::move(h);
    }
    return res;
}

Matrix predict(const MlpModel& model, const Matrix& x) { return forward(model, x, false, 0).output; }

namespace {

void check_targets(const Matrix& pred, std::span<const double> y, LossKind kind) {
    if (pred.rows() != y.size()) throw ShapeError("loss: batch size mismatch");
    if (pred.rows() == 0) throw ContractError("loss: empty batch");
    if (kind == LossKind::mse && pred.cols() != 1) throw ShapeError("mse loss expects one output");
    if (kind == LossKind::cross_entropy)
        for (double t : y)
            if (!(t >= 0.0 && t < static_cast<double>(pred.cols())) || t != std::floor(t))
                throw ContractError("cross-entropy: class index out of range");
}

double log_sum_exp(std::span<const double> z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

}  // namespace

double task_loss(const Matrix& pred, std::span<const double> y, LossKind kind) {
    check_targets(pred, y, kind);
    double total = 0.0;
    for (std::size_t i = 0; i < pred.rows(); ++i) {
        if (kind == LossKind::mse) {
            const double r = pred(i, 0) - y[i];
            total += r * r;
        } else {
            const auto z = pred.row(i);
            total += log_sum_exp(z) - z[static_cast<std::size_t>(y[i])];
        }
    }
    return total / static_cast<double>(pred.rows());
}

Matrix loss_gradient(const Matrix& pred, std::span<const double> y, LossKind kind) {
    check_targets(pred, y, kind);
    const double inv_n = 1.0 / static_cast<double>(pred.rows());
    Matrix g(pred.rows(), pred.cols());
    for (std::size_t i = 0; i < pred.rows(); ++i) {
        if (kind == LossKind::mse) {
            g(i, 0) = 2.0 * (pred(i, 0) - y[i]) * inv_n;
        } else {
            const auto z = pred.row(i);
            const double lse = log_sum_exp(z);
            for (std::size_t c = 0; c < z.size(); ++c) g(i, c) = std::exp(z[c] - lse) * inv_n;
            g(i, static_cast<std::size_t>(y[i])) -= inv_n;
        }
    }
    return g;
}

ParamGrads backward_from(const MlpModel& model, const ForwardCache& cache, const Matrix& d_output) {
    const auto n_layers = model.layers.size();
    const bool shapes_ok = cache.inputs.size() == n_layers && cache.pre.size() + 1 == n_layers &&
                           (cache.dropout_scale.empty() || cache.dropout_scale.size() + 1 == n_layers);
    if (!shapes_ok) throw ContractError("backward: stale cache (layer count mismatch)");
    for (std::size_t l = 0; l < n_layers; ++l)
        if (cache.inputs[l].cols() != model.layers[l].weight.cols() || cache.inputs[l].rows() != d_output.rows())
            throw ContractError("backward: stale cache (shape mismatch at layer " + std::to_string(l) + ")");
    if (d_output.cols() != model.output_dim()) throw ShapeError("backward: output gradient width mismatch");

    ParamGrads grads;
    grads.layers.resize(n_layers);
    Matrix delta = d_output;  // d loss / d z_l
    for (std::size_t li = n_layers; li-- > 0;) {
        const auto& layer = model.layers[li];
        const auto& in = cache.inputs[li];
        auto& g = grads.layers[li];
        g.weight = Matrix(layer.weight.rows(), layer.weight.cols());
        g.bias.assign(layer.bias.size(), 0.0);
        Matrix d_in(in.rows(), in.cols());
        for (std::size_t i = 0; i < in.rows(); ++i) {
            const auto x = in.row(i);
            auto dx = d_in.row(i);
            for (std::size_t o = 0; o < layer.weight.rows(); ++o) {
                const double d = delta(i, o);
                if (d == 0.0) continue;
                g.bias[o] += d;
                auto gw = g.weight.row(o);
                const auto w = layer.weight.row(o);
                for (std::size_t k = 0; k < x.size(); ++k) {
                    gw[k] += d * x[k];
                    dx[k] += d * w[k];
                }
            }
        }
        if (li == 0) {
            grads.input = std::move(d_in);
            break;
        }
        // Through the previous hidden layer's dropout and activation.
        const auto& z = cache.pre[li - 1];
        for (std::size_t i = 0; i < d_in.size(); ++i) {
            double v = d_in.values()[i];
            if (!cache.dropout_scale.empty()) v *= cache.dropout_scale[li - 1].values()[i];
            d_in.values()[i] = v * activate_derivative(model.activation, z.values()[i]);
        }
        delta = std::move(d_in);
    }
    return grads;
}

ParamGrads backward(const MlpModel& model, const ForwardCache& cache, std::span<const double> y, LossKind kind) {
    if (cache.inputs.empty()) throw ContractError("backward: empty cache");
    // Recompute the output from the cached last-layer input.
    Matrix out = affine(cache.inputs.back(), model.layers.back());
    return backward_from(model, cache, loss_gradient(out, y, kind));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kMagic = "quail-checkpoint";
constexpr int kVersion = 1;

void write_values(std::ostream& out, std::span<const double> values) {
    char buf[64];
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, values[i], std::chars_format::hex);
        if (i) out << ' ';
        out.write(buf, ptr - buf);
    }
    out << '\n';
}

std::vector<double> read_values(std::istream& in, std::size_t n) {
    std::vector<double> v(n);
    std::string tok;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(in >> tok)) throw ParseError("checkpoint: truncated value list");
        const char* first = tok.data();
        const char* last = tok.data() + tok.size();
        bool neg = false;
        if (*first == '-') {
            neg = true;
            ++first;
        }
        auto [ptr, ec] = std::from_chars(first, last, v[i], std::chars_format::hex);
        if (ec != std::errc{} || ptr != last) throw ParseError("checkpoint: bad value '" + tok + "'");
        if (neg) v[i] = -v[i];
    }
    return v;
}

void expect(std::istream& in, const std::string& word) {
    std::string tok;
    if (!(in >> tok) || tok != word) throw ParseError("checkpoint: expected '" + word + "', got '" + tok + "'");
}

std::size_t read_count(std::istream& in) {
    long long n = -1;
    if (!(in >> n) || n < 0) throw ParseError("checkpoint: bad count");
    return static_cast<std::size_t>(n);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
    const auto& m = ckpt.model;
    out << kMagic << ' ' << kVersion << '\n';
    out << "activation " << to_string(m.activation) << '\n';
    out << "dropout ";
    write_values(out, std::span<const double>(&m.dropout_rate, 1));
    out << "layers " << m.layers.size() << '\n';
    for (const auto& l : m.layers) {
        out << "layer " << l.weight.rows() << ' ' << l.weight.cols() << '\n';
        write_values(out, l.weight.values());
        write_values(out, l.bias);
    }
    out << "gates " << ckpt.gates.size() << '\n';
    if (!ckpt.gates.empty()) {
        if (ckpt.anchor.size() != ckpt.gates.size()) throw ShapeError("checkpoint: anchor/gate size mismatch");
        write_values(out, ckpt.gates);
        write_values(out, ckpt.anchor);
    }
}

Checkpoint load_checkpoint(std::istream& in) {
    Checkpoint ckpt;
    expect(in, kMagic);
    int version = 0;
    if (!(in >> version) || version != kVersion)
        throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    expect(in, "activation");
    std::string act;
    in >> act;
    ckpt.model.activation = parse_activation(act);
    expect(in, "dropout");
    ckpt.model.dropout_rate = read_values(in, 1)[0];
    expect(in, "layers");
    const auto n_layers = read_count(in);
    for (std::size_t l = 0; l < n_layers; ++l) {
        expect(in, "layer");
        const auto rows = read_count(in);
        const auto cols = read_count(in);
        Dense d{Matrix(rows, cols), {}};
        auto w = read_values(in, rows * cols);
        std::copy(w.begin(), w.end(), d.weight.values().begin());
        d.bias = read_values(in, rows);
        if (l > 0 && ckpt.model.layers.back().weight.rows() != cols)
            throw ParseError("checkpoint: layer shapes do not compose");
        ckpt.model.layers.push_back(std::move(d));
    }
    expect(in, "gates");
    const auto n_gates = read_count(in);
    if (n_gates > 0) {
        ckpt.gates = read_values(in, n_gates);
        ckpt.anchor = read_values(in, n_gates);
    }
    return ckpt;
}

}  // namespace quail::nn
