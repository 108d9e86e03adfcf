#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "quail/matrix.hpp"

namespace quail::nn {

enum class Activation { relu, elu, gelu };
enum class LossKind { cross_entropy, mse };

std::string to_string(Activation a);
Activation parse_activation(const std::string& text);

// Fully connected layer; weight is (out x in).
struct Dense {
    Matrix weight;
    std::vector<double> bias;

    friend bool operator==(const Dense&, const Dense&) = default;
};

// A stack of Dense layers with a shared hidden activation. Zero hidden
// layers gives a plain affine (linear / logistic) model.
struct MlpModel {
    std::vector<Dense> layers;
    Activation activation = Activation::relu;
    double dropout_rate = 0.0;

    std::size_t input_dim() const { return layers.front().weight.cols(); }
    std::size_t output_dim() const { return layers.back().weight.rows(); }
    std::size_t n_hidden() const { return layers.size() - 1; }
    std::size_t parameter_count() const;

    friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
MlpModel make_mlp(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t output_dim,
                  Activation activation, double dropout_rate, std::uint64_t seed);

double activate(Activation a, double z) noexcept;
double activate_derivative(Activation a, double z) noexcept;

struct ForwardCache {
    std::vector<Matrix> inputs;        // input of each layer
    std::vector<Matrix> pre;           // pre-activation of each hidden layer
    std::vector<Matrix> dropout_scale; // per hidden layer; empty when dropout is off
};

struct ForwardResult {
    Matrix output;  // logits or regression outputs, (batch x output_dim)
    ForwardCache cache;
};

// Dropout (inverted scaling) only in train mode; the mask is a function of
// dropout_seed alone, so equal seeds give equal masks.
ForwardResult forward(const MlpModel& model, const Matrix& x, bool train_mode, std::uint64_t dropout_seed);

// Evaluation-mode forward pass.
Matrix predict(const MlpModel& model, const Matrix& x);

// Mean loss over the batch. Cross-entropy takes logits and class indices.
double task_loss(const Matrix& pred, std::span<const double> y, LossKind kind);

// d(mean loss)/d(pred).
Matrix loss_gradient(const Matrix& pred, std::span<const double> y, LossKind kind);

struct ParamGrads {
    std::vector<Dense> layers;
    Matrix input;              // d loss / d (gated) input
    std::vector<double> gate;  // filled by the gating layer, empty otherwise
};

ParamGrads backward(const MlpModel& model, const ForwardCache& cache, std::span<const double> y, LossKind kind);

// Backward from an arbitrary output gradient.
ParamGrads backward_from(const MlpModel& model, const ForwardCache& cache, const Matrix& d_output);

// Text checkpoint (see docs/formats.md). Values are hex floats so the
// round trip is exact.
struct Checkpoint {
    MlpModel model;
    std::vector<double> gates;   // empty for ungated models
    std::vector<double> anchor;  // empty for ungated models

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint load_checkpoint(std::istream& in);

}  // namespace quail::nn
