#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "quail/matrix.hpp"
#include "quail/nn.hpp"

namespace quail::gating {

// Monotone map from unreliability z = 1 - q to a penalty weight; phi(0) = 0.
enum class Phi { linear, quadratic, exponential, inverse_exponential };
enum class Anneal { constant, linear, cosine };
enum class GateInit { quality, random, ones };

std::string to_string(Phi v);
std::string to_string(Anneal v);
std::string to_string(GateInit v);
Phi parse_phi(const std::string& text);
Anneal parse_anneal(const std::string& text);
GateInit parse_gate_init(const std::string& text);

struct GateConfig {
    GateInit init = GateInit::quality;
    double lambda0 = 1e-2;
    Phi phi = Phi::linear;
    Anneal anneal = Anneal::constant;
    std::size_t anchor_period = 1;  // epochs between anchor refreshes

    friend bool operator==(const GateConfig&, const GateConfig&) = default;
};

// Learnable per-encoded-column gates with their proximal anchor.
struct GateState {
    std::vector<double> g;
    std::vector<double> anchor;
    std::vector<double> w;  // quality weights phi(1 - q)
    GateConfig config;

    std::size_t width() const noexcept { return g.size(); }
};

// Broadcast per-input-column quality to encoded columns.
std::vector<double> expand_quality(std::span<const double> q, std::span<const std::size_t> feature_of_encoded);

// Row-wise x * g.
Matrix gate_forward(std::span<const double> g, const Matrix& x);

double phi(Phi kind, double z);
std::vector<double> quality_weights(std::span<const double> q_expanded, Phi kind);

// (1/D') sum_j w_j (g_j - anchor_j)^2
double gate_loss(std::span<const double> g, std::span<const double> anchor, std::span<const double> w);
// 2 w_j (g_j - anchor_j) / D'
std::vector<double> gate_loss_gradient(std::span<const double> g, std::span<const double> anchor,
                                       std::span<const double> w);

// Regularization strength at epoch t of T.
double lambda_at(double lambda0, Anneal anneal, double t, double total);

// Copies g into the anchor when epoch is a multiple of the anchor period.
// Returns whether a refresh happened.
bool maybe_refresh_anchor(GateState& state, std::size_t epoch);

// Initial (g, anchor); the anchor starts as a copy of g.
std::pair<std::vector<double>, std::vector<double>> init_gates(GateInit init, std::span<const double> q_expanded,
                                                                std::uint64_t seed);

GateState make_gate_state(const GateConfig& config, std::span<const double> q_expanded, std::uint64_t seed);

// dL/dg_j = sum_i dL/dxg_ij * x_ij
std::vector<double> gate_gradient(const Matrix& d_gated, const Matrix& x);

// Value and gradient of  mean task loss + lambda * gate loss  for a gated
// (gates != nullptr) or plain model.
struct CompositeResult {
    double task = 0.0;
    double gate = 0.0;  // unweighted gate loss
    double total = 0.0;
    nn::ParamGrads grads;
};

CompositeResult composite_loss_and_grad(const nn::MlpModel& model, const GateState* gates, double lambda,
                                        const Matrix& x, std::span<const double> y, nn::LossKind kind,
                                        bool train_mode, std::uint64_t dropout_seed);

double composite_loss(const nn::MlpModel& model, const GateState* gates, double lambda, const Matrix& x,
                      std::span<const double> y, nn::LossKind kind, bool train_mode, std::uint64_t dropout_seed);

}  // namespace quail::gating
