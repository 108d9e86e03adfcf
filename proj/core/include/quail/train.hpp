#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quail/corrupt.hpp"
#include "quail/data.hpp"
#include "quail/gating.hpp"
#include "quail/nn.hpp"
#include "quail/rng.hpp"

namespace quail::train {

enum class OptimizerKind { sgd, adam, adamw };
enum class LrSchedule { plateau, cosine, step };
enum class CurriculumSchedule { linear, exponential, step };

std::string to_string(OptimizerKind v);
std::string to_string(LrSchedule v);
std::string to_string(CurriculumSchedule v);
OptimizerKind parse_optimizer(const std::string& text);
LrSchedule parse_lr_schedule(const std::string& text);
CurriculumSchedule parse_curriculum(const std::string& text);

struct TrainConfig {
    double lr = 1e-2;
    std::size_t batch_size = 64;
    OptimizerKind optimizer = OptimizerKind::adam;
    double weight_decay = 1e-4;
    LrSchedule lr_schedule = LrSchedule::cosine;
    std::size_t max_epochs = 256;
    std::size_t patience = 16;
    std::optional<CurriculumSchedule> curriculum;
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Optimizers

// A parameter tensor and its gradient. Gates are registered with
// decay = false so weight decay never touches them.
struct ParamSlot {
    std::span<double> values;
    std::span<const double> grads;
    bool decay = true;
};

class Optimizer {
public:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    explicit Optimizer(OptimizerKind kind) : kind_(kind) {}

    // SGD:   p -= lr (g + wd p)
    // Adam:  bias-corrected moments of g + wd p
    // AdamW: p -= lr wd p, then the Adam update of g
    // Throws TrainingError on a non-finite gradient.
    void step(std::span<const ParamSlot> slots, double lr, double weight_decay);

    OptimizerKind kind() const noexcept { return kind_; }
    std::size_t steps() const noexcept { return t_; }

private:
    OptimizerKind kind_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

// Slots for every model parameter, followed by the gates when present.
std::vector<ParamSlot> collect_slots(nn::MlpModel& model, gating::GateState* gates, const nn::ParamGrads& grads);

// ---------------------------------------------------------------------------
// Learning-rate schedules

struct PlateauState {
    static constexpr std::size_t kPatience = 8;
    static constexpr double kFactor = 0.5;
    static constexpr double kMinLr = 1e-6;

    double lr = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    void observe(double val_metric);
};

inline constexpr std::size_t kStepPeriod = 64;

// Learning rate for epoch t (0-based) of total. `plateau` is only read for
// LrSchedule::plateau.
double lr_at(LrSchedule schedule, double lr0, std::size_t t, std::size_t total, const PlateauState& plateau);

// ---------------------------------------------------------------------------
// Early stopping

class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    // Records the metric of `epoch`; returns true when it is a strict improvement.
    bool update(double metric, std::size_t epoch);
    bool should_stop() const noexcept { return since_best_ >= patience_; }

    double best() const noexcept { return best_; }
    std::size_t best_epoch() const noexcept { return best_epoch_; }
    std::size_t epochs_since_best() const noexcept { return since_best_; }

private:
    std::size_t patience_;
    double best_ = -std::numeric_limits<double>::infinity();
    std::size_t best_epoch_ = 0;
    std::size_t since_best_ = 0;
};

// ---------------------------------------------------------------------------
// Curriculum

inline constexpr double kCurriculumBeta0 = 5.0;

// Per row: fraction of input cells the mask leaves untouched.
std::vector<double> row_cleanliness(const corrupt::CorruptionMask& mask, const data::FeatureSchema& schema);

double curriculum_beta(CurriculumSchedule schedule, double beta0, double t, double total);

// p_i proportional to cleanliness_i^beta; uniform when every weight is zero.
std::vector<double> curriculum_probs(std::span<const double> cleanliness, double beta);

// Draws indices from a fixed discrete distribution.
class DiscreteSampler {
public:
    explicit DiscreteSampler(std::span<const double> probs);
    std::size_t operator()(Rng& rng) const;

private:
    std::vector<double> cumulative_;
};

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;
    double lambda = 0.0;
    double train_loss = 0.0;  // mean composite loss over batches
    double task_loss = 0.0;
    double gate_loss = 0.0;   // unweighted
    double val_metric = 0.0;
    bool anchor_refreshed = false;
    std::vector<double> gates;  // gate values at the end of the epoch
};

struct TrainResult {
    nn::MlpModel model;
    std::optional<gating::GateState> gates;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_metric = 0.0;
};

// Trains on `train`, early-stops on `validation` and returns the
// parameters of the best validation epoch. `cleanliness` (one entry per
// training row) is required when cfg.curriculum is set.
TrainResult train_model(nn::MlpModel model, std::optional<gating::GateState> gates, const data::EncodedMatrix& train,
                        const data::EncodedMatrix& validation, std::span<const double> cleanliness,
                        const TrainConfig& cfg);

// Eval-mode metric (macro F1 or R^2) of a possibly gated model.
double evaluate(const nn::MlpModel& model, const gating::GateState* gates, const data::EncodedMatrix& rows);

nn::LossKind loss_for(const data::EncodedMatrix& m) noexcept;

// epoch,lr,lambda,train_loss,task_loss,gate_loss,val_metric
void write_history_csv(std::span<const EpochRecord> history, std::ostream& out);
// epoch,lambda,anchor_refreshed,g0,g1,...
void write_gate_log_csv(std::span<const EpochRecord> history, std::ostream& out);

}  // namespace quail::train
