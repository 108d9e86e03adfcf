#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quail/corrupt.hpp"
#include "quail/data.hpp"
#include "quail/eval.hpp"
#include "quail/gating.hpp"
#include "quail/nn.hpp"
#include "quail/train.hpp"

namespace quail::search {

using eval::ModelKind;

struct Range {
    double lo = 0.0;
    double hi = 0.0;

    friend bool operator==(const Range&, const Range&) = default;
};

struct SearchSpace {
    Range lr{5e-4, 5e-2};  // log-uniform
    std::vector<std::size_t> batch_sizes{64, 128, 256};
    std::vector<train::OptimizerKind> optimizers{train::OptimizerKind::sgd, train::OptimizerKind::adam,
                                                 train::OptimizerKind::adamw};
    Range weight_decay{1e-6, 1e-2};  // log-uniform
    std::vector<train::LrSchedule> lr_schedules{train::LrSchedule::plateau, train::LrSchedule::cosine,
                                                train::LrSchedule::step};

    std::size_t min_layers = 1;
    std::size_t max_layers = 4;
    std::vector<std::size_t> widths{4, 8, 16, 32, 64};
    Range dropout{0.0, 0.5};
    std::vector<nn::Activation> activations{nn::Activation::relu, nn::Activation::elu, nn::Activation::gelu};

    std::vector<train::CurriculumSchedule> curricula{train::CurriculumSchedule::linear,
                                                     train::CurriculumSchedule::exponential,
                                                     train::CurriculumSchedule::step};

    std::vector<gating::GateInit> gate_inits{gating::GateInit::quality, gating::GateInit::random,
                                             gating::GateInit::ones};
    Range lambda0{1e-4, 1e-1};  // log-uniform
    std::size_t min_anchor_period = 1;
    std::size_t max_anchor_period = 20;
    std::vector<gating::Phi> phis{gating::Phi::linear, gating::Phi::quadratic, gating::Phi::exponential,
                                  gating::Phi::inverse_exponential};
    std::vector<gating::Anneal> anneals{gating::Anneal::constant, gating::Anneal::linear, gating::Anneal::cosine};

    std::size_t max_epochs = 256;
    std::size_t patience = 16;

    // Throws ContractError on empty choice lists or inverted / non-positive ranges.
    void validate() const;

    friend bool operator==(const SearchSpace&, const SearchSpace&) = default;
};

struct Architecture {
    std::size_t layers = 1;
    std::size_t width = 16;
    double dropout = 0.0;
    nn::Activation activation = nn::Activation::relu;

    std::vector<std::size_t> hidden() const { return std::vector<std::size_t>(layers, width); }

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct TrialConfig {
    ModelKind model = ModelKind::mlp;
    train::TrainConfig train;                    // train.seed is set per split at run time
    std::optional<Architecture> architecture;    // absent for the linear model
    std::optional<gating::GateConfig> gates;     // QuAIL only
};

// Independent uniform / log-uniform draws of every field the model kind uses.
TrialConfig sample_config(const SearchSpace& space, ModelKind model, std::uint64_t seed);

struct TrialResult {
    std::size_t index = 0;
    std::uint64_t seed = 0;  // trial seed
    TrialConfig config;
    std::vector<double> val_metrics;
    std::vector<double> test_metrics;
    double mean_val = 0.0;
    double mean_test = 0.0;
    bool failed = false;
    std::string error;
};

// An architecture together with the training hyperparameters of the
// trial that ranked it.
struct RankedArchitecture {
    Architecture architecture;
    train::TrainConfig train;
    double mean_val = 0.0;
    std::size_t trial_index = 0;
};

// The k distinct architectures with the highest mean validation metric
// (each represented by its best trial; ties go to the earlier trial).
// Returns fewer than k, with a warning appended, when there are not enough.
std::vector<RankedArchitecture> top_k_architectures(std::span<const TrialResult> trials, std::size_t k = 8,
                                                    std::vector<std::string>* warnings = nullptr);

// Everything a trial's splits saw, for pipeline audits.
struct SplitAudit {
    std::size_t trial = 0;
    std::size_t split = 0;
    const data::Table* original = nullptr;
    const data::Split* rows = nullptr;
    const corrupt::Corrupted* corrupted = nullptr;  // training partition after corruption
    const data::Table* validation = nullptr;        // as fed to preprocessing
    const data::Table* test = nullptr;
};

struct StudySpec {
    std::string dataset;
    corrupt::Mode mode = corrupt::Mode::clean;
    ModelKind model = ModelKind::mlp;
    std::size_t n_trials = 32;
    std::size_t n_splits = 5;
    std::uint64_t seed = 0;
    SearchSpace space;
    std::size_t workers = 1;
    // QuAIL: candidate (architecture, training) configurations from the
    // matching MLP study. Empty means sample the whole space.
    std::vector<RankedArchitecture> architectures;
    // Trials already on disk (resume); they are neither rerun nor re-emitted.
    std::map<std::size_t, TrialResult> completed;
    // Called once per newly run trial, in trial-index order.
    std::function<void(const TrialResult&)> on_trial;
    // Called for every split of every trial (from worker threads).
    std::function<void(const SplitAudit&)> audit;
};

struct StudyResult {
    std::vector<TrialResult> trials;
    std::optional<std::size_t> best;  // index into trials, by mean validation metric
    std::size_t failures = 0;

    const TrialResult& best_trial() const { return trials.at(best.value()); }
};

// Seeds shared by every trial of a study, so that all trials and model
// kinds see the same splits and the same corruption.
std::uint64_t split_seed(std::uint64_t study_seed);
std::uint64_t corruption_seed(std::uint64_t study_seed, std::size_t split);

TrialResult run_trial(const data::Table& table, const StudySpec& spec, std::size_t index);
StudyResult run_study(const data::Table& table, const StudySpec& spec);

}  // namespace quail::search
