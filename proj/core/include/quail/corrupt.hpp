#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "quail/data.hpp"

namespace quail::corrupt {

enum class Mode { clean, ccar, cnar };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

// Corruption tiers and their per-cell corruption rates.
enum class Tier { none, mild, moderate, heavy, severe };

double tier_rate(Tier tier) noexcept;
std::string to_string(Tier tier);

struct SeverityPlan {
    // One entry per table column; the target column is always Tier::none.
    std::vector<Tier> tier_of_column;
    std::uint64_t seed = 0;

    double rate(std::size_t column) const { return tier_rate(tier_of_column.at(column)); }
};

// Shuffles the input columns and assigns ceil(6.25% D) severe, ceil(12.5% D)
// heavy, ceil(25% D) moderate and the rest mild (earlier tiers win when the
// ceilings exceed D).
SeverityPlan plan_severity(const data::FeatureSchema& schema, std::uint64_t seed);

// Cell-level record of what an injector touched, shaped like its input.
class CorruptionMask {
public:
    CorruptionMask() = default;
    CorruptionMask(std::size_t n_rows, std::size_t n_columns, Mode mode)
        : n_rows_(n_rows), n_columns_(n_columns), mode_(mode),
          corrupted_(n_rows * n_columns, 0), made_missing_(n_rows * n_columns, 0) {}

    std::size_t n_rows() const noexcept { return n_rows_; }
    std::size_t n_columns() const noexcept { return n_columns_; }
    Mode mode() const noexcept { return mode_; }

    bool corrupted(std::size_t r, std::size_t c) const { return corrupted_[r * n_columns_ + c] != 0; }
    bool made_missing(std::size_t r, std::size_t c) const { return made_missing_[r * n_columns_ + c] != 0; }

    void mark_corrupted(std::size_t r, std::size_t c) { corrupted_[r * n_columns_ + c] = 1; }
    // Missing implies corrupted.
    void mark_missing(std::size_t r, std::size_t c) {
        corrupted_[r * n_columns_ + c] = 1;
        made_missing_[r * n_columns_ + c] = 1;
    }

    std::size_t corrupted_in_column(std::size_t c) const;
    std::size_t missing_in_column(std::size_t c) const;
    std::size_t total_corrupted() const;

    friend bool operator==(const CorruptionMask&, const CorruptionMask&) = default;

private:
    std::size_t n_rows_ = 0;
    std::size_t n_columns_ = 0;
    Mode mode_ = Mode::clean;
    std::vector<std::uint8_t> corrupted_;
    std::vector<std::uint8_t> made_missing_;
};

struct CnarConfig {
    double anchor_fraction = 1.0 / 3.0;
    double propagation_prob = 0.60;
    double confusion_prob = 0.70;
    double noise_exponent = 0.75;  // noise sd = column sd / 10^0.75 (15 dB)
    double missing_cap = 0.5;
};

struct Corrupted {
    data::Table table;
    CorruptionMask mask;
    SeverityPlan plan;
    // CNAR only: table column indices of the propagation anchors.
    std::vector<std::size_t> anchors;
    // CNAR only, per table column: how many value-corrupted categorical
    // cells took the cyclic c_i -> c_{i+1} branch vs the uniform fallback.
    std::vector<std::size_t> cyclic_swaps;
    std::vector<std::size_t> fallback_swaps;
};

// Value-independent corruption: Gaussian noise at 20 dB on numeric cells,
// uniform replacement on categorical cells, then 30% of each column's
// corrupted cells (rounded down) set to Missing.
Corrupted corrupt_ccar(const data::Table& train, const SeverityPlan& plan, std::uint64_t seed);

// Value-dependent corruption: heteroscedastic noise in min-max space,
// MNAR deletion of extreme values, anchor-driven propagation across numeric
// columns, cyclic category confusion and frequency-dependent missingness.
Corrupted corrupt_cnar(const data::Table& train, const SeverityPlan& plan, const CnarConfig& cfg,
                       std::uint64_t seed);

// Plans severity with `seed` and dispatches on mode. Mode::clean returns
// the input unchanged with an empty mask.
Corrupted apply_corruption(Mode mode, const data::Table& train, std::uint64_t seed,
                           const CnarConfig& cfg = {});

// Probability that CNAR deletes a numeric cell.
double mnar_missing_probability(double x, double median, double iqr, double rate, double cap = 0.5);

// Per-input-column reliability, q_j in [0, 1].
struct QualityVector {
    std::vector<double> q;
};

// q_j = 1 - corrupted cells in input column j / n_train_rows.
QualityVector derive_quality(const CorruptionMask& mask, const data::FeatureSchema& schema,
                             std::size_t n_train_rows);
QualityVector perfect_quality(std::size_t n_inputs);

// CSV with header row,column,corrupted,made_missing; one line per corrupted cell.
void write_mask_csv(const CorruptionMask& mask, const data::FeatureSchema& schema, std::ostream& out);
// JSON sidecar: mode, seed, tier per column, anchors, quality.
void write_metadata_json(const Corrupted& result, const QualityVector& quality, std::uint64_t seed,
                         std::ostream& out);

}  // namespace quail::corrupt
