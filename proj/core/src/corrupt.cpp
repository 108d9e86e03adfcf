#include "quail/corrupt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "quail/error.hpp"
#include "quail/rng.hpp"

namespace quail::corrupt {

using data::Cell;
using data::ColumnKind;
using data::Table;

std::string to_string(Mode mode) {
    switch (mode) {
        case Mode::clean: return "clean";
        case Mode::ccar: return "ccar";
        case Mode::cnar: return "cnar";
    }
    return "?";
}

Mode parse_mode(const std::string& text) {
    if (text == "clean") return Mode::clean;
    if (text == "ccar") return Mode::ccar;
    if (text == "cnar") return Mode::cnar;
    throw ContractError("unknown corruption mode '" + text + "' (expected clean, ccar or cnar)");
}

double tier_rate(Tier tier) noexcept {
    switch (tier) {
        case Tier::none: return 0.0;
        case Tier::mild: return 0.05;
        case Tier::moderate: return 0.10;
        case Tier::heavy: return 0.20;
        case Tier::severe: return 0.40;
    }
    return 0.0;
}

std::string to_string(Tier tier) {
    switch (tier) {
        case Tier::none: return "none";
        case Tier::mild: return "mild";
        case Tier::moderate: return "moderate";
        case Tier::heavy: return "heavy";
        case Tier::severe: return "severe";
    }
    return "?";
}

SeverityPlan plan_severity(const data::FeatureSchema& schema, std::uint64_t seed) {
    const auto& inputs = schema.input_columns();
    const auto d = inputs.size();
    if (d == 0) throw ContractError("plan_severity: no input columns");

    std::vector<std::size_t> order(inputs.begin(), inputs.end());
    Rng rng(derive_seed(seed, {tag("severity")}));
    rng.shuffle(order);

    const auto count = [d](double frac) {
        return static_cast<std::size_t>(std::ceil(frac * static_cast<double>(d) - 1e-12));
    };
    const std::size_t n_severe = std::min(d, count(0.0625));
    const std::size_t n_heavy = std::min(d - n_severe, count(0.125));
    const std::size_t n_moderate = std::min(d - n_severe - n_heavy, count(0.25));

    SeverityPlan plan;
    plan.seed = seed;
    plan.tier_of_column.assign(schema.n_columns(), Tier::none);
    for (std::size_t i = 0; i < d; ++i) {
        Tier t = Tier::mild;
        if (i < n_severe)
            t = Tier::severe;
        else if (i < n_severe + n_heavy)
            t = Tier::heavy;
        else if (i < n_severe + n_heavy + n_moderate)
            t = Tier::moderate;
        plan.tier_of_column[order[i]] = t;
    }
    return plan;
}

std::size_t CorruptionMask::corrupted_in_column(std::size_t c) const {
    std::size_t n = 0;
    for (std::size_t r = 0; r < n_rows_; ++r) n += corrupted_[r * n_columns_ + c];
    return n;
}

std::size_t CorruptionMask::missing_in_column(std::size_t c) const {
    std::size_t n = 0;
    for (std::size_t r = 0; r < n_rows_; ++r) n += made_missing_[r * n_columns_ + c];
    return n;
}

std::size_t CorruptionMask::total_corrupted() const {
    return static_cast<std::size_t>(std::count(corrupted_.begin(), corrupted_.end(), std::uint8_t{1}));
}

namespace {

void check_plan(const Table& train, const SeverityPlan& plan) {
    if (plan.tier_of_column.size() != train.n_columns())
        throw ContractError("severity plan does not match the table's column count");
    if (plan.tier_of_column[train.schema().target_index()] != Tier::none)
        throw ContractError("severity plan assigns a tier to the target column");
}

std::vector<double> present_values(const Table& t, std::size_t col) {
    std::vector<double> v;
    v.reserve(t.n_rows());
    for (std::size_t r = 0; r < t.n_rows(); ++r)
        if (const auto& c = t.at(r, col); c.is_num()) v.push_back(c.number());
    return v;
}

// Uniform draw from the k-1 categories other than `current`.
std::uint32_t other_category(Rng& rng, std::uint32_t current, std::size_t k) {
    auto pick = static_cast<std::uint32_t>(rng.below(k - 1));
    return pick >= current ? pick + 1 : pick;
}

}  // namespace

// ---------------------------------------------------------------------------
// CCAR

Corrupted corrupt_ccar(const Table& train, const SeverityPlan& plan, std::uint64_t seed) {
    check_plan(train, plan);
    Corrupted out{train, CorruptionMask(train.n_rows(), train.n_columns(), Mode::ccar), plan, {}, {}, {}};
    const auto& schema = train.schema();

    for (auto col : schema.input_columns()) {
        const double p = plan.rate(col);
        if (p <= 0.0) continue;
        Rng rng(derive_seed(seed, {tag("ccar"), col}));
        const auto& spec = schema.column(col);

        std::vector<std::size_t> selected;
        if (spec.kind == ColumnKind::numeric) {
            const double sigma = data::sample_std(present_values(train, col)) / 10.0;
            for (std::size_t r = 0; r < train.n_rows(); ++r) {
                const auto& c = train.at(r, col);
                if (c.is_missing() || !rng.bernoulli(p)) continue;
                selected.push_back(r);
                out.table.set(r, col, Cell::num(c.number() + rng.normal(0.0, sigma)));
            }
        } else {
            const auto k = spec.categories.size();
            for (std::size_t r = 0; r < train.n_rows(); ++r) {
                const auto& c = train.at(r, col);
                if (c.is_missing() || !rng.bernoulli(p)) continue;
                selected.push_back(r);
                if (k > 1) out.table.set(r, col, Cell::cat(other_category(rng, c.category(), k)));
            }
        }

        for (auto r : selected) out.mask.mark_corrupted(r, col);
        // Partial Fisher-Yates: the first floor(0.3 m) entries become Missing.
        const auto n_missing = static_cast<std::size_t>(std::floor(0.3 * static_cast<double>(selected.size())));
        for (std::size_t i = 0; i < n_missing; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(selected.size() - i));
            std::swap(selected[i], selected[j]);
            out.table.set(selected[i], col, Cell::missing());
            out.mask.mark_missing(selected[i], col);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CNAR

double mnar_missing_probability(double x, double median, double iqr, double rate, double cap) {
    if (!(iqr > 0.0)) return 0.0;
    return std::min(cap, std::abs(x - median) * rate / (2.0 * iqr));
}

namespace {

struct NumericFrame {
    double lo = 0.0;
    double range = 0.0;  // max - min
    double sigma = 0.0;  // noise sd in normalized space

    double normalize(double x) const { return range > 0.0 ? (x - lo) / range : 0.0; }
    double denormalize(double u) const { return lo + u * range; }
    double noisy(double x, Rng& rng) const {
        const double u = normalize(x);
        return denormalize(u + (1.0 + 3.0 * u) * rng.normal(0.0, sigma));
    }
};

NumericFrame numeric_frame(const Table& t, std::size_t col, double noise_exponent) {
    NumericFrame f;
    auto values = present_values(t, col);
    if (values.empty()) return f;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    f.lo = *mn;
    f.range = *mx - *mn;
    for (auto& v : values) v = f.normalize(v);
    f.sigma = data::sample_std(values) / std::pow(10.0, noise_exponent);
    return f;
}

}  // namespace

Corrupted corrupt_cnar(const Table& train, const SeverityPlan& plan, const CnarConfig& cfg, std::uint64_t seed) {
    check_plan(train, plan);
    for (double pr : {cfg.propagation_prob, cfg.confusion_prob, cfg.missing_cap, cfg.anchor_fraction})
        if (!(pr >= 0.0 && pr <= 1.0)) throw ContractError("CnarConfig: probabilities must lie in [0, 1]");

    const auto& schema = train.schema();
    const auto n_rows = train.n_rows();
    Corrupted out{train, CorruptionMask(n_rows, train.n_columns(), Mode::cnar), plan, {}, {}, {}};
    out.cyclic_swaps.assign(train.n_columns(), 0);
    out.fallback_swaps.assign(train.n_columns(), 0);

    std::vector<std::size_t> numeric_cols;
    for (auto col : schema.input_columns())
        if (schema.column(col).kind == ColumnKind::numeric) numeric_cols.push_back(col);

    std::vector<NumericFrame> frames(train.n_columns());
    for (auto col : numeric_cols) frames[col] = numeric_frame(train, col, cfg.noise_exponent);

    // Primary corruption, one independent stream per column.
    for (auto col : schema.input_columns()) {
        const double p = plan.rate(col);
        if (p <= 0.0) continue;
        Rng rng(derive_seed(seed, {tag("cnar"), col}));
        const auto& spec = schema.column(col);

        if (spec.kind == ColumnKind::numeric) {
            const auto& frame = frames[col];
            const auto values = present_values(train, col);
            if (values.empty()) continue;
            const double median = data::median_of(values);
            const double iqr = data::quantile_of(values, 0.75) - data::quantile_of(values, 0.25);
            for (std::size_t r = 0; r < n_rows; ++r) {
                const auto& c = train.at(r, col);
                if (c.is_missing()) continue;
                if (rng.bernoulli(p)) {
                    out.table.set(r, col, Cell::num(frame.noisy(c.number(), rng)));
                    out.mask.mark_corrupted(r, col);
                }
                if (rng.bernoulli(mnar_missing_probability(c.number(), median, iqr, p, cfg.missing_cap))) {
                    out.table.set(r, col, Cell::missing());
                    out.mask.mark_missing(r, col);
                }
            }
        } else {
            const auto k = spec.categories.size();
            std::vector<std::size_t> counts(k, 0);
            std::size_t present = 0;
            for (std::size_t r = 0; r < n_rows; ++r)
                if (const auto& c = train.at(r, col); c.is_cat()) {
                    ++counts[c.category()];
                    ++present;
                }
            for (std::size_t r = 0; r < n_rows; ++r) {
                const auto& c = train.at(r, col);
                if (c.is_missing()) continue;
                const auto cat = c.category();
                if (rng.bernoulli(p)) {
                    out.mask.mark_corrupted(r, col);
                    if (k > 1) {
                        if (rng.bernoulli(cfg.confusion_prob)) {
                            out.table.set(r, col, Cell::cat(static_cast<std::uint32_t>((cat + 1) % k)));
                            ++out.cyclic_swaps[col];
                        } else {
                            out.table.set(r, col, Cell::cat(other_category(rng, cat, k)));
                            ++out.fallback_swaps[col];
                        }
                    }
                }
                const double freq = static_cast<double>(counts[cat]) / static_cast<double>(present);
                if (rng.bernoulli(p * (1.0 - freq))) {
                    out.table.set(r, col, Cell::missing());
                    out.mask.mark_missing(r, col);
                }
            }
        }
    }

    // Propagation from anchor columns to the other numeric columns.
    if (!numeric_cols.empty()) {
        std::vector<std::size_t> shuffled = numeric_cols;
        Rng rng(derive_seed(seed, {tag("anchors")}));
        rng.shuffle(shuffled);
        const auto n_anchors = static_cast<std::size_t>(
            std::ceil(cfg.anchor_fraction * static_cast<double>(numeric_cols.size()) - 1e-12));
        out.anchors.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_anchors));
        std::sort(out.anchors.begin(), out.anchors.end());

        // Snapshot of primary corruption: propagated cells do not cascade.
        const CorruptionMask primary = out.mask;
        for (auto victim : numeric_cols) {
            Rng vrng(derive_seed(seed, {tag("propagate"), victim}));
            const auto& frame = frames[victim];
            for (std::size_t r = 0; r < n_rows; ++r) {
                const bool triggered = std::any_of(out.anchors.begin(), out.anchors.end(), [&](std::size_t a) {
                    return a != victim && primary.corrupted(r, a);
                });
                if (!triggered) continue;
                const auto& c = train.at(r, victim);
                if (c.is_missing() || primary.corrupted(r, victim)) continue;
                if (!vrng.bernoulli(cfg.propagation_prob)) continue;
                out.table.set(r, victim, Cell::num(frame.noisy(c.number(), vrng)));
                out.mask.mark_corrupted(r, victim);
            }
        }
    }
    return out;
}

Corrupted apply_corruption(Mode mode, const Table& train, std::uint64_t seed, const CnarConfig& cfg) {
    switch (mode) {
        case Mode::clean: {
            Corrupted out{train, CorruptionMask(train.n_rows(), train.n_columns(), Mode::clean), {}, {}, {}, {}};
            out.plan.seed = seed;
            out.plan.tier_of_column.assign(train.n_columns(), Tier::none);
            return out;
        }
        case Mode::ccar:
            return corrupt_ccar(train, plan_severity(train.schema(), seed), seed);
        case Mode::cnar:
            return corrupt_cnar(train, plan_severity(train.schema(), seed), cfg, seed);
    }
    throw ContractError("apply_corruption: bad mode");
}

// ---------------------------------------------------------------------------
// Quality

QualityVector derive_quality(const CorruptionMask& mask, const data::FeatureSchema& schema, std::size_t n_train_rows) {
    if (n_train_rows == 0) throw ContractError("derive_quality: no training rows");
    if (mask.n_columns() != schema.n_columns()) throw ShapeError("derive_quality: mask/schema mismatch");
    QualityVector qv;
    for (auto col : schema.input_columns()) {
        const double frac = static_cast<double>(mask.corrupted_in_column(col)) / static_cast<double>(n_train_rows);
        qv.q.push_back(std::clamp(1.0 - frac, 0.0, 1.0));
    }
    return qv;
}

QualityVector perfect_quality(std::size_t n_inputs) { return QualityVector{std::vector<double>(n_inputs, 1.0)}; }

// ---------------------------------------------------------------------------
// Exports

void write_mask_csv(const CorruptionMask& mask, const data::FeatureSchema& schema, std::ostream& out) {
    out << "row,column,corrupted,made_missing\n";
    for (std::size_t r = 0; r < mask.n_rows(); ++r)
        for (std::size_t c = 0; c < mask.n_columns(); ++c)
            if (mask.corrupted(r, c))
                out << r << ',' << schema.column(c).name << ",1," << (mask.made_missing(r, c) ? 1 : 0) << '\n';
}

void write_metadata_json(const Corrupted& result, const QualityVector& quality, std::uint64_t seed,
                         std::ostream& out) {
    const auto& schema = result.table.schema();
    nlohmann::ordered_json j;
    j["format"] = "quail-corruption-metadata";
    j["version"] = 1;
    j["mode"] = to_string(result.mask.mode());
    j["seed"] = seed;
    j["rows"] = result.mask.n_rows();
    nlohmann::ordered_json columns = nlohmann::ordered_json::array();
    const auto& inputs = schema.input_columns();
    for (std::size_t j_in = 0; j_in < inputs.size(); ++j_in) {
        const auto col = inputs[j_in];
        nlohmann::ordered_json c;
        c["name"] = schema.column(col).name;
        c["kind"] = data::to_string(schema.column(col).kind);
        const auto tier = result.plan.tier_of_column.empty() ? Tier::none : result.plan.tier_of_column[col];
        c["tier"] = to_string(tier);
        c["rate"] = tier_rate(tier);
        c["corrupted"] = result.mask.corrupted_in_column(col);
        c["made_missing"] = result.mask.missing_in_column(col);
        c["quality"] = quality.q.at(j_in);
        c["anchor"] = std::find(result.anchors.begin(), result.anchors.end(), col) != result.anchors.end();
        columns.push_back(std::move(c));
    }
    j["columns"] = std::move(columns);
    nlohmann::ordered_json anchors = nlohmann::ordered_json::array();
    for (auto a : result.anchors) anchors.push_back(schema.column(a).name);
    j["anchors"] = std::move(anchors);
    out << j.dump(2) << '\n';
}

}  // namespace quail::corrupt
