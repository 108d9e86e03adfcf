#include "quail/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "quail/error.hpp"
#include "quail/rng.hpp"

namespace quail::search {

namespace {

void check_range(const Range& r, const char* name, bool log_scale) {
    if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi))
        throw ContractError(std::string("search space: bad range for ") + name);
    if (log_scale && !(r.lo > 0.0))
        throw ContractError(std::string("search space: log-scale range for ") + name + " must be positive");
}

template <class T>
void check_choices(const std::vector<T>& v, const char* name) {
    if (v.empty()) throw ContractError(std::string("search space: no choices for ") + name);
}

double log_uniform(Rng& rng, const Range& r) { return std::exp(rng.uniform(std::log(r.lo), std::log(r.hi))); }

template <class T>
const T& choose(Rng& rng, const std::vector<T>& v) {
    return v[static_cast<std::size_t>(rng.below(v.size()))];
}

std::size_t int_uniform(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

}  // namespace

void SearchSpace::validate() const {
    check_range(lr, "lr", true);
    check_range(weight_decay, "weight_decay", true);
    check_range(dropout, "dropout", false);
    check_range(lambda0, "lambda0", true);
    if (dropout.lo < 0.0 || dropout.hi >= 1.0) throw ContractError("search space: dropout must lie in [0, 1)");
    check_choices(batch_sizes, "batch_size");
    check_choices(optimizers, "optimizer");
    check_choices(lr_schedules, "lr_schedule");
    check_choices(widths, "width");
    check_choices(activations, "activation");
    check_choices(curricula, "curriculum");
    check_choices(gate_inits, "gate_init");
    check_choices(phis, "phi");
    check_choices(anneals, "anneal");
    if (min_layers < 1 || min_layers > max_layers) throw ContractError("search space: bad layer range");
    if (min_anchor_period < 1 || min_anchor_period > max_anchor_period)
        throw ContractError("search space: bad anchor period range");
    if (std::find(batch_sizes.begin(), batch_sizes.end(), std::size_t{0}) != batch_sizes.end() ||
        std::find(widths.begin(), widths.end(), std::size_t{0}) != widths.end())
        throw ContractError("search space: zero batch size or width");
    if (max_epochs < 1) throw ContractError("search space: max_epochs must be >= 1");
}

TrialConfig sample_config(const SearchSpace& space, ModelKind model, std::uint64_t seed) {
    space.validate();
    Rng rng(derive_seed(seed, {tag("config")}));
    TrialConfig c;
    c.model = model;
    c.train.lr = log_uniform(rng, space.lr);
    c.train.batch_size = choose(rng, space.batch_sizes);
    c.train.optimizer = choose(rng, space.optimizers);
    c.train.weight_decay = log_uniform(rng, space.weight_decay);
    c.train.lr_schedule = choose(rng, space.lr_schedules);
    c.train.max_epochs = space.max_epochs;
    c.train.patience = space.patience;

    if (model != ModelKind::linear) {
        Architecture a;
        a.layers = int_uniform(rng, space.min_layers, space.max_layers);
        a.width = choose(rng, space.widths);
        a.dropout = rng.uniform(space.dropout.lo, space.dropout.hi);
        a.activation = choose(rng, space.activations);
        c.architecture = a;
    }
    if (model == ModelKind::curriculum) c.train.curriculum = choose(rng, space.curricula);
    if (model == ModelKind::quail) {
        gating::GateConfig g;
        g.init = choose(rng, space.gate_inits);
        g.lambda0 = log_uniform(rng, space.lambda0);
        g.anchor_period = int_uniform(rng, space.min_anchor_period, space.max_anchor_period);
        g.phi = choose(rng, space.phis);
        g.anneal = choose(rng, space.anneals);
        c.gates = g;
        if (rng.bernoulli(0.5)) c.train.curriculum = choose(rng, space.curricula);
    }
    return c;
}

std::vector<RankedArchitecture> top_k_architectures(std::span<const TrialResult> trials, std::size_t k,
                                                    std::vector<std::string>* warnings) {
    std::vector<RankedArchitecture> distinct;
    for (const auto& t : trials) {
        if (t.failed || !t.config.architecture) continue;
        auto it = std::find_if(distinct.begin(), distinct.end(),
                               [&](const RankedArchitecture& r) { return r.architecture == *t.config.architecture; });
        if (it == distinct.end()) {
            distinct.push_back({*t.config.architecture, t.config.train, t.mean_val, t.index});
        } else if (t.mean_val > it->mean_val) {
            *it = {*t.config.architecture, t.config.train, t.mean_val, t.index};
        }
    }
    std::stable_sort(distinct.begin(), distinct.end(), [](const RankedArchitecture& a, const RankedArchitecture& b) {
        if (a.mean_val != b.mean_val) return a.mean_val > b.mean_val;
        return a.trial_index < b.trial_index;
    });
    if (distinct.size() < k) {
        if (warnings)
            warnings->push_back("top_k_architectures: only " + std::to_string(distinct.size()) +
                                " distinct architectures available, wanted " + std::to_string(k));
    } else {
        distinct.resize(k);
    }
    return distinct;
}

std::uint64_t split_seed(std::uint64_t study_seed) { return derive_seed(study_seed, {tag("splits")}); }

std::uint64_t corruption_seed(std::uint64_t study_seed, std::size_t split) {
    return derive_seed(study_seed, {tag("corruption"), split});
}

namespace {

TrialConfig trial_config(const StudySpec& spec, std::uint64_t trial_seed) {
    auto cfg = sample_config(spec.space, spec.model, trial_seed);
    if (spec.model == ModelKind::quail && !spec.architectures.empty()) {
        Rng rng(derive_seed(trial_seed, {tag("architecture")}));
        const auto& pick = spec.architectures[static_cast<std::size_t>(rng.below(spec.architectures.size()))];
        const auto curriculum = cfg.train.curriculum;
        cfg.architecture = pick.architecture;
        cfg.train = pick.train;
        cfg.train.curriculum = curriculum;
        cfg.train.max_epochs = spec.space.max_epochs;
        cfg.train.patience = spec.space.patience;
    }
    return cfg;
}

}  // namespace

TrialResult run_trial(const data::Table& table, const StudySpec& spec, std::size_t index) {
    TrialResult res;
    res.index = index;
    res.seed = derive_seed(spec.seed, {tag("trial"), index});
    try {
        res.config = trial_config(spec, res.seed);
        const auto& schema = table.schema();
        const auto splits = data::make_bootstrap_splits(table.n_rows(), spec.n_splits, split_seed(spec.seed));
        for (std::size_t s = 0; s < splits.size(); ++s) {
            const auto& split = splits[s];
            const auto train_rows = table.select_rows(split.train);
            const auto val_rows = table.select_rows(split.validation);
            const auto test_rows = table.select_rows(split.test);
            const auto corrupted = corrupt::apply_corruption(spec.mode, train_rows, corruption_seed(spec.seed, s));
            if (spec.audit) spec.audit({index, s, &table, &split, &corrupted, &val_rows, &test_rows});

            const auto quality = corrupt::derive_quality(corrupted.mask, schema, corrupted.table.n_rows());
            const auto prep = data::fit_preprocessor(corrupted.table);
            const auto enc_train = prep.apply(corrupted.table);
            const auto enc_val = prep.apply(val_rows);
            const auto enc_test = prep.apply(test_rows);

            const std::size_t out_dim = enc_train.n_classes > 0 ? enc_train.n_classes : 1;
            const auto arch = res.config.architecture.value_or(Architecture{0, 1, 0.0, nn::Activation::relu});
            const auto hidden = res.config.architecture ? arch.hidden() : std::vector<std::size_t>{};
            auto model = nn::make_mlp(enc_train.x.cols(), hidden, out_dim, arch.activation, arch.dropout,
                                      derive_seed(res.seed, {tag("model"), s}));

            std::optional<gating::GateState> gates;
            if (res.config.gates) {
                const auto q_exp = gating::expand_quality(quality.q, enc_train.feature_of_encoded);
                gates = gating::make_gate_state(*res.config.gates, q_exp, derive_seed(res.seed, {tag("gates"), s}));
            }
            std::vector<double> cleanliness;
            if (res.config.train.curriculum) cleanliness = train::row_cleanliness(corrupted.mask, schema);

            auto tcfg = res.config.train;
            tcfg.seed = derive_seed(res.seed, {tag("train"), s});
            const auto fit = train::train_model(std::move(model), std::move(gates), enc_train, enc_val, cleanliness, tcfg);
            res.val_metrics.push_back(fit.best_val_metric);
            res.test_metrics.push_back(train::evaluate(fit.model, fit.gates ? &*fit.gates : nullptr, enc_test));
        }
        res.mean_val = eval::mean_of(res.val_metrics);
        res.mean_test = eval::mean_of(res.test_metrics);
        if (!std::isfinite(res.mean_val) || !std::isfinite(res.mean_test))
            throw TrainingError("non-finite trial metric");
    } catch (const std::exception& e) {
        res.failed = true;
        res.error = e.what();
        res.val_metrics.clear();
        res.test_metrics.clear();
        res.mean_val = 0.0;
        res.mean_test = 0.0;
    }
    return res;
}

StudyResult run_study(const data::Table& table, const StudySpec& spec) {
    if (spec.n_trials < 1) throw ContractError("run_study: need at least one trial");
    spec.space.validate();
    StudyResult out;
    out.trials.resize(spec.n_trials);
    std::vector<bool> done(spec.n_trials, false);
    for (const auto& [i, t] : spec.completed) {
        if (i >= spec.n_trials) continue;
        out.trials[i] = t;
        done[i] = true;
    }

    std::mutex mu;
    std::size_t next_emit = 0;
    // Emits every finished trial that is next in index order.
    auto flush = [&] {
        while (next_emit < spec.n_trials && done[next_emit]) {
            if (spec.on_trial && !spec.completed.contains(next_emit)) spec.on_trial(out.trials[next_emit]);
            ++next_emit;
        }
    };
    {
        std::lock_guard lock(mu);
        flush();
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr callback_error;
    auto worker = [&] {
        for (;;) {
            const auto i = next.fetch_add(1);
            if (i >= spec.n_trials) return;
            if (spec.completed.contains(i)) continue;
            auto r = run_trial(table, spec, i);
            std::lock_guard lock(mu);
            out.trials[i] = std::move(r);
            done[i] = true;
            try {
                flush();
            } catch (...) {
                if (!callback_error) callback_error = std::current_exception();
            }
        }
    };
    const auto n_workers = std::max<std::size_t>(1, std::min(spec.workers, spec.n_trials));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }
    if (callback_error) std::rethrow_exception(callback_error);

    for (std::size_t i = 0; i < out.trials.size(); ++i) {
        const auto& t = out.trials[i];
        if (t.failed) {
            ++out.failures;
            continue;
        }
        if (!out.best || t.mean_val > out.trials[*out.best].mean_val) out.best = i;
    }
    return out;
}

}  // namespace quail::search
