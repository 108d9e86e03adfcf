#include "quail/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>

#include "quail/error.hpp"
#include "quail/eval.hpp"

namespace quail::train {

std::string to_string(OptimizerKind v) {
    switch (v) {
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::adam: return "adam";
        case OptimizerKind::adamw: return "adamw";
    }
    return "?";
}

std::string to_string(LrSchedule v) {
    switch (v) {
        case LrSchedule::plateau: return "plateau";
        case LrSchedule::cosine: return "cosine";
        case LrSchedule::step: return "step";
    }
    return "?";
}

std::string to_string(CurriculumSchedule v) {
    switch (v) {
        case CurriculumSchedule::linear: return "linear";
        case CurriculumSchedule::exponential: return "exponential";
        case CurriculumSchedule::step: return "step";
    }
    return "?";
}

OptimizerKind parse_optimizer(const std::string& text) {
    for (auto v : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::adamw})
        if (to_string(v) == text) return v;
    throw ContractError("unknown optimizer '" + text + "'");
}

LrSchedule parse_lr_schedule(const std::string& text) {
    for (auto v : {LrSchedule::plateau, LrSchedule::cosine, LrSchedule::step})
        if (to_string(v) == text) return v;
    throw ContractError("unknown lr schedule '" + text + "'");
}

CurriculumSchedule parse_curriculum(const std::string& text) {
    for (auto v : {CurriculumSchedule::linear, CurriculumSchedule::exponential, CurriculumSchedule::step})
        if (to_string(v) == text) return v;
    throw ContractError("unknown curriculum schedule '" + text + "'");
}

// ---------------------------------------------------------------------------
// Optimizers

void Optimizer::step(std::span<const ParamSlot> slots, double lr, double weight_decay) {
    for (const auto& s : slots) {
        if (s.values.size() != s.grads.size()) throw ShapeError("optimizer: parameter/gradient size mismatch");
        for (double g : s.grads)
            if (!std::isfinite(g)) throw TrainingError("optimizer: non-finite gradient");
    }
    if (kind_ != OptimizerKind::sgd && m_.empty()) {
        for (const auto& s : slots) {
            m_.emplace_back(s.values.size(), 0.0);
            v_.emplace_back(s.values.size(), 0.0);
        }
    }
    if (kind_ != OptimizerKind::sgd && m_.size() != slots.size())
        throw ShapeError("optimizer: slot layout changed between steps");
    ++t_;

    if (kind_ == OptimizerKind::sgd) {
        for (const auto& s : slots) {
            const double wd = s.decay ? weight_decay : 0.0;
            for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] -= lr * (s.grads[i] + wd * s.values[i]);
        }
        return;
    }

    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const auto& s = slots[k];
        auto& m = m_[k];
        auto& v = v_[k];
        if (m.size() != s.values.size()) throw ShapeError("optimizer: slot size changed between steps");
        const double wd = s.decay ? weight_decay : 0.0;
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            double g = s.grads[i];
            if (kind_ == OptimizerKind::adam)
                g += wd * s.values[i];
            else
                s.values[i] -= lr * wd * s.values[i];
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            s.values[i] -= lr * m_hat / (std::sqrt(v_hat) + kEps);
        }
    }
}

std::vector<ParamSlot> collect_slots(nn::MlpModel& model, gating::GateState* gates, const nn::ParamGrads& grads) {
    if (grads.layers.size() != model.layers.size()) throw ShapeError("collect_slots: gradient layer count mismatch");
    std::vector<ParamSlot> slots;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        slots.push_back({model.layers[l].weight.values(), grads.layers[l].weight.values(), true});
        slots.push_back({model.layers[l].bias, grads.layers[l].bias, true});
    }
    if (gates) {
        if (grads.gate.size() != gates->g.size()) throw ShapeError("collect_slots: gate gradient missing");
        slots.push_back({gates->g, grads.gate, false});
    }
    return slots;
}

// ---------------------------------------------------------------------------
// Schedules

void PlateauState::observe(double val_metric) {
    if (val_metric > best) {
        best = val_metric;
        since_best = 0;
        return;
    }
    if (++since_best >= kPatience) {
        lr = std::max(kMinLr, lr * kFactor);
        since_best = 0;
    }
}

double lr_at(LrSchedule schedule, double lr0, std::size_t t, std::size_t total, const PlateauState& plateau) {
    switch (schedule) {
        case LrSchedule::plateau:
            return plateau.lr;
        case LrSchedule::cosine: {
            const double frac = std::clamp(static_cast<double>(t) / static_cast<double>(std::max<std::size_t>(total, 1)), 0.0, 1.0);
            return lr0 * (1.0 + std::cos(std::numbers::pi * frac)) / 2.0;
        }
        case LrSchedule::step:
            return lr0 * std::pow(0.5, static_cast<double>(t / kStepPeriod));
    }
    return lr0;
}

bool EarlyStopping::update(double metric, std::size_t epoch) {
    if (metric > best_) {
        best_ = metric;
        best_epoch_ = epoch;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

// ---------------------------------------------------------------------------
// Curriculum

std::vector<double> row_cleanliness(const corrupt::CorruptionMask& mask, const data::FeatureSchema& schema) {
    if (mask.n_columns() != schema.n_columns()) throw ShapeError("row_cleanliness: mask/schema mismatch");
    const auto& inputs = schema.input_columns();
    std::vector<double> out(mask.n_rows(), 1.0);
    if (inputs.empty()) return out;
    for (std::size_t r = 0; r < mask.n_rows(); ++r) {
        std::size_t bad = 0;
        for (auto c : inputs) bad += mask.corrupted(r, c);
        out[r] = 1.0 - static_cast<double>(bad) / static_cast<double>(inputs.size());
    }
    return out;
}

double curriculum_beta(CurriculumSchedule schedule, double beta0, double t, double total) {
    const double frac = std::clamp(t / std::max(total, 1.0), 0.0, 1.0);
    switch (schedule) {
        case CurriculumSchedule::linear: return beta0 * (1.0 - frac);
        case CurriculumSchedule::exponential: return beta0 * std::exp(-5.0 * frac);
        case CurriculumSchedule::step:
            if (frac < 1.0 / 3.0) return beta0;
            if (frac < 2.0 / 3.0) return beta0 / 2.0;
            return 0.0;
    }
    return 0.0;
}

std::vector<double> curriculum_probs(std::span<const double> cleanliness, double beta) {
    if (cleanliness.empty()) throw ContractError("curriculum_probs: no rows");
    std::vector<double> p(cleanliness.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = beta == 0.0 ? 1.0 : std::pow(std::clamp(cleanliness[i], 0.0, 1.0), beta);
        total += p[i];
    }
    if (!(total > 0.0)) {
        std::fill(p.begin(), p.end(), 1.0);
        total = static_cast<double>(p.size());
    }
    for (auto& v : p) v /= total;
    return p;
}

DiscreteSampler::DiscreteSampler(std::span<const double> probs) : cumulative_(probs.size()) {
    if (probs.empty()) throw ContractError("DiscreteSampler: empty distribution");
    std::partial_sum(probs.begin(), probs.end(), cumulative_.begin());
}

std::size_t DiscreteSampler::operator()(Rng& rng) const {
    const double u = rng.uniform() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
}

// ---------------------------------------------------------------------------
// Training loop

nn::LossKind loss_for(const data::EncodedMatrix& m) noexcept {
    return m.n_classes > 0 ? nn::LossKind::cross_entropy : nn::LossKind::mse;
}

double evaluate(const nn::MlpModel& model, const gating::GateState* gates, const data::EncodedMatrix& rows) {
    const Matrix out = gates ? nn::predict(model, gating::gate_forward(gates->g, rows.x)) : nn::predict(model, rows.x);
    const auto task = rows.n_classes > 0 ? data::Task::classification : data::Task::regression;
    return eval::score(out, rows.y, task, rows.n_classes);
}

namespace {

void gather(const data::EncodedMatrix& src, std::span<const std::size_t> rows, Matrix& x, std::vector<double>& y) {
    x = Matrix(rows.size(), src.x.cols());
    y.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = src.x.row(rows[i]);
        std::copy(r.begin(), r.end(), x.row(i).begin());
        y[i] = src.y[rows[i]];
    }
}

}  // namespace

TrainResult train_model(nn::MlpModel model, std::optional<gating::GateState> gates, const data::EncodedMatrix& train,
                        const data::EncodedMatrix& validation, std::span<const double> cleanliness,
                        const TrainConfig& cfg) {
    const auto n = train.x.rows();
    if (n == 0) throw ContractError("train_model: empty training set");
    if (cfg.batch_size == 0 || cfg.max_epochs == 0) throw ContractError("train_model: zero batch size or epochs");
    if (gates && gates->width() != train.x.cols()) throw ShapeError("train_model: gate width != encoded width");
    if (cfg.curriculum && cleanliness.size() != n)
        throw ContractError("train_model: curriculum needs one cleanliness value per training row");

    const auto kind = loss_for(train);
    Optimizer opt(cfg.optimizer);
    PlateauState plateau;
    plateau.lr = cfg.lr;
    EarlyStopping stopper(cfg.patience);

    TrainResult best;
    best.model = model;
    best.gates = gates;

    std::vector<std::size_t> order(n);
    Matrix xb;
    std::vector<double> yb;
    const double total_epochs = static_cast<double>(cfg.max_epochs);

    for (std::size_t t = 0; t < cfg.max_epochs; ++t) {
        EpochRecord rec;
        rec.epoch = t + 1;
        rec.lr = lr_at(cfg.lr_schedule, cfg.lr, t, cfg.max_epochs, plateau);
        rec.lambda = gates ? gating::lambda_at(gates->config.lambda0, gates->config.anneal, static_cast<double>(t),
                                               total_epochs)
                           : 0.0;

        Rng rng(derive_seed(cfg.seed, {tag("epoch"), t}));
        if (cfg.curriculum) {
            const double beta = curriculum_beta(*cfg.curriculum, kCurriculumBeta0, static_cast<double>(t), total_epochs);
            const auto probs = curriculum_probs(cleanliness, beta);
            const DiscreteSampler sampler(probs);
            for (auto& o : order) o = sampler(rng);
        } else {
            std::iota(order.begin(), order.end(), std::size_t{0});
            rng.shuffle(order);
        }

        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size, ++n_batches) {
            const auto stop = std::min(n, start + cfg.batch_size);
            gather(train, std::span<const std::size_t>(order).subspan(start, stop - start), xb, yb);
            const auto dropout_seed = derive_seed(cfg.seed, {tag("dropout"), t, n_batches});
            auto res = gating::composite_loss_and_grad(model, gates ? &*gates : nullptr, rec.lambda, xb, yb, kind,
                                                       true, dropout_seed);
            if (!std::isfinite(res.total))
                throw TrainingError("non-finite loss at epoch " + std::to_string(t + 1));
            rec.train_loss += res.total;
            rec.task_loss += res.task;
            rec.gate_loss += res.gate;
            const auto slots = collect_slots(model, gates ? &*gates : nullptr, res.grads);
            opt.step(slots, rec.lr, cfg.weight_decay);
        }
        const auto nb = static_cast<double>(n_batches);
        rec.train_loss /= nb;
        rec.task_loss /= nb;
        rec.gate_loss /= nb;

        if (gates) {
            rec.anchor_refreshed = gating::maybe_refresh_anchor(*gates, rec.epoch);
            rec.gates = gates->g;
        }
        rec.val_metric = evaluate(model, gates ? &*gates : nullptr, validation);
        if (stopper.update(rec.val_metric, rec.epoch)) {
            best.model = model;
            best.gates = gates;
        }
        plateau.observe(rec.val_metric);
        best.history.push_back(std::move(rec));
        if (stopper.should_stop()) break;
    }
    best.best_epoch = stopper.best_epoch();
    best.best_val_metric = stopper.best();
    return best;
}

void write_history_csv(std::span<const EpochRecord> history, std::ostream& out) {
    out << "epoch,lr,lambda,train_loss,task_loss,gate_loss,val_metric\n";
    for (const auto& r : history)
        out << r.epoch << ',' << data::format_double(r.lr) << ',' << data::format_double(r.lambda) << ','
            << data::format_double(r.train_loss) << ',' << data::format_double(r.task_loss) << ','
            << data::format_double(r.gate_loss) << ',' << data::format_double(r.val_metric) << '\n';
}

void write_gate_log_csv(std::span<const EpochRecord> history, std::ostream& out) {
    const auto width = history.empty() ? 0 : history.front().gates.size();
    out << "epoch,lambda,anchor_refreshed";
    for (std::size_t j = 0; j < width; ++j) out << ",g" << j;
    out << '\n';
    for (const auto& r : history) {
        out << r.epoch << ',' << data::format_double(r.lambda) << ',' << (r.anchor_refreshed ? 1 : 0);
        for (double g : r.gates) out << ',' << data::format_double(g);
        out << '\n';
    }
}

}  // namespace quail::train
