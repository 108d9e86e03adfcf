#include "quail/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include "quail/error.hpp"

namespace quail::eval {

MetricKind metric_for(data::Task task) noexcept {
    return task == data::Task::classification ? MetricKind::f1_macro : MetricKind::r2;
}

std::string to_string(MetricKind kind) {
    switch (kind) {
        case MetricKind::f1_macro: return "f1_macro";
        case MetricKind::r2: return "r2";
        case MetricKind::accuracy: return "accuracy";
    }
    return "?";
}

double f1_macro(std::span<const std::size_t> pred, std::span<const std::size_t> truth, std::size_t n_classes) {
    if (pred.empty()) throw ContractError("f1_macro: empty input");
    if (pred.size() != truth.size()) throw ShapeError("f1_macro: length mismatch");
    std::vector<double> tp(n_classes, 0.0), fp(n_classes, 0.0), fn(n_classes, 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] >= n_classes || truth[i] >= n_classes) throw ContractError("f1_macro: label out of range");
        if (pred[i] == truth[i]) {
            tp[pred[i]] += 1.0;
        } else {
            fp[pred[i]] += 1.0;
            fn[truth[i]] += 1.0;
        }
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        const double denom = 2.0 * tp[c] + fp[c] + fn[c];
        // 2PR/(P+R) simplifies to 2TP/(2TP+FP+FN); zero when TP = 0.
        if (tp[c] > 0.0) sum += 2.0 * tp[c] / denom;
    }
    return sum / static_cast<double>(n_classes);
}

double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
    if (pred.empty()) throw ContractError("accuracy: empty input");
    if (pred.size() != truth.size()) throw ShapeError("accuracy: length mismatch");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double r2(std::span<const double> pred, std::span<const double> y) {
    if (pred.size() != y.size()) throw ShapeError("r2: length mismatch");
    if (y.size() < 2) throw ContractError("r2: need at least 2 samples");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_tot = 0.0, ss_res = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_tot += (y[i] - mean) * (y[i] - mean);
        ss_res += (y[i] - pred[i]) * (y[i] - pred[i]);
    }
    if (!(ss_tot > 0.0)) throw ContractError("r2: target has zero variance");
    return 1.0 - ss_res / ss_tot;
}

double trimmed_mean(std::span<const double> values, double trim_fraction) {
    if (values.empty()) throw ContractError("trimmed_mean: empty input");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const auto cut = static_cast<std::size_t>(std::floor(trim_fraction * static_cast<double>(sorted.size())));
    double s = 0.0;
    for (std::size_t i = cut; i < sorted.size() - cut; ++i) s += sorted[i];
    return s / static_cast<double>(sorted.size() - 2 * cut);
}

double relative_improvement(double candidate, double baseline) noexcept { return candidate - baseline; }

std::vector<std::size_t> argmax_rows(const Matrix& logits) {
    std::vector<std::size_t> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto r = logits.row(i);
        out[i] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    return out;
}

std::vector<std::size_t> to_labels(std::span<const double> y) {
    std::vector<std::size_t> out;
    out.reserve(y.size());
    for (double v : y) out.push_back(static_cast<std::size_t>(v));
    return out;
}

double score(const Matrix& output, std::span<const double> y, data::Task task, std::size_t n_classes) {
    if (task == data::Task::classification) return f1_macro(argmax_rows(output), to_labels(y), n_classes);
    std::vector<double> pred(output.rows());
    for (std::size_t i = 0; i < output.rows(); ++i) pred[i] = output(i, 0);
    return r2(pred, y);
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::linear: return "linear";
        case ModelKind::mlp: return "mlp";
        case ModelKind::curriculum: return "curriculum";
        case ModelKind::quail: return "quail";
    }
    return "?";
}

ModelKind parse_model_kind(const std::string& text) {
    for (auto k : {ModelKind::linear, ModelKind::mlp, ModelKind::curriculum, ModelKind::quail})
        if (to_string(k) == text) return k;
    throw ContractError("unknown model kind '" + text + "' (expected linear, mlp, curriculum or quail)");
}

double mean_of(std::span<const double> values) {
    if (values.empty()) throw ContractError("mean of empty set");
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

CellResult make_cell_result(std::string dataset, corrupt::Mode mode, ModelKind model, MetricKind metric,
                            std::vector<double> split_metrics) {
    CellResult c;
    c.dataset = std::move(dataset);
    c.mode = mode;
    c.model = model;
    c.metric = metric;
    c.mean = mean_of(split_metrics);
    c.split_metrics = std::move(split_metrics);
    return c;
}

std::string format_percent(double metric) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", metric * 100.0);
    return buf;
}

void write_results_csv(std::span<const CellResult> cells, std::ostream& out) {
    out << "dataset,mode,model,metric,split,value\n";
    for (const auto& c : cells)
        for (std::size_t s = 0; s < c.split_metrics.size(); ++s)
            out << c.dataset << ',' << corrupt::to_string(c.mode) << ',' << to_string(c.model) << ','
                << to_string(c.metric) << ',' << s << ',' << format_percent(c.split_metrics[s]) << '\n';
}

void write_summary_csv(std::span<const CellResult> cells, std::ostream& out) {
    const ModelKind kinds[] = {ModelKind::linear, ModelKind::mlp, ModelKind::curriculum, ModelKind::quail};
    using Key = std::pair<std::string, corrupt::Mode>;
    std::map<Key, std::map<ModelKind, const CellResult*>> table;
    std::vector<Key> order;
    for (const auto& c : cells) {
        Key k{c.dataset, c.mode};
        if (!table.contains(k)) order.push_back(k);
        table[k][c.model] = &c;
    }
    out << "dataset,mode,metric,linear,mlp,curriculum,quail,best\n";
    std::map<corrupt::Mode, std::vector<double>> improvements;
    for (const auto& k : order) {
        const auto& row = table[k];
        out << k.first << ',' << corrupt::to_string(k.second) << ',' << to_string(row.begin()->second->metric);
        std::optional<ModelKind> best;
        for (auto m : kinds) {
            out << ',';
            if (auto it = row.find(m); it != row.end()) {
                out << format_percent(it->second->mean);
                if (!best || it->second->mean > row.at(*best)->mean) best = m;
            }
        }
        out << ',' << (best ? to_string(*best) : "") << '\n';
        if (row.contains(ModelKind::mlp) && row.contains(ModelKind::quail))
            improvements[k.second].push_back(
                100.0 * relative_improvement(row.at(ModelKind::quail)->mean, row.at(ModelKind::mlp)->mean));
    }
    for (const auto& [mode, vals] : improvements) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%+.2f", trimmed_mean(vals));
        out << "trimmed_mean_improvement," << corrupt::to_string(mode) << ",quail_minus_mlp,,,," << buf << ",\n";
    }
}

}  // namespace quail::eval
