#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "quail/corrupt.hpp"
#include "quail/data.hpp"
#include "quail/matrix.hpp"

namespace quail::eval {

enum class MetricKind { f1_macro, r2, accuracy };

struct Metric {
    MetricKind kind = MetricKind::f1_macro;
    double value = 0.0;
};

MetricKind metric_for(data::Task task) noexcept;
std::string to_string(MetricKind kind);

// Unweighted mean of per-class F1 over all n_classes. A class with
// precision + recall = 0 (including one absent from both inputs) scores 0.
double f1_macro(std::span<const std::size_t> pred, std::span<const std::size_t> truth, std::size_t n_classes);

double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth);

// 1 - SS_res / SS_tot. Requires >= 2 samples and var(y) > 0.
double r2(std::span<const double> pred, std::span<const double> y);

// Drops floor(fraction * n) values from each end, then averages.
double trimmed_mean(std::span<const double> values, double trim_fraction = 0.10);

// Additive difference, in whatever units the metrics are given in.
double relative_improvement(double candidate, double baseline) noexcept;

std::vector<std::size_t> argmax_rows(const Matrix& logits);
std::vector<std::size_t> to_labels(std::span<const double> y);

// Metric of a model output against an encoded target.
double score(const Matrix& output, std::span<const double> y, data::Task task, std::size_t n_classes);

enum class ModelKind { linear, mlp, curriculum, quail };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

// Test metrics of one (dataset, corruption mode, model) cell over the
// bootstrap splits.
struct CellResult {
    std::string dataset;
    corrupt::Mode mode = corrupt::Mode::clean;
    ModelKind model = ModelKind::mlp;
    MetricKind metric = MetricKind::f1_macro;
    std::vector<double> split_metrics;
    double mean = 0.0;
};

CellResult make_cell_result(std::string dataset, corrupt::Mode mode, ModelKind model, MetricKind metric,
                            std::vector<double> split_metrics);

double mean_of(std::span<const double> values);

// Metric scaled to percent with two decimals, as in the result tables.
std::string format_percent(double metric);

// One row per (dataset, mode, model, split).
void write_results_csv(std::span<const CellResult> cells, std::ostream& out);

// One row per (dataset, mode) with a column per model, then one
// "trimmed_mean_improvement" row per mode (QuAIL minus MLP, percentage
// points) when both models are present.
void write_summary_csv(std::span<const CellResult> cells, std::ostream& out);

}  // namespace quail::eval
