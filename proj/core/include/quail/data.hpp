#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "quail/matrix.hpp"

namespace quail::data {

enum class ColumnKind { numeric, categorical };
enum class Task { classification, regression };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::vector<std::string> categories;  // categorical only

    friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

// Column layout of a dataset. The target is one of the columns; every
// other column is an input. "Input index" below always means the position
// of a column among the inputs (0..n_inputs()-1), skipping the target.
class FeatureSchema {
public:
    FeatureSchema() = default;
    FeatureSchema(std::vector<ColumnSpec> columns, const std::string& target, Task task);

    const std::vector<ColumnSpec>& columns() const noexcept { return columns_; }
    const ColumnSpec& column(std::size_t i) const { return columns_.at(i); }
    std::size_t n_columns() const noexcept { return columns_.size(); }

    std::size_t target_index() const noexcept { return target_; }
    const ColumnSpec& target() const { return columns_.at(target_); }
    Task task() const noexcept { return task_; }

    // Table column indices of the inputs, in table order.
    const std::vector<std::size_t>& input_columns() const noexcept { return inputs_; }
    std::size_t n_inputs() const noexcept { return inputs_.size(); }

    std::optional<std::size_t> index_of(const std::string& name) const;

    friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

private:
    std::vector<ColumnSpec> columns_;
    std::size_t target_ = 0;
    Task task_ = Task::classification;
    std::vector<std::size_t> inputs_;
};

class Cell {
public:
    enum class Tag : std::uint8_t { missing, number, category };

    static Cell missing() noexcept { return Cell{}; }
    static Cell num(double v) noexcept {
        Cell c;
        c.tag_ = Tag::number;
        c.num_ = v;
        return c;
    }
    static Cell cat(std::uint32_t index) noexcept {
        Cell c;
        c.tag_ = Tag::category;
        c.cat_ = index;
        return c;
    }

    Tag tag() const noexcept { return tag_; }
    bool is_missing() const noexcept { return tag_ == Tag::missing; }
    bool is_num() const noexcept { return tag_ == Tag::number; }
    bool is_cat() const noexcept { return tag_ == Tag::category; }
    double number() const noexcept { return num_; }
    std::uint32_t category() const noexcept { return cat_; }

    // Bitwise comparison of the stored value (distinguishes -0.0 from 0.0).
    bool identical(const Cell& other) const noexcept;

    friend bool operator==(const Cell&, const Cell&) = default;

private:
    double num_ = 0.0;
    std::uint32_t cat_ = 0;
    Tag tag_ = Tag::missing;
};

class Table {
public:
    Table() = default;
    // All cells Missing.
    Table(FeatureSchema schema, std::size_t n_rows);
    // Row-major cells; validated against the schema.
    Table(FeatureSchema schema, std::vector<Cell> cells);

    const FeatureSchema& schema() const noexcept { return schema_; }
    std::size_t n_rows() const noexcept { return n_rows_; }
    std::size_t n_columns() const noexcept { return schema_.n_columns(); }

    const Cell& at(std::size_t row, std::size_t col) const { return cells_[row * n_columns() + col]; }
    // Checks the cell against the column kind and category range.
    void set(std::size_t row, std::size_t col, Cell cell);

    std::span<const Cell> row(std::size_t r) const { return {cells_.data() + r * n_columns(), n_columns()}; }

    Table select_rows(std::span<const std::size_t> rows) const;

    // Same schema, same shape, every cell bitwise identical.
    bool identical(const Table& other) const noexcept;

private:
    void check_cell(std::size_t col, const Cell& cell) const;

    FeatureSchema schema_;
    std::size_t n_rows_ = 0;
    std::vector<Cell> cells_;
};

struct CsvOptions {
    std::string target;
    Task task = Task::classification;
    // When set, column kinds and category lists are fixed; unknown
    // categories are errors. Otherwise kinds are inferred and categories
    // are collected in order of first appearance.
    std::optional<FeatureSchema> schema_hint;
};

// RFC 4180 record reader (quoted fields, doubled quotes, CRLF or LF).
std::vector<std::vector<std::string>> read_csv_records(std::istream& in);

Table parse_csv(std::istream& in, const CsvOptions& options);
Table load_csv(const std::filesystem::path& path, const CsvOptions& options);

// Missing cells are written as empty fields; numbers in shortest
// round-trip form.
void write_csv(const Table& table, std::ostream& out);
void save_csv(const Table& table, const std::filesystem::path& path);

std::string format_double(double v);

// One shuffled 60/20/20 partition of row indices.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
};

std::vector<Split> make_bootstrap_splits(std::size_t n_rows, std::size_t k, std::uint64_t seed);

struct EncodedSlice {
    std::size_t offset = 0;
    std::size_t width = 0;
};

struct EncodedMatrix {
    Matrix x;
    // Class index (classification) or standardized target (regression).
    std::vector<double> y;
    // Per input column, its contiguous slice of encoded columns.
    std::vector<EncodedSlice> column_map;
    // Per encoded column, the input index it came from.
    std::vector<std::size_t> feature_of_encoded;
    std::size_t n_classes = 0;  // 0 for regression
};

struct NumericStats {
    double median = 0.0;
    double mean = 0.0;
    double std = 0.0;
};

struct CategoricalStats {
    std::uint32_t mode = 0;
    std::size_t n_categories = 0;
};

using ColumnStats = std::variant<NumericStats, CategoricalStats>;

// Imputation, standardization and one-hot layout learned from a training
// partition.
class Preprocessor {
public:
    static Preprocessor fit(const Table& train);

    EncodedMatrix apply(const Table& rows) const;

    const FeatureSchema& schema() const noexcept { return schema_; }
    const std::vector<ColumnStats>& stats() const noexcept { return stats_; }
    std::size_t encoded_width() const noexcept { return width_; }
    double target_mean() const noexcept { return target_mean_; }
    double target_scale() const noexcept { return target_scale_; }

private:
    FeatureSchema schema_;
    std::vector<ColumnStats> stats_;  // per input column
    std::size_t width_ = 0;
    double target_mean_ = 0.0;
    double target_scale_ = 1.0;
};

inline Preprocessor fit_preprocessor(const Table& train) { return Preprocessor::fit(train); }
inline EncodedMatrix apply_preprocessor(const Preprocessor& p, const Table& rows) {
    return p.apply(rows);
}

// Shared statistics helpers (sample std, n-1 denominator).
double median_of(std::vector<double> values);
// Linear-interpolation quantile (the usual "type 7" definition).
double quantile_of(std::vector<double> values, double q);
double sample_std(std::span<const double> values);

std::string to_string(ColumnKind kind);
std::string to_string(Task task);
Task parse_task(const std::string& text);

}  // namespace quail::data
