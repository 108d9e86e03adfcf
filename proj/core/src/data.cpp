#include "quail/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "quail/error.hpp"
#include "quail/rng.hpp"

namespace quail::data {

// ---------------------------------------------------------------------------
// Schema / cells / table

FeatureSchema::FeatureSchema(std::vector<ColumnSpec> columns, const std::string& target, Task task)
    : columns_(std::move(columns)), task_(task) {
    std::set<std::string> names;
    bool found = false;
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        const auto& c = columns_[i];
        if (!names.insert(c.name).second) throw ContractError("duplicate column name '" + c.name + "'");
        if (c.kind == ColumnKind::categorical) {
            if (c.categories.empty())
                throw ContractError("categorical column '" + c.name + "' has no categories");
            std::set<std::string> seen(c.categories.begin(), c.categories.end());
            if (seen.size() != c.categories.size())
                throw ContractError("categorical column '" + c.name + "' has duplicate categories");
        } else if (!c.categories.empty()) {
            throw ContractError("numeric column '" + c.name + "' lists categories");
        }
        if (c.name == target) {
            target_ = i;
            found = true;
        } else {
            inputs_.push_back(i);
        }
    }
    if (!found) throw ContractError("target column '" + target + "' not in schema");
    const auto kind = columns_[target_].kind;
    if (task == Task::classification && kind != ColumnKind::categorical)
        throw ContractError("classification target '" + target + "' must be categorical");
    if (task == Task::regression && kind != ColumnKind::numeric)
        throw ContractError("regression target '" + target + "' must be numeric");
}

std::optional<std::size_t> FeatureSchema::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
        if (columns_[i].name == name) return i;
    return std::nullopt;
}

bool Cell::identical(const Cell& other) const noexcept {
    return tag_ == other.tag_ && cat_ == other.cat_ &&
           std::bit_cast<std::uint64_t>(num_) == std::bit_cast<std::uint64_t>(other.num_);
}

Table::Table(FeatureSchema schema, std::size_t n_rows)
    : schema_(std::move(schema)), n_rows_(n_rows), cells_(n_rows * schema_.n_columns()) {}

Table::Table(FeatureSchema schema, std::vector<Cell> cells)
    : schema_(std::move(schema)), cells_(std::move(cells)) {
    const auto cols = schema_.n_columns();
    if (cols == 0 || cells_.size() % cols != 0)
        throw ShapeError("Table: cell count is not a multiple of the column count");
    n_rows_ = cells_.size() / cols;
    for (std::size_t i = 0; i < cells_.size(); ++i) check_cell(i % cols, cells_[i]);
}

void Table::check_cell(std::size_t col, const Cell& cell) const {
    const auto& spec = schema_.column(col);
    switch (cell.tag()) {
        case Cell::Tag::missing:
            return;
        case Cell::Tag::number:
            if (spec.kind != ColumnKind::numeric)
                throw ContractError("numeric value in categorical column '" + spec.name + "'");
            if (!std::isfinite(cell.number()))
                throw ContractError("non-finite value in column '" + spec.name + "'");
            return;
        case Cell::Tag::category:
            if (spec.kind != ColumnKind::categorical)
                throw ContractError("category in numeric column '" + spec.name + "'");
            if (cell.category() >= spec.categories.size())
                throw ContractError("category index out of range in column '" + spec.name + "'");
            return;
    }
}

void Table::set(std::size_t row, std::size_t col, Cell cell) {
    check_cell(col, cell);
    cells_[row * n_columns() + col] = cell;
}

Table Table::select_rows(std::span<const std::size_t> rows) const {
    Table out(schema_, rows.size());
    const auto cols = n_columns();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= n_rows_) throw ContractError("select_rows: row index out of range");
        std::copy_n(cells_.begin() + static_cast<std::ptrdiff_t>(rows[i] * cols), cols,
                    out.cells_.begin() + static_cast<std::ptrdiff_t>(i * cols));
    }
    return out;
}

bool Table::identical(const Table& other) const noexcept {
    if (!(schema_ == other.schema_) || n_rows_ != other.n_rows_) return false;
    for (std::size_t i = 0; i < cells_.size(); ++i)
        if (!cells_[i].identical(other.cells_[i])) return false;
    return true;
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::vector<std::string>> read_csv_records(std::istream& in) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;  // anything seen for the current record
    char ch;
    auto end_record = [&] {
        if (!field_started && record.empty()) return;  // blank line
        record.push_back(std::move(field));
        field.clear();
        records.push_back(std::move(record));
        record.clear();
        field_started = false;
    };
    while (in.get(ch)) {
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get(ch);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
            case '"':
                in_quotes = true;
                field_started = true;
                break;
            case ',':
                record.push_back(std::move(field));
                field.clear();
                field_started = true;
                break;
            case '\r':
                if (in.peek() == '\n') in.get(ch);
                end_record();
                break;
            case '\n':
                end_record();
                break;
            default:
                field.push_back(ch);
                field_started = true;
        }
    }
    if (in_quotes) throw ParseError("CSV: unterminated quoted field");
    if (field_started || !field.empty()) end_record();
    return records;
}

namespace {

bool is_missing_token(const std::string& s) { return s.empty() || s == "NaN" || s == "?"; }

std::optional<double> parse_number(const std::string& s) {
    // Tolerate surrounding spaces, which are common in UCI exports.
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    if (b == std::string::npos) return std::nullopt;
    const char* first = s.data() + b;
    const char* last = s.data() + e + 1;
    if (*first == '+') ++first;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

Table parse_csv(std::istream& in, const CsvOptions& options) {
    auto records = read_csv_records(in);
    if (records.empty()) throw ParseError("CSV: missing header row");
    const auto header = records.front();
    const std::size_t n_cols = header.size();
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != n_cols)
            throw ParseError("CSV: row " + std::to_string(r + 1) + " has " +
                             std::to_string(records[r].size()) + " fields, expected " +
                             std::to_string(n_cols));
    }
    const std::size_t n_rows = records.size() - 1;

    std::vector<ColumnSpec> specs(n_cols);
    if (options.schema_hint) {
        const auto& hint = *options.schema_hint;
        if (hint.n_columns() != n_cols) throw ParseError("CSV: header does not match schema hint");
        for (std::size_t c = 0; c < n_cols; ++c) {
            if (hint.column(c).name != header[c])
                throw ParseError("CSV: column '" + header[c] + "' does not match schema hint '" +
                                 hint.column(c).name + "'");
            specs[c] = hint.column(c);
        }
        if (hint.target().name != options.target || hint.task() != options.task)
            throw ParseError("CSV: target does not match schema hint");
    } else {
        for (std::size_t c = 0; c < n_cols; ++c) {
            specs[c].name = header[c];
            bool numeric = !(header[c] == options.target && options.task == Task::classification);
            for (std::size_t r = 1; numeric && r < records.size(); ++r) {
                const auto& tok = records[r][c];
                if (!is_missing_token(tok) && !parse_number(tok)) numeric = false;
            }
            specs[c].kind = numeric ? ColumnKind::numeric : ColumnKind::categorical;
        }
    }

    const auto target_it = std::find(header.begin(), header.end(), options.target);
    if (target_it == header.end()) throw ParseError("CSV: target column '" + options.target + "' not found");
    const auto target_col = static_cast<std::size_t>(target_it - header.begin());

    std::vector<Cell> cells;
    cells.reserve(n_rows * n_cols);
    std::vector<std::map<std::string, std::uint32_t>> lookup(n_cols);
    for (std::size_t c = 0; c < n_cols; ++c)
        for (std::uint32_t k = 0; k < specs[c].categories.size(); ++k) lookup[c][specs[c].categories[k]] = k;

    for (std::size_t r = 1; r < records.size(); ++r) {
        for (std::size_t c = 0; c < n_cols; ++c) {
            const auto& tok = records[r][c];
            if (is_missing_token(tok)) {
                if (c == target_col)
                    throw ParseError("CSV: missing target value in row " + std::to_string(r + 1));
                cells.push_back(Cell::missing());
                continue;
            }
            if (specs[c].kind == ColumnKind::numeric) {
                auto v = parse_number(tok);
                if (!v)
                    throw ParseError("CSV: unparseable number '" + tok + "' in column '" + header[c] +
                                     "', row " + std::to_string(r + 1));
                cells.push_back(Cell::num(*v));
            } else {
                auto it = lookup[c].find(tok);
                if (it == lookup[c].end()) {
                    if (options.schema_hint)
                        throw ParseError("CSV: unknown category '" + tok + "' in column '" + header[c] + "'");
                    const auto idx = static_cast<std::uint32_t>(specs[c].categories.size());
                    specs[c].categories.push_back(tok);
                    it = lookup[c].emplace(tok, idx).first;
                }
                cells.push_back(Cell::cat(it->second));
            }
        }
    }

    // A categorical column with no observed values still needs a category.
    for (auto& s : specs)
        if (s.kind == ColumnKind::categorical && s.categories.empty()) s.kind = ColumnKind::numeric;

    FeatureSchema schema(std::move(specs), options.target, options.task);
    if (n_rows == 0) return Table(std::move(schema), std::size_t{0});
    return Table(std::move(schema), std::move(cells));
}

Table load_csv(const std::filesystem::path& path, const CsvOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    return parse_csv(in, options);
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

namespace {

void write_field(std::ostream& out, const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) {
        out << s;
        return;
    }
    out << '"';
    for (char ch : s) {
        if (ch == '"') out << '"';
        out << ch;
    }
    out << '"';
}

}  // namespace

void write_csv(const Table& table, std::ostream& out) {
    const auto& schema = table.schema();
    for (std::size_t c = 0; c < schema.n_columns(); ++c) {
        if (c) out << ',';
        write_field(out, schema.column(c).name);
    }
    out << '\n';
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        for (std::size_t c = 0; c < schema.n_columns(); ++c) {
            if (c) out << ',';
            const auto& cell = table.at(r, c);
            if (cell.is_num())
                out << format_double(cell.number());
            else if (cell.is_cat())
                write_field(out, schema.column(c).categories[cell.category()]);
        }
        out << '\n';
    }
}

void save_csv(const Table& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path.string() + "'");
    write_csv(table, out);
}

// ---------------------------------------------------------------------------
// Splits

std::vector<Split> make_bootstrap_splits(std::size_t n_rows, std::size_t k, std::uint64_t seed) {
    if (k < 1) throw ContractError("make_bootstrap_splits: k must be >= 1");
    if (n_rows < 10)
        throw ContractError("make_bootstrap_splits: need at least 10 rows, got " + std::to_string(n_rows));
    const auto n = static_cast<double>(n_rows);
    const auto n_train = static_cast<std::size_t>(std::llround(0.6 * n));
    const auto n_val = static_cast<std::size_t>(std::llround(0.2 * n));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= n_rows)
        throw ContractError("make_bootstrap_splits: too few rows for a 60/20/20 partition");

    std::vector<Split> splits;
    splits.reserve(k);
    for (std::size_t s = 0; s < k; ++s) {
        Split split;
        split.seed = derive_seed(seed, {tag("split"), s});
        std::vector<std::size_t> idx(n_rows);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        Rng rng(split.seed);
        rng.shuffle(idx);
        split.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        split.validation.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                                idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        split.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
        splits.push_back(std::move(split));
    }
    return splits;
}

// ---------------------------------------------------------------------------
// Statistics

double median_of(std::vector<double> values) {
    if (values.empty()) throw ContractError("median of empty set");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double quantile_of(std::vector<double> values, double q) {
    if (values.empty()) throw ContractError("quantile of empty set");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double sample_std(std::span<const double> values) {
    if (values.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

// ---------------------------------------------------------------------------
// Preprocessing

namespace {

// Mean and sample std of a sorted sequence; sorting first makes the result
// independent of the training row order.
std::pair<double, double> sorted_moments(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    return {mean, sd};
}

constexpr double kMinScale = 1e-12;

}  // namespace

Preprocessor Preprocessor::fit(const Table& train) {
    if (train.n_rows() == 0) throw ContractError("fit_preprocessor: empty training partition");
    Preprocessor p;
    p.schema_ = train.schema();
    const auto& schema = train.schema();
    for (auto col : schema.input_columns()) {
        const auto& spec = schema.column(col);
        if (spec.kind == ColumnKind::numeric) {
            std::vector<double> present;
            for (std::size_t r = 0; r < train.n_rows(); ++r)
                if (const auto& c = train.at(r, col); c.is_num()) present.push_back(c.number());
            if (present.empty())
                throw ContractError("fit_preprocessor: column '" + spec.name + "' is entirely missing");
            NumericStats st;
            st.median = median_of(present);
            std::vector<double> imputed;
            imputed.reserve(train.n_rows());
            for (std::size_t r = 0; r < train.n_rows(); ++r) {
                const auto& c = train.at(r, col);
                imputed.push_back(c.is_num() ? c.number() : st.median);
            }
            std::tie(st.mean, st.std) = sorted_moments(std::move(imputed));
            p.stats_.emplace_back(st);
            p.width_ += 1;
        } else {
            std::vector<std::size_t> counts(spec.categories.size(), 0);
            bool any = false;
            for (std::size_t r = 0; r < train.n_rows(); ++r)
                if (const auto& c = train.at(r, col); c.is_cat()) {
                    ++counts[c.category()];
                    any = true;
                }
            if (!any) throw ContractError("fit_preprocessor: column '" + spec.name + "' is entirely missing");
            CategoricalStats st;
            // max_element returns the first maximum: ties go to the lowest index.
            st.mode = static_cast<std::uint32_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
            st.n_categories = spec.categories.size();
            p.stats_.emplace_back(st);
            p.width_ += st.n_categories;
        }
    }
    if (schema.task() == Task::regression) {
        std::vector<double> ys;
        for (std::size_t r = 0; r < train.n_rows(); ++r) ys.push_back(train.at(r, schema.target_index()).number());
        auto [mean, sd] = sorted_moments(std::move(ys));
        p.target_mean_ = mean;
        p.target_scale_ = sd < kMinScale ? 1.0 : sd;
    }
    return p;
}

namespace {

bool compatible(const FeatureSchema& fitted, const FeatureSchema& rows) {
    if (fitted.n_columns() != rows.n_columns() || fitted.target_index() != rows.target_index() ||
        fitted.task() != rows.task())
        return false;
    for (std::size_t c = 0; c < fitted.n_columns(); ++c) {
        const auto& a = fitted.column(c);
        const auto& b = rows.column(c);
        if (a.name != b.name || a.kind != b.kind) return false;
        // The rows may carry an extended category list; the fitted prefix must agree.
        if (b.categories.size() < a.categories.size() ||
            !std::equal(a.categories.begin(), a.categories.end(), b.categories.begin()))
            return false;
    }
    return true;
}

}  // namespace

EncodedMatrix Preprocessor::apply(const Table& rows) const {
    if (!compatible(schema_, rows.schema())) throw ContractError("apply_preprocessor: schema mismatch");
    EncodedMatrix out;
    out.x = Matrix(rows.n_rows(), width_);
    out.y.resize(rows.n_rows());
    out.n_classes = schema_.task() == Task::classification ? schema_.target().categories.size() : 0;

    std::size_t offset = 0;
    const auto& inputs = schema_.input_columns();
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        const auto col = inputs[j];
        if (const auto* num = std::get_if<NumericStats>(&stats_[j])) {
            out.column_map.push_back({offset, 1});
            out.feature_of_encoded.push_back(j);
            for (std::size_t r = 0; r < rows.n_rows(); ++r) {
                const auto& c = rows.at(r, col);
                const double v = c.is_num() ? c.number() : num->median;
                out.x(r, offset) = num->std < kMinScale ? 0.0 : (v - num->mean) / num->std;
            }
            offset += 1;
        } else {
            const auto& cat = std::get<CategoricalStats>(stats_[j]);
            out.column_map.push_back({offset, cat.n_categories});
            for (std::size_t k = 0; k < cat.n_categories; ++k) out.feature_of_encoded.push_back(j);
            for (std::size_t r = 0; r < rows.n_rows(); ++r) {
                const auto& c = rows.at(r, col);
                const auto k = c.is_cat() ? c.category() : cat.mode;
                if (k >= cat.n_categories)
                    throw ContractError("apply_preprocessor: unseen category '" +
                                        rows.schema().column(col).categories[k] + "' in column '" +
                                        schema_.column(col).name + "'");
                out.x(r, offset + k) = 1.0;
            }
            offset += cat.n_categories;
        }
    }

    const auto t = schema_.target_index();
    for (std::size_t r = 0; r < rows.n_rows(); ++r) {
        const auto& c = rows.at(r, t);
        if (c.is_missing()) throw ContractError("apply_preprocessor: missing target");
        if (schema_.task() == Task::classification) {
            if (c.category() >= out.n_classes) throw ContractError("apply_preprocessor: unseen target class");
            out.y[r] = static_cast<double>(c.category());
        } else {
            out.y[r] = (c.number() - target_mean_) / target_scale_;
        }
    }
    return out;
}

std::string to_string(ColumnKind kind) { return kind == ColumnKind::numeric ? "numeric" : "categorical"; }

std::string to_string(Task task) { return task == Task::classification ? "classification" : "regression"; }

Task parse_task(const std::string& text) {
    if (text == "classification") return Task::classification;
    if (text == "regression") return Task::regression;
    throw ContractError("unknown task '" + text + "'");
}

}  // namespace quail::data
