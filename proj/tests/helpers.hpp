#pragma once

#include <string>
#include <vector>

#include "quail/data.hpp"
#include "quail/rng.hpp"

namespace quail::testing {

// n rows of `numeric` standard-normal columns, `categorical` columns with
// `k` uniformly drawn categories, and a regression target.
inline data::Table synthetic_table(std::size_t n, std::size_t numeric, std::size_t categorical, std::size_t k,
                                   std::uint64_t seed) {
    std::vector<data::ColumnSpec> cols;
    for (std::size_t j = 0; j < numeric; ++j) cols.push_back({"x" + std::to_string(j), data::ColumnKind::numeric, {}});
    for (std::size_t j = 0; j < categorical; ++j) {
        std::vector<std::string> cats;
        for (std::size_t c = 0; c < k; ++c) cats.push_back("c" + std::to_string(c));
        cols.push_back({"k" + std::to_string(j), data::ColumnKind::categorical, cats});
    }
    cols.push_back({"y", data::ColumnKind::numeric, {}});
    data::FeatureSchema schema(cols, "y", data::Task::regression);
    std::vector<data::Cell> cells;
    cells.reserve(n * cols.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < numeric; ++j) cells.push_back(data::Cell::num(rng.normal()));
        for (std::size_t j = 0; j < categorical; ++j)
            cells.push_back(data::Cell::cat(static_cast<std::uint32_t>(rng.below(k))));
        cells.push_back(data::Cell::num(rng.normal()));
    }
    return data::Table(schema, std::move(cells));
}

inline std::string data_path(const std::string& name) { return std::string(QUAIL_TEST_DATA_DIR) + "/" + name; }

}  // namespace quail::testing
