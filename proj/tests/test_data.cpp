#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "quail/data.hpp"
#include "quail/error.hpp"

using namespace quail;
using namespace quail::data;

namespace {

Table parse(const std::string& text, const std::string& target, Task task = Task::regression,
            std::optional<FeatureSchema> hint = std::nullopt) {
    std::istringstream in(text);
    return parse_csv(in, {target, task, std::move(hint)});
}

FeatureSchema two_column_schema() {
    return FeatureSchema({{"x", ColumnKind::numeric, {}}, {"c", ColumnKind::categorical, {"a", "b"}},
                          {"y", ColumnKind::numeric, {}}},
                         "y", Task::regression);
}

}  // namespace

TEST(Csv, EmptyNumericFieldBecomesMissing) {
    const auto t = parse("x,y\n1,2\n,3\n4,5\n", "y");
    ASSERT_EQ(t.n_rows(), 3u);
    EXPECT_TRUE(t.at(1, 0).is_missing());
    EXPECT_EQ(t.at(0, 0).number(), 1.0);
    EXPECT_EQ(t.at(2, 1).number(), 5.0);
    int missing = 0;
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 2; ++c) missing += t.at(r, c).is_missing();
    EXPECT_EQ(missing, 1);
}

TEST(Csv, MissingTokens) {
    const auto t = parse("x,y\nNaN,1\n?,2\n,3\n7,4\n", "y");
    EXPECT_TRUE(t.at(0, 0).is_missing());
    EXPECT_TRUE(t.at(1, 0).is_missing());
    EXPECT_TRUE(t.at(2, 0).is_missing());
    EXPECT_EQ(t.schema().column(0).kind, ColumnKind::numeric);
}

TEST(Csv, HeaderOnlyGivesEmptyTable) {
    const auto t = parse("x,y\n", "y");
    EXPECT_EQ(t.n_rows(), 0u);
    EXPECT_EQ(t.n_columns(), 2u);
}

TEST(Csv, UnknownCategoryUnderHintIsError) {
    FeatureSchema hint({{"c", ColumnKind::categorical, {"a", "b", "c"}}, {"y", ColumnKind::numeric, {}}}, "y",
                       Task::regression);
    EXPECT_THROW(parse("c,y\na,1\nd,2\n", "y", Task::regression, hint), ParseError);
    EXPECT_NO_THROW(parse("c,y\na,1\nc,2\n", "y", Task::regression, hint));
}

TEST(Csv, CategoriesExtendInFirstAppearanceOrder) {
    const auto t = parse("c,y\nz,1\na,2\nz,3\nm,4\n", "y");
    const auto& cats = t.schema().column(0).categories;
    EXPECT_EQ(cats, (std::vector<std::string>{"z", "a", "m"}));
    EXPECT_EQ(t.at(3, 0).category(), 2u);
}

TEST(Csv, MalformedRowLength) { EXPECT_THROW(parse("x,y\n1,2\n3\n", "y"), ParseError); }

TEST(Csv, UnparseableNumberUnderHint) {
    FeatureSchema hint({{"x", ColumnKind::numeric, {}}, {"y", ColumnKind::numeric, {}}}, "y", Task::regression);
    EXPECT_THROW(parse("x,y\n1,2\nabc,3\n", "y", Task::regression, hint), ParseError);
}

TEST(Csv, QuotedFieldsPerRfc4180) {
    std::istringstream in("a,b\r\n\"x,1\",\"he said \"\"hi\"\"\"\r\n\"multi\nline\",2\r\n");
    const auto recs = read_csv_records(in);
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_EQ(recs[1][0], "x,1");
    EXPECT_EQ(recs[1][1], "he said \"hi\"");
    EXPECT_EQ(recs[2][0], "multi\nline");
}

TEST(Csv, MissingTargetColumnIsError) { EXPECT_THROW(parse("x,y\n1,2\n", "nope"), ParseError); }

TEST(Csv, ClassificationTargetIsCategorical) {
    const auto t = parse("x,label\n1,0\n2,1\n3,0\n", "label", Task::classification);
    EXPECT_EQ(t.schema().target().kind, ColumnKind::categorical);
    EXPECT_EQ(t.schema().target().categories, (std::vector<std::string>{"0", "1"}));
}

TEST(Csv, WriteReadRoundTripIsExact) {
    const auto t = quail::testing::synthetic_table(50, 3, 2, 4, 11);
    std::ostringstream out;
    write_csv(t, out);
    const auto back = parse(out.str(), "y", Task::regression, t.schema());
    EXPECT_TRUE(back.identical(t));
}

TEST(Csv, BundledDatasetsLoad) {
    const auto iris = load_csv(quail::testing::data_path("iris.csv"), {"species", Task::classification, std::nullopt});
    EXPECT_EQ(iris.n_rows(), 150u);
    EXPECT_EQ(iris.schema().target().categories.size(), 3u);
    const auto mpg = load_csv(quail::testing::data_path("auto_mpg.csv"), {"mpg", Task::regression, std::nullopt});
    EXPECT_EQ(mpg.n_rows(), 398u);
    std::size_t missing = 0;
    for (std::size_t r = 0; r < mpg.n_rows(); ++r)
        for (std::size_t c = 0; c < mpg.n_columns(); ++c) missing += mpg.at(r, c).is_missing();
    EXPECT_GT(missing, 0u);
}

TEST(Schema, Invariants) {
    EXPECT_THROW(FeatureSchema({{"x", ColumnKind::numeric, {}}, {"x", ColumnKind::numeric, {}}}, "x",
                               Task::regression),
                 ContractError);
    EXPECT_THROW(FeatureSchema({{"c", ColumnKind::categorical, {}}, {"y", ColumnKind::numeric, {}}}, "y",
                               Task::regression),
                 ContractError);
    EXPECT_THROW(FeatureSchema({{"c", ColumnKind::categorical, {"a", "a"}}, {"y", ColumnKind::numeric, {}}}, "y",
                               Task::regression),
                 ContractError);
    EXPECT_THROW(FeatureSchema({{"x", ColumnKind::numeric, {}}}, "y", Task::regression), ContractError);
}

TEST(TableCells, RejectsNonFiniteAndOutOfRangeCategories) {
    Table t(two_column_schema(), 1);
    EXPECT_THROW(t.set(0, 0, Cell::num(std::nan(""))), ContractError);
    EXPECT_THROW(t.set(0, 1, Cell::cat(2)), ContractError);
    EXPECT_NO_THROW(t.set(0, 1, Cell::missing()));
}

TEST(Splits, TenRowsGiveSixTwoTwo) {
    const auto s = make_bootstrap_splits(10, 1, 0);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].train.size(), 6u);
    EXPECT_EQ(s[0].validation.size(), 2u);
    EXPECT_EQ(s[0].test.size(), 2u);
}

TEST(Splits, Deterministic) {
    const auto a = make_bootstrap_splits(100, 5, 7);
    const auto b = make_bootstrap_splits(100, 5, 7);
    ASSERT_EQ(a.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(a[i].train, b[i].train);
        EXPECT_EQ(a[i].validation, b[i].validation);
        EXPECT_EQ(a[i].test, b[i].test);
    }
    EXPECT_NE(a[0].train, a[1].train);
}

TEST(Splits, TooFewRows) {
    EXPECT_THROW(make_bootstrap_splits(4, 1, 0), ContractError);
    EXPECT_THROW(make_bootstrap_splits(100, 0, 0), ContractError);
}

TEST(Splits, DisjointAndProportional) {
    for (std::size_t n : {10u, 11u, 57u, 150u, 398u}) {
        for (const auto& s : make_bootstrap_splits(n, 3, n)) {
            std::set<std::size_t> all;
            all.insert(s.train.begin(), s.train.end());
            all.insert(s.validation.begin(), s.validation.end());
            all.insert(s.test.begin(), s.test.end());
            EXPECT_EQ(all.size(), s.train.size() + s.validation.size() + s.test.size());
            EXPECT_LE(*all.rbegin(), n - 1);
            EXPECT_LE(std::abs(static_cast<double>(s.train.size()) - 0.6 * n), 1.0);
            EXPECT_LE(std::abs(static_cast<double>(s.validation.size()) - 0.2 * n), 1.0);
            EXPECT_LE(std::abs(static_cast<double>(s.test.size()) - 0.2 * n), 1.0);
        }
    }
}

TEST(Preprocess, HandComputedNumericStats) {
    Table t(two_column_schema(), 3);
    t.set(0, 0, Cell::num(1));
    t.set(2, 0, Cell::num(3));
    for (std::size_t r = 0; r < 3; ++r) {
        t.set(r, 1, Cell::cat(0));
        t.set(r, 2, Cell::num(static_cast<double>(r)));
    }
    const auto p = fit_preprocessor(t);
    const auto& s = std::get<NumericStats>(p.stats()[0]);
    EXPECT_DOUBLE_EQ(s.median, 2.0);
    EXPECT_DOUBLE_EQ(s.mean, 2.0);
    EXPECT_DOUBLE_EQ(s.std, 1.0);  // sample std of {1,2,3}
    const auto enc = p.apply(t);
    EXPECT_DOUBLE_EQ(enc.x(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(enc.x(1, 0), 0.0);
    EXPECT_DOUBLE_EQ(enc.x(2, 0), 1.0);
}

TEST(Preprocess, CategoricalMode) {
    FeatureSchema schema({{"c", ColumnKind::categorical, {"a", "b"}}, {"y", ColumnKind::numeric, {}}}, "y",
                         Task::regression);
    Table t(schema, 4);
    t.set(0, 0, Cell::cat(0));
    t.set(1, 0, Cell::cat(0));
    t.set(2, 0, Cell::cat(1));
    for (std::size_t r = 0; r < 4; ++r) t.set(r, 1, Cell::num(static_cast<double>(r)));
    const auto p = fit_preprocessor(t);
    EXPECT_EQ(std::get<CategoricalStats>(p.stats()[0]).mode, 0u);
    const auto enc = p.apply(t);
    EXPECT_EQ(enc.x(3, 0), 1.0);  // imputed to a
    EXPECT_EQ(enc.x(3, 1), 0.0);
}

TEST(Preprocess, AllMissingColumnIsError) {
    Table t(two_column_schema(), 3);
    for (std::size_t r = 0; r < 3; ++r) {
        t.set(r, 1, Cell::cat(0));
        t.set(r, 2, Cell::num(1));
    }
    EXPECT_THROW(fit_preprocessor(t), ContractError);
}

TEST(Preprocess, MissingRowEncodesToImputedValues) {
    // Numeric train column {0, 1, 2} has median 1, mean 1, std 1; the
    // categorical column has categories {a, b}, mode b.
    Table t(two_column_schema(), 3);
    for (std::size_t r = 0; r < 3; ++r) {
        t.set(r, 0, Cell::num(static_cast<double>(r)));
        t.set(r, 1, Cell::cat(r == 0 ? 0 : 1));
        t.set(r, 2, Cell::num(0));
    }
    const auto p = fit_preprocessor(t);
    Table row(two_column_schema(), 1);
    row.set(0, 1, Cell::cat(1));
    row.set(0, 2, Cell::num(0));
    const auto enc = p.apply(row);
    ASSERT_EQ(enc.x.cols(), 3u);
    EXPECT_EQ(enc.x(0, 0), 0.0);
    EXPECT_EQ(enc.x(0, 1), 0.0);
    EXPECT_EQ(enc.x(0, 2), 1.0);
    EXPECT_EQ(enc.feature_of_encoded, (std::vector<std::size_t>{0, 1, 1}));
}

TEST(Preprocess, UnseenCategoryIsError) {
    FeatureSchema small({{"c", ColumnKind::categorical, {"a"}}, {"y", ColumnKind::numeric, {}}}, "y",
                        Task::regression);
    FeatureSchema big({{"c", ColumnKind::categorical, {"a", "b"}}, {"y", ColumnKind::numeric, {}}}, "y",
                      Task::regression);
    Table train(small, 2);
    for (std::size_t r = 0; r < 2; ++r) {
        train.set(r, 0, Cell::cat(0));
        train.set(r, 1, Cell::num(static_cast<double>(r)));
    }
    Table other(big, 1);
    other.set(0, 0, Cell::cat(1));
    other.set(0, 1, Cell::num(0));
    EXPECT_THROW(fit_preprocessor(train).apply(other), ContractError);
}

TEST(Preprocess, ZeroVarianceColumnEncodesToZero) {
    Table t(two_column_schema(), 4);
    for (std::size_t r = 0; r < 4; ++r) {
        t.set(r, 0, Cell::num(5.0));
        t.set(r, 1, Cell::cat(0));
        t.set(r, 2, Cell::num(static_cast<double>(r)));
    }
    const auto enc = fit_preprocessor(t).apply(t);
    for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(enc.x(r, 0), 0.0);
}

TEST(Preprocess, RoundTripInvariants) {
    auto t = quail::testing::synthetic_table(300, 4, 2, 3, 5);
    Rng rng(9);
    for (std::size_t r = 0; r < t.n_rows(); ++r)
        for (std::size_t c = 0; c < 6; ++c)
            if (rng.bernoulli(0.1)) t.set(r, c, Cell::missing());
    const auto p = fit_preprocessor(t);
    const auto enc = p.apply(t);
    ASSERT_EQ(enc.x.rows(), 300u);
    for (double v : enc.x.values()) EXPECT_TRUE(std::isfinite(v));
    for (std::size_t j = 0; j < 4; ++j) {
        std::vector<double> col(enc.x.rows());
        for (std::size_t r = 0; r < enc.x.rows(); ++r) col[r] = enc.x(r, j);
        const double mean = std::accumulate(col.begin(), col.end(), 0.0) / col.size();
        EXPECT_NEAR(mean, 0.0, 1e-9);
        EXPECT_NEAR(sample_std(col), 1.0, 1e-6);
    }
    for (std::size_t k = 4; k < 6; ++k) {
        const auto slice = enc.column_map[k];
        EXPECT_EQ(slice.width, 3u);
        for (std::size_t r = 0; r < enc.x.rows(); ++r) {
            double sum = 0.0;
            for (std::size_t w = 0; w < slice.width; ++w) {
                const double v = enc.x(r, slice.offset + w);
                EXPECT_TRUE(v == 0.0 || v == 1.0);
                sum += v;
            }
            EXPECT_EQ(sum, 1.0);
        }
    }
}

TEST(Preprocess, StatisticsInvariantToRowOrder) {
    auto t = quail::testing::synthetic_table(200, 3, 1, 4, 21);
    Rng rng(2);
    for (std::size_t r = 0; r < t.n_rows(); ++r)
        if (rng.bernoulli(0.2)) t.set(r, 0, Cell::missing());
    std::vector<std::size_t> order(t.n_rows());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const auto a = fit_preprocessor(t);
    const auto b = fit_preprocessor(t.select_rows(order));
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& sa = std::get<NumericStats>(a.stats()[k]);
        const auto& sb = std::get<NumericStats>(b.stats()[k]);
        EXPECT_EQ(sa.median, sb.median);
        EXPECT_EQ(sa.mean, sb.mean);
        EXPECT_EQ(sa.std, sb.std);
    }
    EXPECT_EQ(std::get<CategoricalStats>(a.stats()[3]).mode, std::get<CategoricalStats>(b.stats()[3]).mode);
    EXPECT_EQ(a.target_mean(), b.target_mean());
    EXPECT_EQ(a.target_scale(), b.target_scale());
}

TEST(Stats, QuantileAndMedian) {
    EXPECT_DOUBLE_EQ(median_of({3, 1, 2}), 2.0);
    EXPECT_DOUBLE_EQ(median_of({4, 1, 2, 3}), 2.5);
    EXPECT_DOUBLE_EQ(quantile_of({1, 2, 3, 4, 5}, 0.25), 2.0);
    EXPECT_DOUBLE_EQ(quantile_of({1, 2, 3, 4}, 0.75), 3.25);
}
