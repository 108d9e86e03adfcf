#include <benchmark/benchmark.h>

#include <vector>

#include "quail/corrupt.hpp"
#include "quail/data.hpp"
#include "quail/gating.hpp"
#include "quail/nn.hpp"
#include "quail/rng.hpp"

using namespace quail;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(r, c);
    for (auto& v : m.values()) v = rng.normal();
    return m;
}

data::Table synthetic_table(std::size_t n, std::size_t numeric, std::size_t categorical) {
    std::vector<data::ColumnSpec> cols;
    for (std::size_t j = 0; j < numeric; ++j) cols.push_back({"x" + std::to_string(j), data::ColumnKind::numeric, {}});
    for (std::size_t j = 0; j < categorical; ++j)
        cols.push_back({"c" + std::to_string(j), data::ColumnKind::categorical, {"a", "b", "c", "d"}});
    cols.push_back({"y", data::ColumnKind::numeric, {}});
    data::FeatureSchema schema(cols, "y", data::Task::regression);
    data::Table t(schema, n);
    Rng rng(7);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < numeric; ++j) t.set(i, j, data::Cell::num(rng.normal()));
        for (std::size_t j = 0; j < categorical; ++j) t.set(i, numeric + j, data::Cell::cat(static_cast<std::uint32_t>(rng.below(4))));
        t.set(i, numeric + categorical, data::Cell::num(rng.normal()));
    }
    return t;
}

}  // namespace

static void BM_ForwardBackward(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const auto width = static_cast<std::size_t>(state.range(1));
    const std::vector<std::size_t> hidden{width, width};
    const auto model = nn::make_mlp(32, hidden, 3, nn::Activation::relu, 0.1, 1);
    const auto x = random_matrix(batch, 32, 2);
    std::vector<double> y(batch);
    for (std::size_t i = 0; i < batch; ++i) y[i] = static_cast<double>(i % 3);
    gating::GateState gates;
    gates.g.assign(32, 1.0);
    gates.anchor.assign(32, 0.9);
    gates.w.assign(32, 0.5);
    std::uint64_t seed = 0;
    for (auto _ : state) {
        auto r = gating::composite_loss_and_grad(model, &gates, 0.01, x, y, nn::LossKind::cross_entropy, true, ++seed);
        benchmark::DoNotOptimize(r.total);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ForwardBackward)->Args({64, 32})->Args({256, 64})->Args({256, 256});

static void BM_Corrupt(benchmark::State& state) {
    const auto mode = state.range(0) == 0 ? corrupt::Mode::ccar : corrupt::Mode::cnar;
    const auto table = synthetic_table(static_cast<std::size_t>(state.range(1)), 12, 4);
    std::uint64_t seed = 0;
    for (auto _ : state) {
        auto c = corrupt::apply_corruption(mode, table, ++seed);
        benchmark::DoNotOptimize(c.mask.total_corrupted());
    }
    state.SetItemsProcessed(state.iterations() * state.range(1) * 16);
}
BENCHMARK(BM_Corrupt)->Args({0, 10000})->Args({1, 10000});

static void BM_Preprocess(benchmark::State& state) {
    const auto table = synthetic_table(static_cast<std::size_t>(state.range(0)), 12, 4);
    for (auto _ : state) {
        auto enc = data::fit_preprocessor(table).apply(table);
        benchmark::DoNotOptimize(enc.x.size());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Preprocess)->Arg(10000);
BENCHMARK_MAIN();
