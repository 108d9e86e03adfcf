// Acceptance run: one PASS/FAIL line per criterion; exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "oracles.hpp"
#include "quail/corrupt.hpp"
#include "quail/data.hpp"
#include "quail/eval.hpp"
#include "quail/gating.hpp"
#include "quail/gradcheck.hpp"
#include "quail/ledger.hpp"
#include "quail/rng.hpp"
#include "quail/search.hpp"
#include "quail/train.hpp"

using namespace quail;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[1024];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double snr_db(double signal_sd, double noise_sd) { return 20.0 * std::log10(signal_sd / noise_sd); }

data::FeatureSchema numeric_schema(std::size_t d) {
    std::vector<data::ColumnSpec> cols;
    for (std::size_t j = 0; j < d; ++j) cols.push_back({"x" + std::to_string(j), data::ColumnKind::numeric, {}});
    cols.push_back({"y", data::ColumnKind::numeric, {}});
    return data::FeatureSchema(cols, "y", data::Task::regression);
}

data::Table numeric_table(std::size_t n, std::size_t d, const std::function<double(Rng&, std::size_t)>& draw,
                          std::uint64_t seed) {
    data::Table t(numeric_schema(d), n);
    Rng rng(seed);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < d; ++j) t.set(r, j, data::Cell::num(draw(rng, r)));
        t.set(r, d, data::Cell::num(0.0));
    }
    return t;
}

data::EncodedMatrix encoded(const Matrix& x, std::vector<double> y) {
    data::EncodedMatrix m;
    m.x = x;
    m.y = std::move(y);
    for (std::size_t j = 0; j < x.cols(); ++j) {
        m.column_map.push_back({j, 1});
        m.feature_of_encoded.push_back(j);
    }
    return m;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---------------------------------------------------------------------------

Verdict gradient_correctness() {
    const auto start = std::chrono::steady_clock::now();
    gradcheck::Options opt;
    opt.n_configs = 20;
    opt.seed = 1;
    const auto report = gradcheck::run(opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {report.passed() && secs < 60.0,
            fmt("%zu configs, %zu coordinates, max rel err %.2e, %zu failures, %.1fs", report.cases.size(),
                report.coordinates, report.max_rel_error, report.failures, secs)};
}

Verdict ccar_realization() {
    const std::size_t n = 100000, d = 16;
    const auto t = numeric_table(n, d, [](Rng& rng, std::size_t) { return rng.normal(); }, 1);
    const auto res = corrupt::apply_corruption(corrupt::Mode::ccar, t, 42);
    double worst_rate = 0.0, worst_snr = 0.0;
    bool missing_exact = true;
    for (std::size_t col = 0; col < d; ++col) {
        const auto m = res.mask.corrupted_in_column(col);
        worst_rate = std::max(worst_rate, std::abs(static_cast<double>(m) / n - res.plan.rate(col)));
        missing_exact &= res.mask.missing_in_column(col) == static_cast<std::size_t>(std::floor(0.3 * m));
        std::vector<double> signal, noise;
        for (std::size_t r = 0; r < n; ++r) {
            signal.push_back(t.at(r, col).number());
            if (res.mask.corrupted(r, col) && !res.mask.made_missing(r, col))
                noise.push_back(res.table.at(r, col).number() - t.at(r, col).number());
        }
        worst_snr = std::max(worst_snr, std::abs(snr_db(data::sample_std(signal), data::sample_std(noise)) - 20.0));
    }
    return {worst_rate <= 0.01 && worst_snr <= 0.5 && missing_exact,
            fmt("max |rate - tier| %.4f, max |SNR - 20 dB| %.3f dB, missing = floor(0.3m): %s", worst_rate,
                worst_snr, missing_exact ? "yes" : "no")};
}

Verdict cnar_properties() {
    const std::size_t n = 100000;
    std::string detail;
    bool ok = true;

    // Heteroscedastic noise, measured in min-max space with the
    // value-dependent scale divided out. A single column is severe (p = 0.4)
    // and has no propagation partner.
    {
        const auto t = numeric_table(n, 1, [](Rng& rng, std::size_t) { return rng.normal(3.0, 2.0); }, 2);
        const auto res = corrupt::apply_corruption(corrupt::Mode::cnar, t, 7);
        std::vector<double> values;
        for (std::size_t r = 0; r < n; ++r) values.push_back(t.at(r, 0).number());
        const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
        const double lo = *mn, range = *mx - *mn;
        std::vector<double> u, eps;
        for (std::size_t r = 0; r < n; ++r) {
            const double ur = (values[r] - lo) / range;
            u.push_back(ur);
            if (res.mask.corrupted(r, 0) && !res.mask.made_missing(r, 0))
                eps.push_back(((res.table.at(r, 0).number() - lo) / range - ur) / (1.0 + 3.0 * ur));
        }
        const double snr = snr_db(data::sample_std(u), data::sample_std(eps));
        ok &= std::abs(snr - 15.0) <= 0.5;
        detail += fmt("SNR %.2f dB", snr);
    }

    // MNAR at |x - median| = IQR with p = 0.4: a five-point column
    // {-2..2} has median 0 and IQR 2, so the +-2 cells sit exactly there.
    {
        const auto t = numeric_table(n, 1, [](Rng&, std::size_t r) { return static_cast<double>(r % 5) - 2.0; }, 3);
        const auto res = corrupt::apply_corruption(corrupt::Mode::cnar, t, 9);
        std::size_t at_iqr = 0, missing = 0;
        for (std::size_t r = 0; r < n; ++r) {
            if (std::abs(t.at(r, 0).number()) != 2.0) continue;
            ++at_iqr;
            missing += res.mask.made_missing(r, 0);
        }
        const double rate = static_cast<double>(missing) / static_cast<double>(at_iqr);
        ok &= std::abs(rate - 0.20) <= 0.01;
        detail += fmt(", MNAR rate at IQR %.4f", rate);
    }

    // Cyclic confusion share among value-corrupted categorical cells, k = 5.
    {
        std::vector<std::string> cats{"a", "b", "c", "d", "e"};
        data::FeatureSchema schema({{"k", data::ColumnKind::categorical, cats}, {"y", data::ColumnKind::numeric, {}}},
                                   "y", data::Task::regression);
        data::Table t(schema, n);
        Rng rng(4);
        for (std::size_t r = 0; r < n; ++r) {
            t.set(r, 0, data::Cell::cat(static_cast<std::uint32_t>(rng.below(5))));
            t.set(r, 1, data::Cell::num(0.0));
        }
        const auto res = corrupt::apply_corruption(corrupt::Mode::cnar, t, 5);
        const double cyc = static_cast<double>(res.cyclic_swaps[0]);
        const double total = cyc + static_cast<double>(res.fallback_swaps[0]);
        const double frac = cyc / total;
        ok &= total >= 10000 && std::abs(frac - 0.70) <= 0.01;
        detail += fmt(", cyclic fraction %.4f of %.0f", frac, total);
    }

    // Missing rate by decile of |x - median| is non-decreasing.
    {
        const auto t = numeric_table(n, 1, [](Rng& rng, std::size_t) { return rng.normal(); }, 6);
        const auto res = corrupt::apply_corruption(corrupt::Mode::cnar, t, 11);
        std::vector<double> values;
        for (std::size_t r = 0; r < n; ++r) values.push_back(t.at(r, 0).number());
        const double median = data::median_of(values);
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(values[a] - median) < std::abs(values[b] - median);
        });
        std::vector<double> rates;
        for (std::size_t dec = 0; dec < 10; ++dec) {
            std::size_t missing = 0;
            for (std::size_t i = dec * n / 10; i < (dec + 1) * n / 10; ++i) missing += res.mask.made_missing(order[i], 0);
            rates.push_back(static_cast<double>(missing) / static_cast<double>(n / 10));
        }
        const bool monotone = std::is_sorted(rates.begin(), rates.end());
        ok &= monotone;
        detail += fmt(", decile rates %.3f..%.3f %s", rates.front(), rates.back(),
                      monotone ? "non-decreasing" : "NOT monotone");
    }
    return {ok, detail};
}

Verdict quail_degeneracy() {
    const std::size_t n = 500, d = 10;
    Rng rng(21);
    Matrix x(n, d), xv(n / 5, d);
    std::vector<double> y(n), yv(n / 5);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += (x(i, j) = rng.normal()) * (j % 3 == 0 ? 1.0 : -0.25);
        y[i] = s + 0.1 * rng.normal();
    }
    for (std::size_t i = 0; i < n / 5; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += (xv(i, j) = rng.normal()) * (j % 3 == 0 ? 1.0 : -0.25);
        yv[i] = s + 0.1 * rng.normal();
    }
    const auto tr = encoded(x, y);
    const auto va = encoded(xv, yv);

    train::TrainConfig cfg;
    cfg.max_epochs = 50;
    cfg.patience = 1000;
    cfg.seed = 5;
    const auto model = nn::make_mlp(d, std::vector<std::size_t>{16, 16}, 1, nn::Activation::gelu, 0.2, 3);

    gating::GateConfig quail_cfg;  // quality init: q = 1 starts every gate at 1
    quail_cfg.lambda0 = 0.05;
    quail_cfg.phi = gating::Phi::exponential;
    quail_cfg.anchor_period = 5;
    gating::GateConfig plain;
    plain.init = gating::GateInit::ones;
    plain.lambda0 = 0.0;
    const auto a = train::train_model(model, gating::make_gate_state(quail_cfg, std::vector<double>(d, 1.0), 8), tr,
                                      va, {}, cfg);
    const auto b = train::train_model(model, gating::make_gate_state(plain, std::vector<double>(d, 0.3), 8), tr, va,
                                      {}, cfg);
    bool same = a.model == b.model && a.gates->g == b.gates->g && a.history.size() == b.history.size();
    for (std::size_t e = 0; same && e < a.history.size(); ++e)
        same = a.history[e].train_loss == b.history[e].train_loss && a.history[e].gates == b.history[e].gates &&
               a.history[e].val_metric == b.history[e].val_metric;
    return {same && a.history.size() == 50,
            fmt("%zu epochs, weights/gates/losses bit-identical: %s", a.history.size(), same ? "yes" : "no")};
}

// Mean |g - g_init| over the low-q and high-q halves, per seed.
struct Drift {
    std::size_t ordered = 0;  // seeds with low-q drift < high-q drift
    std::string per_seed;
};

Drift gate_drift(gating::GateInit init, gating::Phi phi, double lambda0) {
    const std::size_t n = 1000, d = 10;
    std::vector<double> q(d, 1.0);
    for (std::size_t j = 5; j < d; ++j) q[j] = 0.2;
    Drift out;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(derive_seed(seed, {tag("inertia-data")}));
        auto make = [&](std::size_t rows) {
            Matrix x(rows, d);
            std::vector<double> y(rows);
            for (std::size_t i = 0; i < rows; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    x(i, j) = rng.normal();
                    if (j < 5) s += x(i, j) * (1.0 + 0.25 * static_cast<double>(j));
                }
                y[i] = s + 0.1 * rng.normal();
            }
            return encoded(x, y);
        };
        const auto tr = make(n);
        const auto va = make(n / 4);
        train::TrainConfig cfg;
        cfg.max_epochs = 60;
        cfg.patience = 1000;
        cfg.seed = seed;
        const auto model = nn::make_mlp(d, std::vector<std::size_t>{16}, 1, nn::Activation::relu, 0.0, seed);
        gating::GateConfig gc;
        gc.init = init;
        gc.phi = phi;
        gc.lambda0 = lambda0;
        gc.anchor_period = 20;
        const auto start = gating::make_gate_state(gc, q, seed);
        const auto res = train::train_model(model, start, tr, va, {}, cfg);
        double high = 0.0, low = 0.0;
        for (std::size_t j = 0; j < d; ++j) (j < 5 ? high : low) += std::abs(res.gates->g[j] - start.g[j]) / 5.0;
        out.ordered += low < high;
        out.per_seed += fmt(" %.3f/%.3f", low, high);
    }
    return out;
}

// All gates start at 1 so the penalty is the only thing that treats the two
// halves differently; phi is the library default. The controls show how
// much of the ordering the penalty itself produces.
Verdict inertia_ordering() {
    const auto main = gate_drift(gating::GateInit::ones, gating::Phi::linear, 0.05);
    const auto no_penalty = gate_drift(gating::GateInit::ones, gating::Phi::linear, 0.0);
    const auto exp_phi = gate_drift(gating::GateInit::ones, gating::Phi::exponential, 0.05);
    const auto quality_init = gate_drift(gating::GateInit::quality, gating::Phi::linear, 0.0);
    return {main.ordered >= 9,
            fmt("ones init, linear phi: low-q drift < high-q drift in %zu/10 seeds (low/high:%s); controls: "
                "lambda0=0 %zu/10, exponential phi %zu/10, quality init with lambda0=0 %zu/10",
                main.ordered, main.per_seed.c_str(), no_penalty.ordered, exp_phi.ordered, quality_init.ordered)};
}

Verdict headline_direction(const fs::path& work) {
    struct Dataset {
        const char* file;
        const char* target;
        const char* task;
    };
    const Dataset sets[] = {{"iris.csv", "species", "classification"},
                            {"wine.csv", "cultivar", "classification"},
                            {"auto_mpg.csv", "mpg", "regression"}};
    std::vector<double> diffs;
    std::size_t wins = 0;
    std::string detail;
    for (const auto& s : sets) {
        const auto out = work / "headline" / fs::path(s.file).stem();
        fs::remove_all(out);
        std::ostringstream sink, err;
        const int code = cli::run({"study", "--data", std::string(QUAIL_TEST_DATA_DIR) + "/" + s.file, "--target",
                                   s.target, "--task", s.task, "--mode", "cnar", "--model", "mlp,quail", "--trials",
                                   "32", "--splits", "5", "--seed", "2024", "--out", out.string()},
                                  sink, err);
        if (code != 0) return {false, fmt("study on %s exited %d: %s", s.file, code, err.str().c_str())};
        const auto records = ledger::read_ledger(out / "ledger.jsonl");
        const auto cells = cli::cells_from_records(records);
        double mlp = NAN, quail = NAN;
        for (const auto& c : cells) {
            if (c.model == eval::ModelKind::mlp) mlp = c.mean;
            if (c.model == eval::ModelKind::quail) quail = c.mean;
        }
        const double diff = eval::relative_improvement(quail, mlp);
        diffs.push_back(diff);
        wins += quail >= mlp;
        detail += fmt("%s mlp %.2f quail %.2f (%+.2f pp); ", fs::path(s.file).stem().c_str(), 100 * mlp, 100 * quail,
                      100 * diff);
    }
    const double tm = eval::trimmed_mean(diffs);
    detail += fmt("quail >= mlp on %zu/3, trimmed-mean improvement %+.2f pp", wins, 100 * tm);
    return {wins >= 2 && tm >= 0.0, detail};
}

Verdict metric_oracles() {
    Rng rng(77);
    double worst = 0.0;
    for (int it = 0; it < 1000; ++it) {
        const std::size_t k = 1 + rng.below(5), n = 1 + rng.below(40);
        std::vector<std::size_t> p(n), t(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = rng.below(k);
            t[i] = rng.below(k);
        }
        worst = std::max(worst, std::abs(eval::f1_macro(p, t, k) - testing::oracle_f1_macro(p, t, k)));
    }
    for (int it = 0; it < 1000; ++it) {
        const std::size_t n = 2 + rng.below(40);
        std::vector<double> p(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.normal(1.0, 4.0);
            p[i] = y[i] + rng.normal(0.0, 3.0);
        }
        const double want = testing::oracle_r2(p, y);
        worst = std::max(worst, std::abs(eval::r2(p, y) - want) / std::max(1.0, std::abs(want)));
    }
    for (int it = 0; it < 1000; ++it) {
        std::vector<double> v(1 + rng.below(60));
        for (auto& x : v) x = rng.normal(0.0, 10.0);
        worst = std::max(worst, std::abs(eval::trimmed_mean(v) - testing::oracle_trimmed_mean(v, 0.10)));
    }
    return {worst <= 1e-12, fmt("3 x 1000 instances, max |library - oracle| %.2e (relative above magnitude 1)", worst)};
}

Verdict pipeline_hygiene() {
    const auto table = data::load_csv(std::string(QUAIL_TEST_DATA_DIR) + "/auto_mpg.csv",
                                           {"mpg", data::Task::regression, std::nullopt});
    std::mutex mu;
    std::size_t audited = 0, violations = 0;
    for (auto mode : {corrupt::Mode::ccar, corrupt::Mode::cnar}) {
        for (auto model : {eval::ModelKind::mlp, eval::ModelKind::quail}) {
            search::StudySpec spec;
            spec.dataset = "auto_mpg";
            spec.mode = mode;
            spec.model = model;
            spec.n_trials = 4;
            spec.n_splits = 5;
            spec.seed = 31;
            spec.space.max_epochs = 10;
            spec.workers = 2;
            spec.audit = [&](const search::SplitAudit& a) {
                const bool clean = a.validation->identical(a.original->select_rows(a.rows->validation)) &&
                                   a.test->identical(a.original->select_rows(a.rows->test)) &&
                                   a.corrupted->table.n_rows() == a.rows->train.size();
                std::lock_guard lock(mu);
                ++audited;
                violations += !clean;
            };
            search::run_study(table, spec);
        }
    }
    return {audited == 2 * 2 * 4 * 5 && violations == 0,
            fmt("%zu (trial, split) pairs audited, %zu with altered validation/test rows", audited, violations)};
}

Verdict determinism(const fs::path& work) {
    std::vector<std::string> ledgers;
    for (const char* run : {"first", "second"}) {
        const auto out = work / "determinism" / run;
        fs::remove_all(out);
        std::ostringstream sink, err;
        const int code = cli::run({"study", "--data", std::string(QUAIL_TEST_DATA_DIR) + "/wine.csv", "--target",
                                   "cultivar", "--mode", "ccar,cnar", "--model", "linear,curriculum,quail",
                                   "--trials", "4", "--splits", "3", "--max-epochs", "30", "--workers", "3",
                                   "--seed", "99", "--out", out.string()},
                                  sink, err);
        if (code != 0) return {false, fmt("study exited %d: %s", code, err.str().c_str())};
        ledgers.push_back(slurp(out / "ledger.jsonl"));
    }
    const auto lines = std::count(ledgers[0].begin(), ledgers[0].end(), '\n');
    return {!ledgers[0].empty() && ledgers[0] == ledgers[1],
            fmt("%ld ledger lines, byte-identical: %s", static_cast<long>(lines),
                ledgers[0] == ledgers[1] ? "yes" : "no")};
}

}  // namespace

int main() {
    const auto work = fs::temp_directory_path() / "quail_acceptance";
    fs::create_directories(work);
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"gradient correctness", gradient_correctness},
        {"CCAR realization", ccar_realization},
        {"CNAR properties", cnar_properties},
        {"QuAIL degeneracy", quail_degeneracy},
        {"inertia ordering", inertia_ordering},
        {"headline direction (iris, wine, auto_mpg; CNAR)", [&] { return headline_direction(work); }},
        {"metric oracles", metric_oracles},
        {"pipeline hygiene", pipeline_hygiene},
        {"study determinism", [&] { return determinism(work); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.pass;
        std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
