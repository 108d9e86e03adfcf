#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "quail/error.hpp"
#include "quail/gradcheck.hpp"
#include "quail/rng.hpp"

namespace quail::cli {

using json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Config parsing

template <class F>
auto usage_guard(const std::string& what, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw UsageError(what + ": " + e.what());
    } catch (const quail::Error& e) {
        throw UsageError(what + ": " + e.what());
    }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
    if (!obj.is_object()) throw UsageError(where + " must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
            throw UsageError("unknown config key '" + where + "." + key + "'");
    }
}

std::size_t positive_size(const json& v, const std::string& key) {
    const auto n = v.get<std::int64_t>();
    if (n < 1) throw UsageError(key + " must be >= 1");
    return static_cast<std::size_t>(n);
}

search::Range range_of(const json& v, const std::string& key) {
    const auto r = v.get<std::vector<double>>();
    if (r.size() != 2) throw UsageError(key + " must be [lo, hi]");
    return {r[0], r[1]};
}

std::pair<std::size_t, std::size_t> size_range_of(const json& v, const std::string& key) {
    const auto r = v.get<std::vector<std::int64_t>>();
    if (r.size() != 2 || r[0] < 1 || r[1] < r[0]) throw UsageError(key + " must be [min, max] with 1 <= min <= max");
    return {static_cast<std::size_t>(r[0]), static_cast<std::size_t>(r[1])};
}

template <class T, class Parse>
std::vector<T> list_of(const json& v, Parse parse) {
    std::vector<T> out;
    for (const auto& s : v.get<std::vector<std::string>>()) out.push_back(parse(s));
    return out;
}

void apply_space(search::SearchSpace& s, const json& j) {
    reject_unknown(j,
                   {"lr", "batch_sizes", "optimizers", "weight_decay", "lr_schedules", "layers", "widths", "dropout",
                    "activations", "curricula", "gate_inits", "lambda0", "anchor_period", "phis", "anneals",
                    "max_epochs", "patience"},
                   "space");
    if (j.contains("lr")) s.lr = range_of(j["lr"], "space.lr");
    if (j.contains("weight_decay")) s.weight_decay = range_of(j["weight_decay"], "space.weight_decay");
    if (j.contains("dropout")) s.dropout = range_of(j["dropout"], "space.dropout");
    if (j.contains("lambda0")) s.lambda0 = range_of(j["lambda0"], "space.lambda0");
    if (j.contains("batch_sizes")) s.batch_sizes = j["batch_sizes"].get<std::vector<std::size_t>>();
    if (j.contains("widths")) s.widths = j["widths"].get<std::vector<std::size_t>>();
    if (j.contains("layers")) std::tie(s.min_layers, s.max_layers) = size_range_of(j["layers"], "space.layers");
    if (j.contains("anchor_period"))
        std::tie(s.min_anchor_period, s.max_anchor_period) = size_range_of(j["anchor_period"], "space.anchor_period");
    if (j.contains("optimizers")) s.optimizers = list_of<train::OptimizerKind>(j["optimizers"], train::parse_optimizer);
    if (j.contains("lr_schedules"))
        s.lr_schedules = list_of<train::LrSchedule>(j["lr_schedules"], train::parse_lr_schedule);
    if (j.contains("activations")) s.activations = list_of<nn::Activation>(j["activations"], nn::parse_activation);
    if (j.contains("curricula"))
        s.curricula = list_of<train::CurriculumSchedule>(j["curricula"], train::parse_curriculum);
    if (j.contains("gate_inits")) s.gate_inits = list_of<gating::GateInit>(j["gate_inits"], gating::parse_gate_init);
    if (j.contains("phis")) s.phis = list_of<gating::Phi>(j["phis"], gating::parse_phi);
    if (j.contains("anneals")) s.anneals = list_of<gating::Anneal>(j["anneals"], gating::parse_anneal);
    if (j.contains("max_epochs")) s.max_epochs = positive_size(j["max_epochs"], "space.max_epochs");
    if (j.contains("patience")) s.patience = positive_size(j["patience"], "space.patience");
}

json space_to_json(const search::SearchSpace& s) {
    auto names = [](const auto& v) {
        std::vector<std::string> out;
        for (const auto& x : v) {
            using quail::corrupt::to_string;
            using quail::gating::to_string;
            using quail::nn::to_string;
            using quail::train::to_string;
            out.push_back(to_string(x));
        }
        return out;
    };
    json j;
    j["lr"] = {s.lr.lo, s.lr.hi};
    j["batch_sizes"] = s.batch_sizes;
    j["optimizers"] = names(s.optimizers);
    j["weight_decay"] = {s.weight_decay.lo, s.weight_decay.hi};
    j["lr_schedules"] = names(s.lr_schedules);
    j["layers"] = {s.min_layers, s.max_layers};
    j["widths"] = s.widths;
    j["dropout"] = {s.dropout.lo, s.dropout.hi};
    j["activations"] = names(s.activations);
    j["curricula"] = names(s.curricula);
    j["gate_inits"] = names(s.gate_inits);
    j["lambda0"] = {s.lambda0.lo, s.lambda0.hi};
    j["anchor_period"] = {s.min_anchor_period, s.max_anchor_period};
    j["phis"] = names(s.phis);
    j["anneals"] = names(s.anneals);
    j["max_epochs"] = s.max_epochs;
    j["patience"] = s.patience;
    return j;
}

ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
    ExperimentConfig c;
    reject_unknown(j, {"dataset", "modes", "models", "trials", "splits", "seed", "workers", "top_k", "output_dir", "space"},
                   "config");
    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        reject_unknown(d, {"path", "target", "task", "name"}, "dataset");
        if (d.contains("path")) {
            std::filesystem::path p = d["path"].get<std::string>();
            c.dataset = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
        }
        if (d.contains("target")) c.target = d["target"].get<std::string>();
        if (d.contains("task")) c.task = data::parse_task(d["task"].get<std::string>());
        if (d.contains("name")) c.name = d["name"].get<std::string>();
    }
    if (j.contains("modes")) c.modes = list_of<corrupt::Mode>(j["modes"], corrupt::parse_mode);
    if (j.contains("models")) c.models = list_of<eval::ModelKind>(j["models"], eval::parse_model_kind);
    if (j.contains("trials")) c.trials = positive_size(j["trials"], "trials");
    if (j.contains("splits")) c.splits = positive_size(j["splits"], "splits");
    if (j.contains("seed") && !j["seed"].is_null()) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("workers")) c.workers = j["workers"].get<std::size_t>();
    if (j.contains("top_k")) c.top_k = positive_size(j["top_k"], "top_k");
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("space")) apply_space(c.space, j["space"]);

    if (c.modes.empty()) throw UsageError("modes must not be empty");
    if (c.models.empty()) throw UsageError("models must not be empty");
    c.space.validate();
    if (c.name.empty()) c.name = c.dataset.stem().string();
    return c;
}

// ---------------------------------------------------------------------------
// Helpers

std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

data::Table load_dataset(const ExperimentConfig& c, const std::string& bytes) {
    std::istringstream in(bytes);
    try {
        return data::parse_csv(in, {c.target, c.task, std::nullopt});
    } catch (const quail::Error& e) {
        throw IoError("cannot load dataset '" + c.dataset.string() + "': " + e.what());
    }
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

template <class F>
void write_file(const std::filesystem::path& path, F&& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    body(out);
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string signed_pp(double metric_diff) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.2f", metric_diff * 100.0);
    return buf;
}

// Models run in this order so that MLP results exist before QuAIL needs them.
std::vector<eval::ModelKind> ordered_models(const std::vector<eval::ModelKind>& requested) {
    std::set<eval::ModelKind> want(requested.begin(), requested.end());
    if (want.contains(eval::ModelKind::quail)) want.insert(eval::ModelKind::mlp);
    return {want.begin(), want.end()};
}

// ---------------------------------------------------------------------------
// Commands

struct Flags {
    std::string config;
    std::string data;
    std::string target;
    std::string task;
    std::string name;
    std::vector<std::string> modes;
    std::vector<std::string> models;
    std::int64_t trials = 0;
    std::int64_t splits = 0;
    std::uint64_t seed = 0;
    std::size_t workers = 0;
    std::int64_t top_k = 0;
    std::int64_t max_epochs = 0;
    std::string out;
    std::map<std::string, CLI::Option*> opts;

    bool given(const std::string& name) const {
        auto it = opts.find(name);
        return it != opts.end() && it->second->count() > 0;
    }
};

// Config file, then the output-dir environment variable, then flags.
ExperimentConfig resolve_config(const Flags& f) {
    json j = json::object();
    std::filesystem::path base;
    if (!f.config.empty()) {
        const auto text = read_bytes(f.config);
        try {
            j = json::parse(text);
        } catch (const json::exception& e) {
            throw UsageError("config '" + f.config + "' is not valid JSON: " + e.what());
        }
        if (!j.is_object()) throw UsageError("config must be a JSON object");
        base = std::filesystem::path(f.config).parent_path();
    }
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) j["output_dir"] = env;
    if (f.given("--data")) j["dataset"]["path"] = std::filesystem::absolute(f.data).string();
    if (f.given("--target")) j["dataset"]["target"] = f.target;
    if (f.given("--task")) j["dataset"]["task"] = f.task;
    if (f.given("--name")) j["dataset"]["name"] = f.name;
    if (f.given("--mode")) j["modes"] = f.modes;
    if (f.given("--model")) j["models"] = f.models;
    if (f.given("--trials")) j["trials"] = f.trials;
    if (f.given("--splits")) j["splits"] = f.splits;
    if (f.given("--seed")) j["seed"] = f.seed;
    if (f.given("--workers")) j["workers"] = f.workers;
    if (f.given("--top-k")) j["top_k"] = f.top_k;
    if (f.given("--max-epochs")) j["space"]["max_epochs"] = f.max_epochs;
    if (f.given("--out")) j["output_dir"] = f.out;

    auto c = usage_guard("config", [&] { return config_from_json(j, base); });
    if (c.dataset.empty()) throw UsageError("no dataset given (--data or dataset.path)");
    if (c.target.empty()) throw UsageError("no target column given (--target or dataset.target)");
    if (!c.seed) throw UsageError("a seed is required (--seed or seed)");
    if (c.workers == 0) c.workers = std::max(1u, std::thread::hardware_concurrency());
    return c;
}

int cmd_corrupt(const ExperimentConfig& c, std::ostream& out) {
    if (c.modes.size() != 1) throw UsageError("corrupt takes exactly one mode");
    const auto mode = c.modes.front();
    const auto bytes = read_bytes(c.dataset);
    const auto table = load_dataset(c, bytes);
    ensure_dir(c.output_dir);

    const auto result = corrupt::apply_corruption(mode, table, *c.seed);
    const auto quality = corrupt::derive_quality(result.mask, table.schema(), table.n_rows());
    const auto csv_path = c.output_dir / "corrupted.csv";
    if (mode == corrupt::Mode::clean) {
        write_file(csv_path, [&](std::ostream& o) { o << bytes; });
    } else {
        write_file(csv_path, [&](std::ostream& o) { data::write_csv(result.table, o); });
    }
    write_file(c.output_dir / "mask.csv",
               [&](std::ostream& o) { corrupt::write_mask_csv(result.mask, table.schema(), o); });
    write_file(c.output_dir / "quality.json",
               [&](std::ostream& o) { corrupt::write_metadata_json(result, quality, *c.seed, o); });

    const auto& schema = table.schema();
    const auto inputs = schema.input_columns();
    out << "mode " << corrupt::to_string(mode) << ", " << table.n_rows() << " rows, "
        << result.mask.total_corrupted() << " corrupted cells\n";
    out << std::left << std::setw(20) << "column" << std::setw(10) << "tier" << std::setw(10) << "rate"
        << std::setw(10) << "missing" << "quality\n";
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto col = inputs[k];
        const double rate =
            table.n_rows() ? static_cast<double>(result.mask.corrupted_in_column(col)) / table.n_rows() : 0.0;
        out << std::setw(20) << schema.column(col).name << std::setw(10)
            << corrupt::to_string(result.plan.tier_of_column[k]) << std::setw(10) << std::fixed
            << std::setprecision(4) << rate << std::setw(10) << result.mask.missing_in_column(col)
            << quality.q[k] << '\n';
    }
    out << "wrote " << csv_path.string() << ", mask.csv, quality.json\n";
    return kExitOk;
}

int cmd_study(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
    const auto bytes = read_bytes(c.dataset);
    const auto table = load_dataset(c, bytes);
    ensure_dir(c.output_dir);
    const auto ledger_path = c.output_dir / "ledger.jsonl";
    const auto key = study_key(c, bytes);
    const auto metric = eval::metric_for(c.task);

    std::vector<ledger::Record> existing;
    if (std::filesystem::exists(ledger_path)) {
        try {
            ledger::repair_ledger(ledger_path);
            existing = ledger::read_ledger(ledger_path);
        } catch (const quail::Error& e) {
            throw IoError(std::string("cannot resume from existing ledger: ") + e.what());
        }
    }
    ledger::Writer writer(ledger_path);

    std::vector<eval::CellResult> cells;
    std::size_t failures = 0;
    std::size_t resumed = 0;
    for (const auto mode : c.modes) {
        std::vector<search::TrialResult> mlp_trials;
        for (const auto model : ordered_models(c.models)) {
            search::StudySpec spec;
            spec.dataset = c.name;
            spec.mode = mode;
            spec.model = model;
            spec.n_trials = c.trials;
            spec.n_splits = c.splits;
            spec.seed = *c.seed;
            spec.space = c.space;
            spec.workers = c.workers;
            for (const auto& r : existing) {
                if (r.dataset != c.name || r.mode != mode || r.model != model) continue;
                if (r.study_key != key)
                    throw UsageError("ledger '" + ledger_path.string() +
                                     "' holds results of a study with different settings; use a fresh output "
                                     "directory");
                spec.completed[r.trial.index] = r.trial;
            }
            resumed += spec.completed.size();
            if (model == eval::ModelKind::quail) {
                std::vector<std::string> warnings;
                spec.architectures = search::top_k_architectures(mlp_trials, c.top_k, &warnings);
                for (const auto& w : warnings) err << "warning: " << w << '\n';
            }
            spec.on_trial = [&](const search::TrialResult& t) {
                writer.append({c.name, mode, model, metric, *c.seed, key, t});
            };
            const auto result = search::run_study(table, spec);
            failures += result.failures;
            for (const auto& t : result.trials)
                if (t.failed) err << "warning: trial " << t.index << " (" << eval::to_string(model) << ", "
                                  << corrupt::to_string(mode) << ") failed: " << t.error << '\n';
            if (model == eval::ModelKind::mlp) mlp_trials = result.trials;
            if (!result.best) {
                err << "warning: every " << eval::to_string(model) << " trial failed under "
                    << corrupt::to_string(mode) << '\n';
                continue;
            }
            cells.push_back(eval::make_cell_result(c.name, mode, model, metric, result.best_trial().test_metrics));
        }
    }

    write_file(c.output_dir / "results.csv", [&](std::ostream& o) { eval::write_results_csv(cells, o); });
    write_file(c.output_dir / "summary.csv", [&](std::ostream& o) { eval::write_summary_csv(cells, o); });
    print_table(cells, out, true);
    if (resumed) err << "resumed " << resumed << " completed trial(s) from the ledger\n";
    if (failures) err << "warning: " << failures << " trial(s) failed\n";
    return kExitOk;
}

std::vector<ledger::Record> load_ledger(const std::string& path) {
    if (!std::filesystem::exists(path)) throw IoError("ledger '" + path + "' does not exist");
    try {
        return ledger::read_ledger(path);
    } catch (const quail::Error& e) {
        throw IoError("cannot read ledger '" + path + "': " + e.what());
    }
}

int cmd_report(const std::vector<std::string>& paths, std::ostream& out) {
    if (paths.empty()) throw UsageError("report needs at least one ledger");
    std::vector<std::vector<eval::CellResult>> per_ledger;
    for (const auto& p : paths) per_ledger.push_back(cells_from_records(load_ledger(p)));

    auto keys_of = [](const std::vector<eval::CellResult>& cells) {
        std::set<std::pair<std::string, corrupt::Mode>> keys;
        for (const auto& cell : cells) keys.insert({cell.dataset, cell.mode});
        return keys;
    };

    if (per_ledger.size() == 1) {
        print_table(per_ledger.front(), out, true);
        return kExitOk;
    }

    const auto base_keys = keys_of(per_ledger.front());
    for (std::size_t i = 1; i < per_ledger.size(); ++i) {
        if (keys_of(per_ledger[i]) != base_keys)
            throw UsageError("ledger '" + paths[i] + "' covers different (dataset, mode) keys than '" + paths[0] + "'");
    }
    for (std::size_t i = 0; i < per_ledger.size(); ++i) {
        out << "== " << paths[i] << (i == 0 ? " (baseline)" : "") << '\n';
        print_table(per_ledger[i], out, false);
    }
    // Candidate minus baseline, per (mode, model), trimmed mean across datasets.
    for (std::size_t i = 1; i < per_ledger.size(); ++i) {
        std::map<std::pair<corrupt::Mode, eval::ModelKind>, std::vector<double>> diffs;
        for (const auto& cand : per_ledger[i]) {
            for (const auto& base : per_ledger.front()) {
                if (base.dataset == cand.dataset && base.mode == cand.mode && base.model == cand.model)
                    diffs[{cand.mode, cand.model}].push_back(eval::relative_improvement(cand.mean, base.mean));
            }
        }
        for (const auto& [k, v] : diffs) {
            out << "improvement " << paths[i] << " vs " << paths[0] << " mode=" << corrupt::to_string(k.first)
                << " model=" << eval::to_string(k.second) << ": " << signed_pp(eval::trimmed_mean(v)) << " pp over "
                << v.size() << " dataset(s)\n";
        }
    }
    return kExitOk;
}

int cmd_gradcheck(std::size_t n_configs, std::uint64_t seed, std::ostream& out) {
    gradcheck::Options opt;
    opt.n_configs = n_configs;
    opt.seed = seed;
    const auto report = gradcheck::run(opt);
    for (std::size_t i = 0; i < report.cases.size(); ++i) {
        const auto& cr = report.cases[i];
        out << "case " << i << ": " << cr.description << " coords=" << cr.coordinates
            << " max_rel=" << cr.max_rel_error << " max_abs=" << cr.max_abs_error
            << (cr.failures ? " FAIL" : " ok") << '\n';
    }
    out << "max relative error: " << report.max_rel_error << " over " << report.coordinates << " coordinates, "
        << report.failures << " failure(s)\n";
    return report.passed() ? kExitOk : kExitIo;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw UsageError(std::string("config is not valid JSON: ") + e.what());
    }
    return usage_guard("config", [&] { return config_from_json(j, base_dir); });
}

std::string study_key(const ExperimentConfig& c, const std::string& dataset_bytes) {
    json j;
    j["dataset"] = c.name;
    j["data_fnv"] = hex64(tag(dataset_bytes));
    j["target"] = c.target;
    j["task"] = data::to_string(c.task);
    j["trials"] = c.trials;
    j["splits"] = c.splits;
    j["seed"] = c.seed.value_or(0);
    j["top_k"] = c.top_k;
    j["space"] = space_to_json(c.space);
    return hex64(tag(j.dump()));
}

std::vector<eval::CellResult> cells_from_records(std::span<const ledger::Record> records) {
    struct Best {
        const ledger::Record* record = nullptr;
    };
    std::map<std::tuple<std::string, corrupt::Mode, eval::ModelKind>, Best> best;
    std::vector<std::tuple<std::string, corrupt::Mode, eval::ModelKind>> order;
    for (const auto& r : records) {
        const auto key = std::make_tuple(r.dataset, r.mode, r.model);
        auto [it, inserted] = best.try_emplace(key);
        if (inserted) order.push_back(key);
        if (r.trial.failed) continue;
        const auto* cur = it->second.record;
        if (!cur || r.trial.mean_val > cur->trial.mean_val ||
            (r.trial.mean_val == cur->trial.mean_val && r.trial.index < cur->trial.index))
            it->second.record = &r;
    }
    std::vector<eval::CellResult> cells;
    for (const auto& key : order) {
        const auto* r = best[key].record;
        if (!r) continue;
        cells.push_back(eval::make_cell_result(r->dataset, r->mode, r->model, r->metric, r->trial.test_metrics));
    }
    return cells;
}

void print_table(std::span<const eval::CellResult> cells, std::ostream& out, bool with_improvement) {
    const std::vector<eval::ModelKind> models{eval::ModelKind::linear, eval::ModelKind::mlp,
                                              eval::ModelKind::curriculum, eval::ModelKind::quail};
    std::vector<std::pair<std::string, corrupt::Mode>> rows;
    for (const auto& c : cells)
        if (std::find(rows.begin(), rows.end(), std::pair{c.dataset, c.mode}) == rows.end())
            rows.emplace_back(c.dataset, c.mode);

    out << std::left << std::setw(16) << "dataset" << std::setw(7) << "mode" << std::setw(10) << "metric";
    for (auto m : models) out << std::setw(12) << eval::to_string(m);
    out << "best\n";
    for (const auto& [dataset, mode] : rows) {
        std::string metric;
        std::optional<std::pair<double, eval::ModelKind>> best;
        out << std::setw(16) << dataset << std::setw(7) << corrupt::to_string(mode);
        std::ostringstream cols;
        cols << std::left;
        for (auto m : models) {
            auto it = std::find_if(cells.begin(), cells.end(), [&](const eval::CellResult& c) {
                return c.dataset == dataset && c.mode == mode && c.model == m;
            });
            if (it == cells.end()) {
                cols << std::setw(12) << "-";
                continue;
            }
            metric = eval::to_string(it->metric);
            cols << std::setw(12) << eval::format_percent(it->mean);
            if (!best || it->mean > best->first) best = {it->mean, m};
        }
        out << std::setw(10) << metric << cols.str() << (best ? eval::to_string(best->second) : "-") << '\n';
    }
    if (!with_improvement) return;

    std::map<corrupt::Mode, std::vector<double>> diffs;
    for (const auto& [dataset, mode] : rows) {
        const eval::CellResult* q = nullptr;
        const eval::CellResult* m = nullptr;
        for (const auto& c : cells) {
            if (c.dataset != dataset || c.mode != mode) continue;
            if (c.model == eval::ModelKind::quail) q = &c;
            if (c.model == eval::ModelKind::mlp) m = &c;
        }
        if (q && m) diffs[mode].push_back(eval::relative_improvement(q->mean, m->mean));
    }
    for (const auto& [mode, v] : diffs) {
        out << "improvement quail vs mlp (" << corrupt::to_string(mode) << ", trimmed mean over " << v.size()
            << " dataset(s)): " << signed_pp(eval::trimmed_mean(v)) << " pp\n";
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Quality-aware inertial learning: corruption tooling and tabular studies", "quail"};
    app.require_subcommand(1);

    auto add_common = [](CLI::App* sub, Flags& f) {
        f.opts["--config"] = sub->add_option("--config", f.config, "JSON experiment config");
        f.opts["--data"] = sub->add_option("--data", f.data, "CSV dataset");
        f.opts["--target"] = sub->add_option("--target", f.target, "Target column name");
        f.opts["--task"] = sub->add_option("--task", f.task, "classification | regression");
        f.opts["--name"] = sub->add_option("--name", f.name, "Dataset name used in outputs");
        f.opts["--seed"] = sub->add_option("--seed", f.seed, "Seed (required)");
        f.opts["--out"] = sub->add_option("--out", f.out, "Output directory");
    };

    Flags cf;
    auto* corrupt_cmd = app.add_subcommand("corrupt", "Corrupt a dataset; write corrupted CSV, mask and quality");
    add_common(corrupt_cmd, cf);
    cf.opts["--mode"] = corrupt_cmd->add_option("--mode", cf.modes, "clean | ccar | cnar")->expected(1);

    Flags sf;
    auto* study_cmd = app.add_subcommand("study", "Run hyperparameter studies; write ledger and summaries");
    add_common(study_cmd, sf);
    sf.opts["--mode"] = study_cmd->add_option("--mode", sf.modes, "Corruption modes")->delimiter(',');
    sf.opts["--model"] = study_cmd->add_option("--model", sf.models, "linear | mlp | curriculum | quail")->delimiter(',');
    sf.opts["--trials"] = study_cmd->add_option("--trials", sf.trials, "Trials per (mode, model)");
    sf.opts["--splits"] = study_cmd->add_option("--splits", sf.splits, "Bootstrap splits per trial");
    sf.opts["--workers"] = study_cmd->add_option("--workers", sf.workers, "Parallel trials (default: cores)");
    sf.opts["--top-k"] = study_cmd->add_option("--top-k", sf.top_k, "MLP configurations offered to QuAIL");
    sf.opts["--max-epochs"] = study_cmd->add_option("--max-epochs", sf.max_epochs, "Epoch cap per training run");

    auto* report_cmd = app.add_subcommand("report", "Tabulate one ledger, or compare ledgers against the first");
    std::vector<std::string> ledgers;
    report_cmd->add_option("ledgers", ledgers, "Ledger files (JSONL)")->required();

    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the composite-loss gradient");
    std::size_t grad_configs = 20;
    std::uint64_t grad_seed = 1;
    grad_cmd->add_option("--configs", grad_configs, "Random configurations");
    grad_cmd->add_option("--seed", grad_seed, "Seed for the configurations");

    std::vector<const char*> argv{"quail"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*corrupt_cmd) return cmd_corrupt(resolve_config(cf), out);
        if (*study_cmd) return cmd_study(resolve_config(sf), out, err);
        if (*report_cmd) return cmd_report(ledgers, out);
        if (*grad_cmd) {
            if (grad_configs < 1) throw UsageError("--configs must be >= 1");
            return cmd_gradcheck(grad_configs, grad_seed, out);
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitUsage;
}

}  // namespace quail::cli
