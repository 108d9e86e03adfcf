#include "quail/ledger.hpp"

#include <sstream>

#include "json.hpp"

#include "quail/error.hpp"

namespace quail::ledger {

using json = nlohmann::ordered_json;

namespace {

json config_to_json(const search::TrialConfig& c) {
    json j;
    j["model"] = eval::to_string(c.model);
    j["lr"] = c.train.lr;
    j["batch_size"] = c.train.batch_size;
    j["optimizer"] = train::to_string(c.train.optimizer);
    j["weight_decay"] = c.train.weight_decay;
    j["lr_schedule"] = train::to_string(c.train.lr_schedule);
    j["max_epochs"] = c.train.max_epochs;
    j["patience"] = c.train.patience;
    j["curriculum"] = c.train.curriculum ? json(train::to_string(*c.train.curriculum)) : json(nullptr);
    if (c.architecture) {
        j["architecture"] = {{"layers", c.architecture->layers},
                             {"width", c.architecture->width},
                             {"dropout", c.architecture->dropout},
                             {"activation", nn::to_string(c.architecture->activation)}};
    } else {
        j["architecture"] = nullptr;
    }
    if (c.gates) {
        j["gates"] = {{"init", gating::to_string(c.gates->init)},
                      {"lambda0", c.gates->lambda0},
                      {"phi", gating::to_string(c.gates->phi)},
                      {"anneal", gating::to_string(c.gates->anneal)},
                      {"anchor_period", c.gates->anchor_period}};
    } else {
        j["gates"] = nullptr;
    }
    return j;
}

search::TrialConfig config_from_json(const json& j) {
    search::TrialConfig c;
    c.model = eval::parse_model_kind(j.at("model").get<std::string>());
    c.train.lr = j.at("lr").get<double>();
    c.train.batch_size = j.at("batch_size").get<std::size_t>();
    c.train.optimizer = train::parse_optimizer(j.at("optimizer").get<std::string>());
    c.train.weight_decay = j.at("weight_decay").get<double>();
    c.train.lr_schedule = train::parse_lr_schedule(j.at("lr_schedule").get<std::string>());
    c.train.max_epochs = j.at("max_epochs").get<std::size_t>();
    c.train.patience = j.at("patience").get<std::size_t>();
    if (!j.at("curriculum").is_null()) c.train.curriculum = train::parse_curriculum(j["curriculum"].get<std::string>());
    if (const auto& a = j.at("architecture"); !a.is_null()) {
        search::Architecture arch;
        arch.layers = a.at("layers").get<std::size_t>();
        arch.width = a.at("width").get<std::size_t>();
        arch.dropout = a.at("dropout").get<double>();
        arch.activation = nn::parse_activation(a.at("activation").get<std::string>());
        c.architecture = arch;
    }
    if (const auto& g = j.at("gates"); !g.is_null()) {
        gating::GateConfig gc;
        gc.init = gating::parse_gate_init(g.at("init").get<std::string>());
        gc.lambda0 = g.at("lambda0").get<double>();
        gc.phi = gating::parse_phi(g.at("phi").get<std::string>());
        gc.anneal = gating::parse_anneal(g.at("anneal").get<std::string>());
        gc.anchor_period = g.at("anchor_period").get<std::size_t>();
        c.gates = gc;
    }
    return c;
}

eval::MetricKind parse_metric(const std::string& s) {
    for (auto k : {eval::MetricKind::f1_macro, eval::MetricKind::r2, eval::MetricKind::accuracy})
        if (eval::to_string(k) == s) return k;
    throw ParseError("ledger: unknown metric '" + s + "'");
}

}  // namespace

std::string to_line(const Record& r) {
    json j;
    j["format"] = kFormat;
    j["version"] = kVersion;
    j["dataset"] = r.dataset;
    j["mode"] = corrupt::to_string(r.mode);
    j["model"] = eval::to_string(r.model);
    j["metric"] = eval::to_string(r.metric);
    j["study_seed"] = r.study_seed;
    j["study_key"] = r.study_key;
    j["trial"] = r.trial.index;
    j["trial_seed"] = r.trial.seed;
    j["status"] = r.trial.failed ? "failed" : "ok";
    j["error"] = r.trial.error;
    j["config"] = r.trial.failed && !r.trial.config.architecture && !r.trial.config.gates && r.trial.config.train.lr == 0
                      ? json(nullptr)
                      : config_to_json(r.trial.config);
    j["val"] = r.trial.val_metrics;
    j["test"] = r.trial.test_metrics;
    j["mean_val"] = r.trial.mean_val;
    j["mean_test"] = r.trial.mean_test;
    return j.dump();
}

Record from_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(std::string("ledger: malformed line: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kFormat) throw ParseError("ledger: not a quail ledger record");
        if (j.at("version").get<int>() != kVersion)
            throw ParseError("ledger: unsupported version " + std::to_string(j["version"].get<int>()));
        Record r;
        r.dataset = j.at("dataset").get<std::string>();
        r.mode = corrupt::parse_mode(j.at("mode").get<std::string>());
        r.model = eval::parse_model_kind(j.at("model").get<std::string>());
        r.metric = parse_metric(j.at("metric").get<std::string>());
        r.study_seed = j.at("study_seed").get<std::uint64_t>();
        r.study_key = j.at("study_key").get<std::string>();
        r.trial.index = j.at("trial").get<std::size_t>();
        r.trial.seed = j.at("trial_seed").get<std::uint64_t>();
        r.trial.failed = j.at("status").get<std::string>() == "failed";
        r.trial.error = j.at("error").get<std::string>();
        if (!j.at("config").is_null()) r.trial.config = config_from_json(j["config"]);
        r.trial.val_metrics = j.at("val").get<std::vector<double>>();
        r.trial.test_metrics = j.at("test").get<std::vector<double>>();
        r.trial.mean_val = j.at("mean_val").get<double>();
        r.trial.mean_test = j.at("mean_test").get<double>();
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("ledger: bad record: ") + e.what());
    } catch (const ContractError& e) {
        throw ParseError(std::string("ledger: bad record: ") + e.what());
    }
}

std::vector<Record> read_ledger(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open ledger '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    std::vector<Record> out;
    std::size_t start = 0;
    while (start < text.size()) {
        const auto nl = text.find('\n', start);
        if (nl == std::string::npos) break;  // interrupted write
        if (nl > start) out.push_back(from_line(text.substr(start, nl - start)));
        start = nl + 1;
    }
    return out;
}

void repair_ledger(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return;
    std::string text;
    {
        std::ifstream in(path, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        text = buf.str();
    }
    const auto last_nl = text.rfind('\n');
    const auto keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    if (keep != text.size()) std::filesystem::resize_file(path, keep);
}

Writer::Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::app) {
    if (!out_) throw ParseError("cannot open ledger '" + path.string() + "' for writing");
}

void Writer::append(const Record& record) {
    out_ << to_line(record) << '\n';
    out_.flush();
}

}  // namespace quail::ledger
