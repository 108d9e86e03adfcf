#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "quail/corrupt.hpp"
#include "quail/eval.hpp"
#include "quail/search.hpp"

namespace quail::ledger {

// Study ledger: JSON Lines, one self-contained trial record per line.
// Format documented in docs/formats.md.
inline constexpr const char* kFormat = "quail-ledger";
inline constexpr int kVersion = 1;

struct Record {
    std::string dataset;
    corrupt::Mode mode = corrupt::Mode::clean;
    eval::ModelKind model = eval::ModelKind::mlp;
    eval::MetricKind metric = eval::MetricKind::f1_macro;
    std::uint64_t study_seed = 0;
    // Fingerprint of every setting that influences trial results; a
    // resumed study must match it.
    std::string study_key;
    search::TrialResult trial;
};

std::string to_line(const Record& record);
Record from_line(const std::string& line);

// Reads every complete line; an unterminated trailing line (interrupted
// write) is ignored.
std::vector<Record> read_ledger(const std::filesystem::path& path);

// Drops an unterminated trailing line so appends start on a fresh line.
void repair_ledger(const std::filesystem::path& path);

class Writer {
public:
    explicit Writer(const std::filesystem::path& path);
    void append(const Record& record);

private:
    std::ofstream out_;
};

}  // namespace quail::ledger
