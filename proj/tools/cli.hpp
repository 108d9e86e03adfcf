#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "quail/corrupt.hpp"
#include "quail/data.hpp"
#include "quail/eval.hpp"
#include "quail/ledger.hpp"
#include "quail/search.hpp"

namespace quail::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;     // unreadable input, unwritable output, failed check
inline constexpr int kExitUsage = 2;  // bad flags, bad config, mismatched ledgers

inline constexpr const char* kOutputDirEnv = "QUAIL_OUTPUT_DIR";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::filesystem::path dataset;
    std::string name;  // defaults to the dataset file stem
    std::string target;
    data::Task task = data::Task::classification;
    std::vector<corrupt::Mode> modes{corrupt::Mode::clean};
    std::vector<eval::ModelKind> models{eval::ModelKind::mlp};
    std::size_t trials = 32;
    std::size_t splits = 5;
    std::optional<std::uint64_t> seed;
    std::size_t workers = 0;  // 0: one per available core
    std::size_t top_k = 8;
    std::filesystem::path output_dir = "quail-out";
    search::SearchSpace space;
};

// Parses and validates a JSON config. Relative dataset paths are resolved
// against base_dir. Unknown keys, wrong types and out-of-range values are
// UsageErrors.
ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});

// Every field that changes trial outcomes, hashed; a ledger can only be
// resumed by a study with the same key.
std::string study_key(const ExperimentConfig& config, const std::string& dataset_bytes);

// Best trial (by mean validation metric) per (dataset, mode, model).
std::vector<eval::CellResult> cells_from_records(std::span<const ledger::Record> records);

// Human-readable table; with_improvement adds the QuAIL-minus-MLP
// trimmed-mean line per mode when both models are present.
void print_table(std::span<const eval::CellResult> cells, std::ostream& out, bool with_improvement);

// Entry point; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace quail::cli
