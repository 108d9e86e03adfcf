#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace quail::gradcheck {

// Compares analytic gradients of the composite (task + gate) loss with
// central finite differences on randomly drawn small problems.
struct Options {
    std::size_t n_configs = 20;
    std::uint64_t seed = 1;
    double h = 1e-5;
    double rel_tol = 1e-5;
    double abs_floor = 1e-8;
};

struct CaseReport {
    std::string description;
    std::size_t coordinates = 0;
    std::size_t failures = 0;
    double max_rel_error = 0.0;  // over coordinates with gradient magnitude above the floor
    double max_abs_error = 0.0;
};

struct Report {
    std::vector<CaseReport> cases;
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;
    std::size_t failures = 0;

    bool passed() const noexcept { return failures == 0; }
};

Report run(const Options& options = {});

}  // namespace quail::gradcheck
