#pragma once

// Deliberately naive reference implementations used to cross-check the
// library's metrics.

#include <algorithm>
#include <cstddef>
#include <vector>

namespace quail::testing {

// Per class: precision and recall from explicit counts, F1 = 2PR/(P+R).
inline double oracle_f1_macro(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& truth,
                              std::size_t n_classes) {
    double total = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        double predicted = 0, actual = 0, hit = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] == c) predicted += 1;
            if (truth[i] == c) actual += 1;
            if (pred[i] == c && truth[i] == c) hit += 1;
        }
        const double precision = predicted > 0 ? hit / predicted : 0.0;
        const double recall = actual > 0 ? hit / actual : 0.0;
        total += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    }
    return total / static_cast<double>(n_classes);
}

inline double oracle_r2(const std::vector<double>& pred, const std::vector<double>& y) {
    long double mean = 0;
    for (double v : y) mean += v;
    mean /= static_cast<long double>(y.size());
    long double res = 0, tot = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        res += (static_cast<long double>(y[i]) - pred[i]) * (static_cast<long double>(y[i]) - pred[i]);
        tot += (y[i] - mean) * (y[i] - mean);
    }
    return static_cast<double>(1.0L - res / tot);
}

// Repeatedly removes one minimum and one maximum element.
inline double oracle_trimmed_mean(std::vector<double> v, double fraction) {
    std::size_t k = 0;
    while (static_cast<double>(k + 1) <= fraction * static_cast<double>(v.size()) + 1e-12) ++k;
    for (std::size_t i = 0; i < k; ++i) {
        v.erase(std::min_element(v.begin(), v.end()));
        v.erase(std::max_element(v.begin(), v.end()));
    }
    long double s = 0;
    for (double x : v) s += x;
    return static_cast<double>(s / static_cast<long double>(v.size()));
}

}  // namespace quail::testing
