#pragma once

// Independent reference computations used to check the library. Nothing here
// calls into the code under test.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

/// Textbook BM25 recomputed from raw token lists, no postings. Stable order
/// keeps ties in ascending document index.
inline std::vector<std::pair<std::size_t, double>> bm25(const std::vector<std::vector<std::string>>& docs,
                                                        const std::vector<std::string>& query, double k1 = 1.2,
                                                        double b = 0.75) {
    const double n = static_cast<double>(docs.size());
    double avg = 0;
    for (const auto& d : docs) avg += static_cast<double>(d.size());
    avg /= n;
    std::set<std::string> terms(query.begin(), query.end());
    std::vector<std::pair<std::size_t, double>> out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        double score = 0;
        bool hit = false;
        for (const auto& t : terms) {
            double tf = 0;
            for (const auto& w : docs[i]) tf += (w == t);
            if (tf == 0) continue;
            hit = true;
            double df = 0;
            for (const auto& d : docs) df += std::count(d.begin(), d.end(), t) > 0;
            const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
            score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * static_cast<double>(docs[i].size()) / avg));
        }
        if (hit) out.push_back({i, score});
    }
    std::stable_sort(out.begin(), out.end(), [](auto& x, auto& y) { return x.second > y.second; });
    return out;
}

using Dense = std::vector<std::vector<double>>;

/// h + s * x (W_down W_up), with the full product formed by loops.
inline std::vector<double> lora_update(const std::vector<double>& h, const std::vector<double>& x, const Dense& down,
                                       const Dense& up, double s) {
    const std::size_t d = down.size(), r = up.size(), k = up[0].size();
    Dense w(d, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t t = 0; t < r; ++t) w[i][j] += down[i][t] * up[t][j];
    std::vector<double> out = h;
    for (std::size_t j = 0; j < k; ++j) {
        double acc = 0;
        for (std::size_t i = 0; i < d; ++i) acc += x[i] * w[i][j];
        out[j] += s * acc;
    }
    return out;
}

}  // namespace oracle
