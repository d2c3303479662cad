#include "mspt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mspt/common.hpp"

namespace mspt {

std::size_t argmax_lowest(const std::vector<double>& row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

double accuracy(const std::vector<std::vector<double>>& probabilities,
                const std::vector<int>& labels) {
    if (probabilities.empty() || probabilities.size() != labels.size())
        throw ConfigError("accuracy: empty or mismatched predictions and labels");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (argmax_lowest(probabilities[i]) == static_cast<std::size_t>(labels[i])) ++correct;
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw ConfigError("auc: empty or mismatched scores and labels");

    std::size_t n_pos = 0;
    for (int l : labels) n_pos += (l == 1);
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw DataError("auc undefined: only one class present (" + std::to_string(n_pos) +
                        " positives, " + std::to_string(n_neg) + " negatives)");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;
    });

    // Average ranks over tie groups; ranks are 1-based.
    std::vector<double> rank(scores.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t q = i; q <= j; ++q) rank[order[q]] = avg;
        i = j + 1;
    }

    double pos_rank_sum = 0.0;
    for (std::size_t q = 0; q < labels.size(); ++q)
        if (labels[q] == 1) pos_rank_sum += rank[q];

    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double std_dev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

} // namespace mspt
