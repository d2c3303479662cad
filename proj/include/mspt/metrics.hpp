#pragma once

#include <cstddef>
#include <vector>

namespace mspt {

// Fraction of argmax-correct predictions; argmax ties break toward the lowest
// class index.
double accuracy(const std::vector<std::vector<double>>& probabilities,
                const std::vector<int>& labels);

std::size_t argmax_lowest(const std::vector<double>& row);

// Mann-Whitney AUC with average-rank tie handling:
//   AUC = (sum of positive ranks - n_pos*(n_pos+1)/2) / (n_pos * n_neg).
// Throws if either class is absent.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

double mean(const std::vector<double>& v);
double std_dev(const std::vector<double>& v); // population form

} // namespace mspt
