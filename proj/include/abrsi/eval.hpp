#pragma once

// Classification metrics and pseudo-label diagnostics.

#include <optional>
#include <string>
#include <vector>

#include "abrsi/numerics.hpp"
#include "abrsi/pseudolabel.hpp"

namespace abrsi {

struct ClassificationMetrics {
    double accuracy = 0.0;
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;
    std::optional<double> auc;  // absent when truth has a single class
    std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted], 0-based
    std::vector<std::string> warnings;
};

// Support-weighted one-vs-rest averages over the categories present in
// `truth` (1-based ids). AUC per category is the Mann-Whitney statistic on
// that category's probability column, midranks for ties.
ClassificationMetrics classification_metrics(const Matrix& probs, const std::vector<int>& truth);

// One-vs-rest AUC for a binary relevance vector. Exposed for tests.
double rank_auc(const std::vector<double>& scores, const std::vector<bool>& positive);

double hellinger(std::span<const double> p, std::span<const double> q);

// Empirical category distribution of 1-based labels over k categories.
std::vector<double> label_distribution(const std::vector<int>& labels, std::size_t k);

struct PlQuality {
    double hard_ratio = 0.0;
    std::optional<double> hard_accuracy;
    std::optional<double> hellinger;  // hard-PL distribution vs truth distribution
};

PlQuality pl_quality(const std::vector<std::optional<int>>& hard, const std::vector<int>& truth,
                     std::size_t k);
PlQuality pl_quality(const PlAssignment& pl, const std::vector<int>& truth, std::size_t k);

double certainty_fraction(const Matrix& probs, double threshold);

}  // namespace abrsi
