#include "abrsi/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace abrsi {

double rank_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size()) throw DimensionError("rank_auc: length mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        // Ranks i+1 .. j share the midrank.
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t)
            if (positive[idx[t]]) {
                pos_rank_sum += mid;
                ++n_pos;
            }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("rank_auc: needs both classes");
    const double np = static_cast<double>(n_pos);
    return (pos_rank_sum - np * (np + 1) / 2) / (np * static_cast<double>(n_neg));
}

ClassificationMetrics classification_metrics(const Matrix& probs, const std::vector<int>& truth) {
    if (probs.rows() != truth.size())
        throw DimensionError("classification_metrics: " + std::to_string(probs.rows()) +
                             " predictions for " + std::to_string(truth.size()) + " labels");
    if (truth.empty()) throw std::invalid_argument("classification_metrics: empty evaluation set");
    const std::size_t k = probs.cols();
    ClassificationMetrics m;
    m.confusion.assign(k, std::vector<std::size_t>(k, 0));
    const auto pred = vote_nn(probs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 1 || static_cast<std::size_t>(truth[i]) > k)
            throw std::invalid_argument("classification_metrics: truth label " +
                                        std::to_string(truth[i]) + " outside 1.." +
                                        std::to_string(k));
        ++m.confusion[static_cast<std::size_t>(truth[i] - 1)][static_cast<std::size_t>(pred[i] - 1)];
        correct += truth[i] == pred[i];
    }
    const double n = static_cast<double>(truth.size());
    m.accuracy = static_cast<double>(correct) / n;

    double auc_sum = 0.0, auc_weight = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t support = 0, predicted = 0;
        for (std::size_t r = 0; r < k; ++r) {
            support += m.confusion[c][r];
            predicted += m.confusion[r][c];
        }
        if (support == 0) {
            m.warnings.push_back("category " + std::to_string(c + 1) +
                                 " absent from truth; excluded from weighting");
            continue;
        }
        const double tp = static_cast<double>(m.confusion[c][c]);
        const double w = static_cast<double>(support) / n;
        double p = 0.0;
        if (predicted == 0)
            m.warnings.push_back("category " + std::to_string(c + 1) +
                                 " never predicted; precision taken as 0");
        else
            p = tp / static_cast<double>(predicted);
        const double r = tp / static_cast<double>(support);
        const double f = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
        m.weighted_precision += w * p;
        m.weighted_recall += w * r;
        m.weighted_f1 += w * f;

        if (support == truth.size()) continue;
        std::vector<double> score(truth.size());
        std::vector<bool> pos(truth.size());
        for (std::size_t i = 0; i < truth.size(); ++i) {
            score[i] = probs(i, c);
            pos[i] = static_cast<std::size_t>(truth[i]) == c + 1;
        }
        auc_sum += w * rank_auc(score, pos);
        auc_weight += w;
    }
    if (auc_weight > 0) m.auc = auc_sum / auc_weight;
    else m.warnings.push_back("single category in truth; AUC undefined");
    return m;
}

namespace {

void check_simplex(std::span<const double> p, const char* name) {
    double s = 0.0;
    for (double v : p) {
        if (!(v >= -1e-9)) throw std::invalid_argument(std::string("hellinger: ") + name + " has a negative entry");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9)
        throw std::invalid_argument(std::string("hellinger: ") + name + " sums to " + std::to_string(s));
}

}  // namespace

double hellinger(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw DimensionError("hellinger: length mismatch");
    check_simplex(p, "p");
    check_simplex(q, "q");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = std::sqrt(std::max(p[i], 0.0)) - std::sqrt(std::max(q[i], 0.0));
        s += d * d;
    }
    return std::min(1.0, std::sqrt(s) / std::sqrt(2.0));
}

std::vector<double> label_distribution(const std::vector<int>& labels, std::size_t k) {
    std::vector<double> d(k, 0.0);
    if (labels.empty()) return d;
    for (int y : labels) {
        if (y < 1 || static_cast<std::size_t>(y) > k)
            throw std::invalid_argument("label_distribution: label " + std::to_string(y) + " outside 1.." + std::to_string(k));
        d[static_cast<std::size_t>(y - 1)] += 1.0;
    }
    for (double& v : d) v /= static_cast<double>(labels.size());
    return d;
}

PlQuality pl_quality(const std::vector<std::optional<int>>& hard, const std::vector<int>& truth,
                     std::size_t k) {
    if (hard.size() != truth.size()) throw DimensionError("pl_quality: length mismatch");
    PlQuality q;
    std::vector<int> hard_labels;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < hard.size(); ++i) {
        if (!hard[i]) continue;
        hard_labels.push_back(*hard[i]);
        correct += *hard[i] == truth[i];
    }
    if (hard.empty() || hard_labels.empty()) return q;
    q.hard_ratio = static_cast<double>(hard_labels.size()) / static_cast<double>(hard.size());
    q.hard_accuracy = static_cast<double>(correct) / static_cast<double>(hard_labels.size());
    q.hellinger = hellinger(label_distribution(hard_labels, k), label_distribution(truth, k));
    return q;
}

PlQuality pl_quality(const PlAssignment& pl, const std::vector<int>& truth, std::size_t k) {
    return pl_quality(pl.hard_labels(), truth, k);
}

double certainty_fraction(const Matrix& probs, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("certainty_fraction: threshold must lie in (0, 1)");
    if (probs.rows() == 0) return 0.0;
    std::size_t above = 0;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        const auto row = probs.row(i);
        above += *std::max_element(row.begin(), row.end()) > threshold;
    }
    return static_cast<double>(above) / static_cast<double>(probs.rows());
}

}  // namespace abrsi
