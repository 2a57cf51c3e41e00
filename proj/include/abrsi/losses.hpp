#pragma once

// Loss terms of the training objective. Each returns its value and the
// gradient with respect to its direct inputs; the trainer chains those
// through the networks.

#include <optional>
#include <string>
#include <vector>

#include "abrsi/network.hpp"
#include "abrsi/numerics.hpp"

namespace abrsi {

inline constexpr double kLogFloor = 1e-12;
inline constexpr double kDiscClampLo = 1e-7;
inline constexpr double kDiscClampHi = 1.0 - 1e-7;

struct LossGrad {
    double value = 0.0;
    Matrix grad;  // same shape as the differentiated input
};

// Mean cross-entropy over source rows; labels are 1-based.
LossGrad l_sup(const Matrix& probs_s, const std::vector<int>& labels);

// Negative entropy of the mean target prediction, in [-log K, 0].
LossGrad l_div(const Matrix& probs_t);

// Tsallis entropy summed over target rows. alpha must be positive and not 1.
LossGrad l_te(const Matrix& probs_t, double alpha);

// Per-category mean outputs. Source means average rows labelled k; target
// means weight every row q_j by its own k-th entry, with hard-labelled rows
// replaced by their one-hot vector.
struct CategoryMeans {
    std::vector<int> categories;  // 1-based ids that could be formed, ascending
    Matrix source_mean;           // K' x K
    Matrix target_mean;           // K' x K
    std::vector<double> target_weight;
    std::vector<std::string> warnings;
};

struct EkInputs {
    const Matrix* probs_s = nullptr;
    const std::vector<int>* labels_s = nullptr;
    const Matrix* probs_t = nullptr;
    // Per target row: hard label when the voters agreed.
    const std::vector<std::optional<int>>* hard = nullptr;
    bool use_hard = true;        // false: every row uses its classifier output
    bool exclude_soft = false;   // true: rows without a hard label are left out
};

CategoryMeans category_means(const EkInputs& in);

// Accumulates dL/dprobs_s and dL/dprobs_t given dL/d(source_mean) and
// dL/d(target_mean). Hard rows are constants and receive nothing.
void category_means_backward(const EkInputs& in, const CategoryMeans& means, const Matrix& d_source,
                             const Matrix& d_target, Matrix& g_probs_s, Matrix& g_probs_t);

// Element-wise squared difference per category (K' x K), or its sum (K' x 1)
// when scalar is set.
Matrix error_knowledge(const CategoryMeans& means, bool scalar);
void error_knowledge_backward(const CategoryMeans& means, bool scalar, const Matrix& d_ek,
                              Matrix& d_source, Matrix& d_target);

struct EkBuild {
    CategoryMeans means;
    Matrix ek;
};
EkBuild build_ek(const EkInputs& in, bool scalar);

// Current and previous-epoch error knowledge, one row per category (K x E).
struct EkState {
    Matrix current;
    Matrix previous;
    std::vector<bool> current_present;
    double psi = -0.3;
    double phi = -0.05;

    static EkState make(std::size_t k, std::size_t width, double psi, double phi);
    void record(const std::vector<int>& categories, const Matrix& ek);
    // previous <- current, current cleared.
    void advance_epoch();
};

enum class EklGrouping {
    sum_variants,         // sum over variants of (1 - log D), divided by V*K'
    three_minus_log_each  // (V - log D) per variant, divided by V*K'
};

struct EklOptions {
    EklGrouping grouping = EklGrouping::sum_variants;
    bool use_zero = true;
    bool use_reverse = true;
    bool use_previous = true;
};

struct EklResult {
    double value = 0.0;
    Matrix d_ek;         // dL/dEK, K' x E (through the EK and psi*EK rows)
    MlpGrads d_grads;    // dL/d(discriminator parameters), unscaled and unreversed
    double d_accuracy = 0.0;  // D(EK) > 0.5 and D(EK_0) < 0.5, averaged over 2K'
};

// `categories` selects the rows of state.previous used for the EK_P variant.
EklResult l_ekl(const Matrix& ek, const std::vector<int>& categories, const EkState& state,
                const Mlp& d, const EklOptions& opts = {});

// Standard domain-adversarial term used in place of L_EKL by one ablation:
// mean log D(f_s) + mean log(1 - D(f_t)).
struct DomainAdvResult {
    double value = 0.0;
    Matrix d_fs;
    Matrix d_ft;
    MlpGrads d_grads;
    double d_accuracy = 0.0;
};
DomainAdvResult domain_adversarial(const Matrix& f_s, const Matrix& f_t, const Mlp& d);

// Mean Euclidean distance between per-category source and target means,
// the other ablation stand-in. Gradients go to the two mean matrices.
struct ProbMatchResult {
    double value = 0.0;
    Matrix d_source;
    Matrix d_target;
};
ProbMatchResult prob_matching(const CategoryMeans& means);

struct Schedules {
    double rho_max = 0.1;
    double alpha_max = 8.0;
    double alpha_min = 4.0;
    std::size_t total_epochs = 200;

    double rho(std::size_t epoch) const;
    double alpha(std::size_t epoch) const;
};

}  // namespace abrsi
