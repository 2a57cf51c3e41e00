#pragma once

// LSI recommenders over projected features and the bi-recommendation
// matching loss.

#include <string>
#include <vector>

#include "abrsi/numerics.hpp"

namespace abrsi {

enum class FoldIn {
    scaled,  // x * V * diag(s)
    standard        // x * V, which lands exactly on a training row's stored latent
};

std::string to_string(FoldIn f);

// Truncated SVD of an n x d_C feature matrix F = U diag(s) V^T. The stored
// per-instance latents are U diag(s) (= F V); V is the feature-side basis.
struct LsiModel {
    SvdFactors factors;
    Matrix row_latents;  // n x R
    FoldIn mode = FoldIn::scaled;

    std::size_t rank() const noexcept { return factors.rank(); }
    std::size_t dim() const noexcept { return factors.vt.cols(); }
    std::vector<double> fold_in(std::span<const double> x) const;
    Matrix fold_in(const Matrix& x) const;
};

LsiModel fit_lsi(const Matrix& features, std::size_t rank, Rng& rng,
                 FoldIn mode = FoldIn::scaled);

// Index of the row of `candidates` with the highest cosine to each row of
// `queries`; ties go to the lowest index. Both sides are plain latent rows.
std::vector<std::size_t> top1_cosine(const Matrix& queries, const Matrix& candidates);
// The n highest-cosine candidate rows for one query, best first.
std::vector<std::size_t> topn_cosine(std::span<const double> query, const Matrix& candidates,
                                     std::size_t n);

struct RecommendOptions {
    std::size_t top_n = 3;
    // Source-side centroid: mean of the recommended source instances rather
    // than of the target instances they were recommended to.
    bool abr_source_side = false;
};

struct BiRecommendation {
    std::size_t k = 0;
    std::vector<std::size_t> rs_s_top1;               // per target row, a source row index
    std::vector<int> pl_rs;                           // label of that source row
    std::vector<std::vector<std::size_t>> rs_t_topn;  // per category, target row indices
    Matrix mu_rs_s;                                   // K x d_C
    Matrix mu_rs_t;                                   // K x d_C
    std::vector<bool> present;
    bool source_side = false;

    std::size_t present_count() const;
};

BiRecommendation recommend(const LsiModel& model_s, const LsiModel& model_t, const Matrix& f_s,
                           const std::vector<int>& y_s, const Matrix& f_t, std::size_t k,
                           const RecommendOptions& opts = {});

struct AbrResult {
    double value = 0.0;
    Matrix d_fs;  // nonzero only in source-side mode
    Matrix d_ft;
    std::vector<std::string> warnings;
};

// Mean over present categories of |mu_S^k - mu_T^k|^2, with the centroids
// recomputed from the given features and the recommendation's selections
// held fixed.
AbrResult abr_loss(const BiRecommendation& rec, const Matrix& f_s, const Matrix& f_t);

}  // namespace abrsi
