#include "abrsi/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace abrsi {

std::string to_string(FoldIn f) {
    return f == FoldIn::scaled ? "scaled" : "standard";
}

LsiModel fit_lsi(const Matrix& features, std::size_t rank, Rng& rng, FoldIn mode) {
    if (rank == 0 || rank > std::min(features.rows(), features.cols()))
        throw std::invalid_argument("fit_lsi: rank " + std::to_string(rank) + " not in [1, " +
                                    std::to_string(std::min(features.rows(), features.cols())) +
                                    "]");
    LsiModel m;
    m.factors = truncated_svd(features, rank, rng);
    m.mode = mode;
    m.row_latents = m.factors.u;
    for (std::size_t i = 0; i < m.row_latents.rows(); ++i) {
        auto row = m.row_latents.row(i);
        for (std::size_t r = 0; r < rank; ++r) row[r] *= m.factors.s[r];
    }
    return m;
}

std::vector<double> LsiModel::fold_in(std::span<const double> x) const {
    if (x.size() != dim())
        throw DimensionError("fold_in: vector of length " + std::to_string(x.size()) +
                             " for a model over " + std::to_string(dim()) + " features");
    std::vector<double> z(rank(), 0.0);
    for (std::size_t r = 0; r < rank(); ++r) {
        z[r] = dot(x, factors.vt.row(r));
        if (mode == FoldIn::scaled) z[r] *= factors.s[r];
    }
    return z;
}

Matrix LsiModel::fold_in(const Matrix& x) const {
    if (x.cols() != dim())
        throw DimensionError("fold_in: input " + x.shape() + " for a model over " +
                             std::to_string(dim()) + " features");
    Matrix z = matmul_nt(x, factors.vt);
    if (mode == FoldIn::scaled)
        for (std::size_t i = 0; i < z.rows(); ++i) {
            auto row = z.row(i);
            for (std::size_t r = 0; r < row.size(); ++r) row[r] *= factors.s[r];
        }
    return z;
}

namespace {

// Unit rows; rows with norm below 1e-12 become zero so every cosine with
// them is 0.
Matrix unit_rows(const Matrix& m) {
    Matrix out = m;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto row = out.row(i);
        const double n = norm2(row);
        if (n < 1e-12) std::fill(row.begin(), row.end(), 0.0);
        else
            for (double& v : row) v /= n;
    }
    return out;
}

double dot4(const double* a, const double* b, std::size_t n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

}  // namespace

std::vector<std::size_t> top1_cosine(const Matrix& queries, const Matrix& candidates) {
    if (queries.cols() != candidates.cols())
        throw DimensionError("top1_cosine: queries " + queries.shape() + " vs candidates " +
                             candidates.shape());
    if (candidates.rows() == 0) throw std::invalid_argument("top1_cosine: no candidates");
    const Matrix q = unit_rows(queries);
    const Matrix c = unit_rows(candidates);
    const std::size_t d = q.cols();
    std::vector<std::size_t> best(q.rows(), 0);
    for (std::size_t i = 0; i < q.rows(); ++i) {
        const double* qi = q.row(i).data();
        double top = -INFINITY;
        for (std::size_t j = 0; j < c.rows(); ++j) {
            const double v = dot4(qi, c.row(j).data(), d);
            if (v > top) {
                top = v;
                best[i] = j;
            }
        }
    }
    return best;
}

std::vector<std::size_t> topn_cosine(std::span<const double> query, const Matrix& candidates,
                                     std::size_t n) {
    if (query.size() != candidates.cols())
        throw DimensionError("topn_cosine: query length does not match candidates");
    const Matrix c = unit_rows(candidates);
    std::vector<double> qn(query.begin(), query.end());
    const double norm = norm2(qn);
    if (norm < 1e-12) std::fill(qn.begin(), qn.end(), 0.0);
    else
        for (double& v : qn) v /= norm;
    std::vector<double> score(c.rows());
    for (std::size_t j = 0; j < c.rows(); ++j) score[j] = dot4(qn.data(), c.row(j).data(), qn.size());
    std::vector<std::size_t> idx(c.rows());
    std::iota(idx.begin(), idx.end(), 0);
    n = std::min(n, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          return score[a] != score[b] ? score[a] > score[b] : a < b;
                      });
    idx.resize(n);
    return idx;
}

std::size_t BiRecommendation::present_count() const {
    return static_cast<std::size_t>(std::count(present.begin(), present.end(), true));
}

namespace {

struct Centroids {
    Matrix mu_s, mu_t;
};

Centroids centroids(const BiRecommendation& rec, const Matrix& f_s, const Matrix& f_t,
                    std::vector<double>* counts) {
    const std::size_t d = f_t.cols();
    Centroids c{Matrix(rec.k, d), Matrix(rec.k, d)};
    std::vector<double> n(rec.k, 0.0);
    for (std::size_t j = 0; j < rec.pl_rs.size(); ++j) {
        const auto k = static_cast<std::size_t>(rec.pl_rs[j] - 1);
        const auto src = rec.source_side ? f_s.row(rec.rs_s_top1[j]) : f_t.row(j);
        auto row = c.mu_s.row(k);
        for (std::size_t m = 0; m < d; ++m) row[m] += src[m];
        n[k] += 1.0;
    }
    for (std::size_t k = 0; k < rec.k; ++k) {
        if (n[k] > 0)
            for (double& v : c.mu_s.row(k)) v /= n[k];
        const auto& top = rec.rs_t_topn[k];
        if (top.empty()) continue;
        auto row = c.mu_t.row(k);
        for (std::size_t j : top)
            for (std::size_t m = 0; m < d; ++m) row[m] += f_t(j, m);
        for (double& v : row) v /= static_cast<double>(top.size());
    }
    if (counts) *counts = std::move(n);
    return c;
}

}  // namespace

BiRecommendation recommend(const LsiModel& model_s, const LsiModel& model_t, const Matrix& f_s,
                           const std::vector<int>& y_s, const Matrix& f_t, std::size_t k,
                           const RecommendOptions& opts) {
    if (f_s.cols() != f_t.cols())
        throw DimensionError("recommend: source features " + f_s.shape() + " and target " +
                             f_t.shape() + " live in different spaces");
    if (y_s.size() != f_s.rows()) throw DimensionError("recommend: label count mismatch");
    if (model_s.row_latents.rows() != f_s.rows() || model_t.row_latents.rows() != f_t.rows())
        throw DimensionError("recommend: models were not fit on these features");
    if (opts.top_n == 0) throw std::invalid_argument("recommend: top_n must be positive");

    BiRecommendation rec;
    rec.k = k;
    rec.source_side = opts.abr_source_side;
    // Source-trained recommender: top-1 source instance per target instance.
    rec.rs_s_top1 = top1_cosine(model_s.fold_in(f_t), model_s.row_latents);
    rec.pl_rs.resize(f_t.rows());
    for (std::size_t j = 0; j < f_t.rows(); ++j) rec.pl_rs[j] = y_s[rec.rs_s_top1[j]];

    // Target-trained recommender: top-N target instances per source category centroid.
    Matrix centre(k, f_s.cols());
    std::vector<double> count(k, 0.0);
    for (std::size_t i = 0; i < f_s.rows(); ++i) {
        const auto c = static_cast<std::size_t>(y_s[i] - 1);
        if (c >= k) throw std::invalid_argument("recommend: source label out of range");
        auto row = centre.row(c);
        for (std::size_t m = 0; m < row.size(); ++m) row[m] += f_s(i, m);
        count[c] += 1.0;
    }
    rec.rs_t_topn.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
        if (count[c] == 0.0) continue;
        for (double& v : centre.row(c)) v /= count[c];
        rec.rs_t_topn[c] = topn_cosine(model_t.fold_in(centre.row(c)), model_t.row_latents, opts.top_n);
    }

    std::vector<double> n;
    auto cents = centroids(rec, f_s, f_t, &n);
    rec.mu_rs_s = std::move(cents.mu_s);
    rec.mu_rs_t = std::move(cents.mu_t);
    rec.present.resize(k);
    for (std::size_t c = 0; c < k; ++c) rec.present[c] = n[c] > 0 && !rec.rs_t_topn[c].empty();
    return rec;
}

AbrResult abr_loss(const BiRecommendation& rec, const Matrix& f_s, const Matrix& f_t) {
    AbrResult out;
    out.d_fs = Matrix(f_s.rows(), f_s.cols());
    out.d_ft = Matrix(f_t.rows(), f_t.cols());
    if (rec.pl_rs.size() != f_t.rows())
        throw DimensionError("abr_loss: recommendation was made for a different target set");
    const std::size_t present = rec.present_count();
    if (present == 0) {
        out.warnings.push_back("no category present in both recommendations; L_ABR = 0");
        return out;
    }
    std::vector<double> n;
    const auto c = centroids(rec, f_s, f_t, &n);
    const std::size_t d = f_t.cols();
    const double kp = static_cast<double>(present);
    Matrix diff(rec.k, d);
    for (std::size_t k = 0; k < rec.k; ++k) {
        if (!rec.present[k]) continue;
        for (std::size_t m = 0; m < d; ++m) {
            diff(k, m) = c.mu_s(k, m) - c.mu_t(k, m);
            out.value += diff(k, m) * diff(k, m) / kp;
        }
    }
    for (std::size_t j = 0; j < rec.pl_rs.size(); ++j) {
        const auto k = static_cast<std::size_t>(rec.pl_rs[j] - 1);
        if (!rec.present[k]) continue;
        auto g = rec.source_side ? out.d_fs.row(rec.rs_s_top1[j]) : out.d_ft.row(j);
        for (std::size_t m = 0; m < d; ++m) g[m] += 2.0 * diff(k, m) / (kp * n[k]);
    }
    for (std::size_t k = 0; k < rec.k; ++k) {
        if (!rec.present[k]) continue;
        const double nt = static_cast<double>(rec.rs_t_topn[k].size());
        for (std::size_t j : rec.rs_t_topn[k]) {
            auto g = out.d_ft.row(j);
            for (std::size_t m = 0; m < d; ++m) g[m] -= 2.0 * diff(k, m) / (kp * nt);
        }
    }
    return out;
}

}  // namespace abrsi
