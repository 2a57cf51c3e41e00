#include "abrsi/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <numbers>
#include <sstream>

namespace abrsi {

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (!std::isfinite(fill)) throw std::domain_error("Matrix: non-finite fill value");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols)
        throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape());
    require_finite("Matrix construction");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    const std::size_t cols = rows.front().size();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw DimensionError("Matrix::from_rows: ragged rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Matrix(rows.size(), cols, std::move(data));
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

Matrix Matrix::select_rows(std::span<const std::size_t> idx) const {
    Matrix out(idx.size(), cols_);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= rows_) throw DimensionError("Matrix::select_rows: index out of range");
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(idx[i] * cols_), cols_,
                    out.data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
    }
    return out;
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::require_finite(const std::string& what) const {
    if (!all_finite()) throw std::domain_error(what + ": non-finite entry in " + shape() + " matrix");
}

std::string Matrix::shape() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

// ---------------------------------------------------------------------------
// Rng
// ---------------------------------------------------------------------------

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_index: empty range");
    const std::uint64_t bound = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(theta);
    has_spare_ = true;
    return radius * std::cos(theta);
}

std::string Rng::state() const {
    std::ostringstream os;
    os.precision(17);
    os << seed_ << ' ' << has_spare_ << ' ' << std::hexfloat << spare_ << ' ' << engine_;
    return os.str();
}

void Rng::restore(const std::string& state) {
    std::istringstream is(state);
    double spare = 0.0;
    std::string spare_text;
    is >> seed_ >> has_spare_ >> spare_text;
    spare = std::strtod(spare_text.c_str(), nullptr);
    is >> engine_;
    if (!is) throw std::invalid_argument("Rng::restore: malformed state string");
    spare_ = spare;
}

// ---------------------------------------------------------------------------
// Products and vector helpers
// ---------------------------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: cannot multiply " + a.shape() + " by " + b.shape());
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* bk = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw DimensionError("matmul_tn: cannot multiply transpose of " + a.shape() + " by " +
                             b.shape());
    Matrix c(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* ar = a.row(r).data();
        const double* br = b.row(r).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double ari = ar[i];
            if (ari == 0.0) continue;
            double* ci = c.row(i).data();
            for (std::size_t j = 0; j < n; ++j) ci[j] += ari * br[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw DimensionError("matmul_nt: cannot multiply " + a.shape() + " by transpose of " +
                             b.shape());
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(a.row(i), b.row(j));
    return c;
}

double frobenius_norm(const Matrix& m) {
    return norm2(m.data());
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionError("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("squared_distance: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionError("cosine_sim: length mismatch " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// SVD
// ---------------------------------------------------------------------------

Matrix SvdFactors::reconstruct() const {
    Matrix us = u;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) us(i, j) *= s[j];
    return matmul(us, vt);
}

namespace {

// Thin Householder QR of a tall matrix (m >= n). Returns Q (m x n) and R (n x n).
void householder_qr(const Matrix& a, Matrix& q, Matrix& r) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Matrix work = a;
    std::vector<std::vector<double>> reflectors(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<double> v(m - k);
        for (std::size_t i = k; i < m; ++i) v[i - k] = work(i, k);
        const double alpha = norm2(v);
        std::vector<double>& h = reflectors[k];
        if (alpha == 0.0) continue;
        v[0] += (v[0] >= 0.0 ? alpha : -alpha);
        const double vnorm = norm2(v);
        for (double& x : v) x /= vnorm;
        for (std::size_t j = k; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) s += v[i - k] * work(i, j);
            for (std::size_t i = k; i < m; ++i) work(i, j) -= 2.0 * s * v[i - k];
        }
        h = std::move(v);
    }
    r = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) r(i, j) = work(i, j);
    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I.
    q = Matrix(m, n);
    for (std::size_t i = 0; i < n; ++i) q(i, i) = 1.0;
    for (std::size_t kk = n; kk-- > 0;) {
        const auto& v = reflectors[kk];
        if (v.empty()) continue;
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = kk; i < m; ++i) s += v[i - kk] * q(i, j);
            for (std::size_t i = kk; i < m; ++i) q(i, j) -= 2.0 * s * v[i - kk];
        }
    }
}

struct JacobiResult {
    Matrix cols;  // columns stored as rows: n x n, row j = j-th column of A*V
    Matrix v;     // n x n, row j = j-th right singular vector
};

// One-sided (Hestenes) Jacobi on a square matrix. Rotates column pairs until
// every pair is orthogonal to working precision.
JacobiResult one_sided_jacobi(const Matrix& a, const SvdOptions& opts) {
    const std::size_t n = a.cols();
    JacobiResult res{a.transpose(), Matrix::identity(n)};
    Matrix& w = res.cols;
    Matrix& v = res.v;
    constexpr double kRotateBelow = 1e-15;
    double residual = 0.0;
    for (std::size_t sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        residual = 0.0;
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                auto wp = w.row(p);
                auto wq = w.row(q);
                const double alpha = dot(wp, wp);
                const double beta = dot(wq, wq);
                const double gamma = dot(wp, wq);
                if (alpha == 0.0 || beta == 0.0) continue;
                const double off = std::abs(gamma) / std::sqrt(alpha * beta);
                residual = std::max(residual, off);
                if (off <= kRotateBelow) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < w.cols(); ++i) {
                    const double x = wp[i];
                    const double y = wq[i];
                    wp[i] = c * x - s * y;
                    wq[i] = s * x + c * y;
                }
                auto vp = v.row(p);
                auto vq = v.row(q);
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = vp[i];
                    const double y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
        if (!rotated) return res;
    }
    if (residual > opts.tolerance)
        throw ConvergenceError("truncated_svd: Jacobi sweeps did not converge (residual " +
                                   std::to_string(residual) + ")",
                               residual);
    return res;
}

// Replaces columns `from..` of `basis` (given as rows) with vectors orthonormal
// to everything before them.
void complete_orthonormal(Matrix& rows_basis, std::size_t from, Rng& rng) {
    const std::size_t dim = rows_basis.cols();
    for (std::size_t j = from; j < rows_basis.rows(); ++j) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            auto x = rows_basis.row(j);
            for (double& e : x) e = rng.normal();
            // Two passes of Gram-Schmidt for stability.
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t i = 0; i < j; ++i) {
                    const double proj = dot(rows_basis.row(i), x);
                    auto b = rows_basis.row(i);
                    for (std::size_t t = 0; t < dim; ++t) x[t] -= proj * b[t];
                }
            }
            const double nx = norm2(x);
            if (nx > 1e-8) {
                for (double& e : x) e /= nx;
                break;
            }
        }
    }
}

}  // namespace

SvdFactors truncated_svd(const Matrix& m, std::size_t r, Rng& rng, const SvdOptions& opts) {
    const std::size_t min_dim = std::min(m.rows(), m.cols());
    if (r < 1 || r > min_dim)
        throw std::invalid_argument("truncated_svd: rank " + std::to_string(r) +
                                    " outside [1, " + std::to_string(min_dim) + "] for " +
                                    m.shape() + " input");
    m.require_finite("truncated_svd");
    const bool transposed = m.rows() < m.cols();
    const Matrix a = transposed ? m.transpose() : m;  // tall: rows >= cols
    const std::size_t n = a.cols();

    Matrix q, rfac;
    householder_qr(a, q, rfac);
    JacobiResult jac = one_sided_jacobi(rfac, opts);

    std::vector<double> sv(n);
    for (std::size_t j = 0; j < n; ++j) sv[j] = norm2(jac.cols.row(j));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sv[x] > sv[y]; });

    // Left vectors of R (as rows), in descending order.
    Matrix ur(n, n);
    Matrix vr(n, n);
    std::vector<double> s_sorted(n);
    const double s_max = sv[order[0]];
    const double cutoff = std::max(s_max, 1.0) * 1e-13 * static_cast<double>(n);
    std::size_t numeric_rank = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        s_sorted[j] = sv[src];
        std::copy_n(jac.v.row(src).begin(), n, vr.row(j).begin());
        if (sv[src] > cutoff) {
            auto u = ur.row(j);
            auto c = jac.cols.row(src);
            for (std::size_t i = 0; i < n; ++i) u[i] = c[i] / sv[src];
            numeric_rank = j + 1;
        }
    }
    complete_orthonormal(ur, numeric_rank, rng);
    for (std::size_t j = numeric_rank; j < n; ++j) s_sorted[j] = std::max(s_sorted[j], 0.0);

    // U = Q * Ur^T (first r columns).
    Matrix left(a.rows(), r);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < r; ++j) left(i, j) = dot(q.row(i), ur.row(j));
    Matrix right(r, n);
    for (std::size_t j = 0; j < r; ++j) std::copy_n(vr.row(j).begin(), n, right.row(j).begin());

    SvdFactors out;
    out.s.assign(s_sorted.begin(), s_sorted.begin() + static_cast<std::ptrdiff_t>(r));
    if (!transposed) {
        out.u = std::move(left);
        out.vt = std::move(right);
    } else {
        out.u = right.transpose();
        out.vt = left.transpose();
    }
    return out;
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

namespace {

double assign_points(const Matrix& points, const Matrix& centroids,
                     std::vector<std::size_t>& assignments, std::vector<double>& dist) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids.rows(); ++c) {
            const double d = squared_distance(points.row(i), centroids.row(c));
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        assignments[i] = best;
        dist[i] = best_d;
        inertia += best_d;
    }
    return inertia;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, Rng& rng, std::size_t max_iter) {
    const std::size_t n = points.rows();
    if (n == 0) throw std::invalid_argument("kmeans: empty input");
    if (k == 0) throw std::invalid_argument("kmeans: k must be positive");
    if (k > n)
        throw std::invalid_argument("kmeans: k = " + std::to_string(k) + " exceeds " +
                                    std::to_string(n) + " points");
    if (max_iter == 0) throw std::invalid_argument("kmeans: max_iter must be at least 1");
    const std::size_t dim = points.cols();

    // k-means++ seeding.
    Matrix centroids(k, dim);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::vector<char> chosen(n, 0);
    std::size_t first = rng.uniform_index(n);
    chosen[first] = 1;
    std::copy_n(points.row(first).begin(), dim, centroids.row(0).begin());
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(c - 1)));
            total += d2[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > target && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) {
                for (std::size_t i = n; i-- > 0;)
                    if (d2[i] > 0.0) {
                        pick = i;
                        break;
                    }
            }
        } else {
            // All remaining points coincide with a centroid; take an unused index.
            std::vector<std::size_t> unused;
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) unused.push_back(i);
            pick = unused[rng.uniform_index(unused.size())];
        }
        chosen[pick] = 1;
        std::copy_n(points.row(pick).begin(), dim, centroids.row(c).begin());
    }

    KMeansResult res;
    res.assignments.assign(n, 0);
    std::vector<double> dist(n, 0.0);
    res.inertia_history.push_back(assign_points(points, centroids, res.assignments, dist));

    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t a : res.assignments) ++counts[a];
        // Empty-cluster repair: move the worst-fitted point of a multi-member cluster.
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[res.assignments[i]] > 1 && dist[i] > far_d) {
                    far_d = dist[i];
                    far = i;
                }
            }
            --counts[res.assignments[far]];
            res.assignments[far] = c;
            dist[far] = 0.0;
            counts[c] = 1;
        }
        Matrix next(k, dim);
        for (std::size_t i = 0; i < n; ++i) {
            auto dst = next.row(res.assignments[i]);
            auto src = points.row(i);
            for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
        }
        for (std::size_t c = 0; c < k; ++c)
            for (double& x : next.row(c)) x /= static_cast<double>(counts[c]);
        centroids = std::move(next);

        std::vector<std::size_t> previous = res.assignments;
        const double inertia = assign_points(points, centroids, res.assignments, dist);
        const double last = res.inertia_history.back();
        if (inertia > last + 1e-9 * std::max(1.0, last))
            throw std::logic_error("kmeans: inertia increased from " + std::to_string(last) +
                                   " to " + std::to_string(inertia));
        res.inertia_history.push_back(inertia);
        if (previous == res.assignments) break;
    }
    res.centroids = std::move(centroids);
    return res;
}

}  // namespace abrsi
