#pragma once

// Dense row-major linear algebra, a thin SVD, k-means and a seeded RNG.
// Everything here is deterministic given its inputs (and the Rng state).

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace abrsi {

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    // Rejects data whose length is not rows*cols or that holds NaN/Inf.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    Matrix transpose() const;
    Matrix select_rows(std::span<const std::size_t> idx) const;
    bool all_finite() const noexcept;
    // Throws std::domain_error naming `what` when a NaN/Inf is present.
    void require_finite(const std::string& what) const;

    std::string shape() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// mt19937_64 core with hand-rolled uniform/normal draws; the standard
// distributions are implementation-defined, these are not.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t next_u64() { return engine_(); }
    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Unbiased integer on [0, n).
    std::size_t uniform_index(std::size_t n);
    // Standard normal via Box-Muller (polar form is avoided to keep draw counts fixed).
    double normal();

    // Text snapshot of the full generator state, for checkpoints.
    std::string state() const;
    void restore(const std::string& state);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct SvdFactors {
    Matrix u;               // m x r, orthonormal columns
    std::vector<double> s;  // r values, descending, non-negative
    Matrix vt;              // r x n, orthonormal rows

    std::size_t rank() const noexcept { return s.size(); }
    Matrix reconstruct() const;
};

struct SvdOptions {
    double tolerance = 1e-8;
    std::size_t max_sweeps = 500;
};

struct KMeansResult {
    std::vector<std::size_t> assignments;
    Matrix centroids;
    std::vector<double> inertia_history;  // one entry per assignment pass

    double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T without materialising the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& m);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double squared_distance(std::span<const double> a, std::span<const double> b);

// Returns 0 when either vector has norm below 1e-12.
double cosine_sim(std::span<const double> a, std::span<const double> b);

// Best rank-r approximation factors. Householder QR followed by one-sided
// Jacobi on the triangular factor; `rng` seeds basis completion when the
// input is rank deficient.
SvdFactors truncated_svd(const Matrix& m, std::size_t r, Rng& rng, const SvdOptions& opts = {});

// Lloyd iterations from k-means++ seeding. Empty clusters take the point
// farthest from its current centroid.
KMeansResult kmeans(const Matrix& points, std::size_t k, Rng& rng, std::size_t max_iter = 100);

}  // namespace abrsi
