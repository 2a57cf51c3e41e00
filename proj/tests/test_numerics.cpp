#include "doctest.h"

#include <cmath>

#include "abrsi/numerics.hpp"
#include "oracles.hpp"

using abrsi::Matrix;
using abrsi::Rng;

TEST_CASE("matrix rejects non-finite data and bad lengths") {
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), abrsi::DimensionError);
    CHECK_THROWS_AS(Matrix(1, 2, std::vector<double>{1, NAN}), std::domain_error);
    CHECK_THROWS_AS(Matrix(1, 2, std::vector<double>{INFINITY, 0}), std::domain_error);
}

TEST_CASE("matmul identity, zero and naive oracle") {
    Rng rng(7);
    const Matrix a = oracle::random_matrix(3, 3, rng);
    CHECK(abrsi::matmul(Matrix::identity(3), a) == a);
    const Matrix z = abrsi::matmul(a, Matrix(3, 4));
    for (double v : z.data()) CHECK(v == 0.0);

    const Matrix x = oracle::random_matrix(3, 4, rng);
    const Matrix y = oracle::random_matrix(4, 2, rng);
    CHECK(oracle::max_abs_diff(abrsi::matmul(x, y), oracle::naive_matmul(x, y)) < 1e-12);
    CHECK(oracle::max_abs_diff(abrsi::matmul_tn(x.transpose(), y), oracle::naive_matmul(x, y)) <
          1e-12);
    CHECK(oracle::max_abs_diff(abrsi::matmul_nt(x, y.transpose()), oracle::naive_matmul(x, y)) <
          1e-12);
}

TEST_CASE("matmul dimension mismatch names both shapes") {
    try {
        abrsi::matmul(Matrix(2, 3), Matrix(2, 3));
        FAIL("expected throw");
    } catch (const abrsi::DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
    }
}

namespace {

void check_orthonormal_columns(const Matrix& u) {
    for (std::size_t i = 0; i < u.cols(); ++i)
        for (std::size_t j = 0; j < u.cols(); ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < u.rows(); ++r) s += u(r, i) * u(r, j);
            CHECK(std::abs(s - (i == j ? 1.0 : 0.0)) < 1e-8);
        }
}

}  // namespace

TEST_CASE("svd of identity") {
    Rng rng(1);
    const auto f = abrsi::truncated_svd(Matrix::identity(4), 4, rng);
    for (double s : f.s) CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(oracle::max_abs_diff(f.reconstruct(), Matrix::identity(4)) < 1e-12);
}

TEST_CASE("svd recovers a rank-2 matrix built from outer products") {
    Rng rng(3);
    Matrix m(5, 4);
    const std::vector<double> a1{1, 2, 0, -1, 3}, b1{0.5, -1, 2, 1};
    const std::vector<double> a2{0, 1, 1, 4, -2}, b2{1, 1, -0.5, 0};
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) m(i, j) = a1[i] * b1[j] + a2[i] * b2[j];
    const auto f = abrsi::truncated_svd(m, 2, rng);
    Matrix diff = f.reconstruct();
    for (std::size_t i = 0; i < diff.size(); ++i) diff.data()[i] -= m.data()[i];
    CHECK(abrsi::frobenius_norm(diff) < 1e-8);
    check_orthonormal_columns(f.u);
    check_orthonormal_columns(f.vt.transpose());
}

TEST_CASE("full-rank svd agrees with the Gram eigendecomposition oracle") {
    Rng rng(11);
    const Matrix m = oracle::random_matrix(6, 5, rng);
    const auto f = abrsi::truncated_svd(m, 5, rng);
    const auto expect = oracle::gram_singular_values(m);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(f.s[i] - expect[i]) < 1e-6 * expect[0]);
    CHECK(oracle::max_abs_diff(f.reconstruct(), m) / abrsi::frobenius_norm(m) < 1e-6);
}

TEST_CASE("svd property: reconstruction, ordering and orthonormality up to 50x50") {
    Rng rng(2024);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t rows = 1 + rng.uniform_index(50);
        const std::size_t cols = 1 + rng.uniform_index(50);
        const Matrix m = oracle::random_matrix(rows, cols, rng);
        const std::size_t full = std::min(rows, cols);
        const auto f = abrsi::truncated_svd(m, full, rng);
        Matrix diff = f.reconstruct();
        for (std::size_t i = 0; i < diff.size(); ++i) diff.data()[i] -= m.data()[i];
        CHECK(abrsi::frobenius_norm(diff) / abrsi::frobenius_norm(m) < 1e-6);
        for (std::size_t i = 1; i < f.s.size(); ++i) CHECK(f.s[i - 1] >= f.s[i]);
        CHECK(f.s.back() >= 0.0);
        check_orthonormal_columns(f.u);
        check_orthonormal_columns(f.vt.transpose());
    }
}

TEST_CASE("svd handles rank-deficient input with an orthonormal completion") {
    Rng rng(5);
    Matrix m(6, 4);
    for (std::size_t i = 0; i < 6; ++i) {
        m(i, 0) = static_cast<double>(i);
        m(i, 1) = 2.0 * static_cast<double>(i);
    }
    const auto f = abrsi::truncated_svd(m, 4, rng);
    CHECK(f.s[1] < 1e-10);
    check_orthonormal_columns(f.u);
    CHECK(oracle::max_abs_diff(f.reconstruct(), m) < 1e-10);
}

TEST_CASE("svd rank out of range") {
    Rng rng(1);
    CHECK_THROWS_AS(abrsi::truncated_svd(Matrix(3, 2), 0, rng), std::invalid_argument);
    CHECK_THROWS_AS(abrsi::truncated_svd(Matrix(3, 2), 3, rng), std::invalid_argument);
}

TEST_CASE("svd reports non-convergence with its residual") {
    Rng rng(9);
    const Matrix m = oracle::random_matrix(8, 8, rng);
    abrsi::SvdOptions opts;
    opts.max_sweeps = 1;
    try {
        abrsi::truncated_svd(m, 8, rng, opts);
        FAIL("expected ConvergenceError");
    } catch (const abrsi::ConvergenceError& e) {
        CHECK(e.residual() > opts.tolerance);
    }
}

TEST_CASE("kmeans degenerate and exact cases") {
    Rng rng(4);
    Matrix same(5, 3, 0.25);
    const auto one = abrsi::kmeans(same, 1, rng);
    for (double c : one.centroids.row(0)) CHECK(c == doctest::Approx(0.25));

    const Matrix pts = oracle::random_matrix(7, 2, rng);
    const auto each = abrsi::kmeans(pts, 7, rng);
    CHECK(each.inertia() == doctest::Approx(0.0).epsilon(1e-15));

    CHECK_THROWS_AS(abrsi::kmeans(Matrix(0, 2), 1, rng), std::invalid_argument);
    CHECK_THROWS_AS(abrsi::kmeans(pts, 0, rng), std::invalid_argument);
    CHECK_THROWS_AS(abrsi::kmeans(pts, 8, rng), std::invalid_argument);
}

TEST_CASE("kmeans separates two blobs and every point sits at its nearest centroid") {
    Rng rng(8);
    Matrix pts(60, 3);
    for (std::size_t i = 0; i < 60; ++i) {
        pts(i, 0) = (i % 2 == 0 ? 10.0 : -10.0) + rng.normal();
        pts(i, 1) = rng.normal();
        pts(i, 2) = rng.normal();
    }
    const auto res = abrsi::kmeans(pts, 2, rng, 50);
    const std::size_t pos_cluster = res.assignments[0];
    for (std::size_t i = 0; i < 60; ++i)
        CHECK((res.assignments[i] == pos_cluster) == (pts(i, 0) > 0));
    // Brute-force nearest-centroid check.
    for (std::size_t i = 0; i < 60; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < 2; ++c)
            if (abrsi::squared_distance(pts.row(i), res.centroids.row(c)) <
                abrsi::squared_distance(pts.row(i), res.centroids.row(best)))
                best = c;
        CHECK(best == res.assignments[i]);
    }
}

TEST_CASE("kmeans inertia is non-increasing and runs are reproducible") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        Rng gen(seed);
        const Matrix pts = oracle::random_matrix(200, 4, gen);
        Rng a(seed), b(seed);
        const auto ra = abrsi::kmeans(pts, 6, a, 100);
        const auto rb = abrsi::kmeans(pts, 6, b, 100);
        CHECK(ra.assignments == rb.assignments);
        CHECK(ra.centroids == rb.centroids);
        for (std::size_t i = 1; i < ra.inertia_history.size(); ++i)
            CHECK(ra.inertia_history[i] <= ra.inertia_history[i - 1] + 1e-12);
    }
}

TEST_CASE("cosine similarity conventions and oracle") {
    const std::vector<double> a{1, 2, 3}, e1{1, 0}, e2{0, 1}, z{0, 0, 0};
    CHECK(abrsi::cosine_sim(a, a) == doctest::Approx(1.0));
    CHECK(abrsi::cosine_sim(e1, e2) == 0.0);
    CHECK(abrsi::cosine_sim(a, z) == 0.0);
    CHECK_THROWS_AS(abrsi::cosine_sim(a, e1), abrsi::DimensionError);

    Rng rng(12);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> x(5), y(5);
        for (auto& v : x) v = rng.normal();
        for (auto& v : y) v = rng.normal();
        double d = 0, nx = 0, ny = 0;
        for (int i = 0; i < 5; ++i) {
            d += x[i] * y[i];
            nx += x[i] * x[i];
            ny += y[i] * y[i];
        }
        const double expect = d / std::sqrt(nx * ny);
        CHECK(std::abs(abrsi::cosine_sim(x, y) - expect) < 1e-12);
        CHECK(std::abs(abrsi::cosine_sim(x, y) - abrsi::cosine_sim(y, x)) < 1e-12);
        const double lambda = 0.1 + 10.0 * rng.uniform();
        std::vector<double> xs = x;
        for (auto& v : xs) v *= lambda;
        CHECK(std::abs(abrsi::cosine_sim(xs, y) - abrsi::cosine_sim(x, y)) < 1e-12);
    }
}

TEST_CASE("rng streams are reproducible and restorable") {
    Rng a(99), b(99);
    for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
    a.normal();  // leave a spare normal cached
    const std::string snap = a.state();
    const double n1 = a.normal(), u1 = a.uniform();
    Rng c(0);
    c.restore(snap);
    CHECK(c.normal() == n1);
    CHECK(c.uniform() == u1);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(a.uniform_index(7) < 7);
    }
}
