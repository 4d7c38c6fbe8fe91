// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "support.hpp"
#include "weightscope/simcore.hpp"

using namespace weightscope;
using simcore::MatD;
using simcore::MatF;

namespace {

// Independent symmetric eigensolver (cyclic Jacobi) for the singular-value
// oracle: singular values of X are the square roots of eig(X^T X).
std::vector<double> jacobi_eigenvalues(MatD a) {
    const Eigen::Index n = a.rows();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-26) break;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (std::fabs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> eig(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a(i, i);
    std::sort(eig.begin(), eig.end(), std::greater<>());
    return eig;
}

// Gaussian-elimination solve for the projector oracle, independent of Eigen
// decompositions: returns X (X^T X)^{-1} X^T.
MatD projector_by_normal_equations(const MatD& x) {
    const Eigen::Index m = x.cols();
    MatD gram = x.transpose() * x;
    MatD rhs = x.transpose();  // m x n
    for (Eigen::Index col = 0; col < m; ++col) {
        Eigen::Index pivot = col;
        for (Eigen::Index r = col + 1; r < m; ++r)
            if (std::fabs(gram(r, col)) > std::fabs(gram(pivot, col))) pivot = r;
        gram.row(col).swap(gram.row(pivot));
        rhs.row(col).swap(rhs.row(pivot));
        const double diag = gram(col, col);
        REQUIRE(std::fabs(diag) > 1e-12);
        gram.row(col) /= diag;
        rhs.row(col) /= diag;
        for (Eigen::Index r = 0; r < m; ++r) {
            if (r == col) continue;
            const double factor = gram(r, col);
            gram.row(r) -= factor * gram.row(col);
            rhs.row(r) -= factor * rhs.row(col);
        }
    }
    return x * rhs;
}

MatD theorem_pair_x(Eigen::Index m) { return MatD::Identity(m, m); }
MatD theorem_pair_y(Eigen::Index m) {
    return simcore::hadamard(m) / std::sqrt(static_cast<double>(m));
}

}  // namespace

TEST_CASE("max_cos_sim identical and negated axes") {
    MatD a = MatD::Identity(2, 2);
    MatD b(2, 2);
    b << 1, 0, 0, -1;
    const auto s = simcore::max_cos_sim(a, b);
    REQUIRE(s.values.size() == 2);
    CHECK(s.values[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.values[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.source_m == 2);
}

TEST_CASE("max_cos_sim against a diagonal direction") {
    MatD a = MatD::Identity(2, 2);
    MatD b(2, 1);
    b << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    const auto s = simcore::max_cos_sim(a, b);
    CHECK(s.values[0] == doctest::Approx(0.70710678).epsilon(1e-8));
    CHECK(s.values[1] == doctest::Approx(0.70710678).epsilon(1e-8));
}

TEST_CASE("max_cos_sim on the basis-vs-Hadamard pair") {
    const auto s = simcore::max_cos_sim(theorem_pair_x(4), theorem_pair_y(4));
    for (double v : s.values) CHECK(v == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("max_cos_sim errors") {
    CHECK_THROWS_AS(simcore::max_cos_sim(MatD(MatD::Identity(3, 3)), MatD(MatD::Identity(4, 4))),
                    DimError);
    MatD z = MatD::Identity(3, 3);
    z.col(1).setZero();
    try {
        simcore::max_cos_sim(z, MatD(MatD::Identity(3, 3)));
        FAIL("expected ZeroColumnError");
    } catch (const ZeroColumnError& e) {
        CHECK(e.column == 1);
    }
}

TEST_CASE("max_cos_sim dominates sampled cosine entries") {
    Xoshiro256StarStar rng(7);
    const MatD x = testsupport::random_matrix(24, 40, 100);
    const MatD y = testsupport::random_matrix(24, 33, 101);
    const auto s = simcore::max_cos_sim(x, y);
    for (int probe = 0; probe < 100; ++probe) {
        const auto j = static_cast<Eigen::Index>(rng.next() % 40);
        const auto k = static_cast<Eigen::Index>(rng.next() % 33);
        const double cos_jk =
            std::fabs(x.col(j).dot(y.col(k))) / (x.col(j).norm() * y.col(k).norm());
        CHECK(s.values[static_cast<std::size_t>(j)] >= cos_jk - 1e-12);
    }
}

TEST_CASE("tiled kernel matches the materializing oracle bitwise") {
    for (int trial = 0; trial < 25; ++trial) {
        const auto seed = static_cast<std::uint64_t>(trial);
        Xoshiro256StarStar dims(seed + 5000);
        const auto n = static_cast<Eigen::Index>(3 + dims.next() % 300);
        const auto ma = static_cast<Eigen::Index>(1 + dims.next() % 128);
        const auto mb = static_cast<Eigen::Index>(1 + dims.next() % 128);
        const MatF a = testsupport::random_matrix_f(n, ma, seed * 2 + 1);
        const MatF b = testsupport::random_matrix_f(n, mb, seed * 2 + 2);

        const auto oracle = testsupport::oracle_row_max(a, b);
        simcore::KernelOptions opt;
        opt.tile = 64;
        const auto got = simcore::max_cos_sim(a, b, opt);
        REQUIRE(got.values.size() == oracle.size());
        for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(got.values[i] == oracle[i]);

        // and across tile sizes
        for (Eigen::Index tile : {128, 512}) {
            opt.tile = tile;
            const auto other = simcore::max_cos_sim(a, b, opt);
            for (std::size_t i = 0; i < oracle.size(); ++i)
                CHECK(std::fabs(other.values[i] - oracle[i]) <= 1e-9);
        }
    }
}

TEST_CASE("kernel results do not depend on the worker count") {
    const MatF a = testsupport::random_matrix_f(150, 200, 11);
    const MatF b = testsupport::random_matrix_f(150, 170, 12);
    simcore::KernelOptions opt;
    opt.tile = 32;

    setenv("WEIGHTSCOPE_THREADS", "1", 1);
    const auto serial = simcore::abs_cos_stats(a, b, simcore::Aggregate::Mean, opt);
    const auto serial_max = simcore::abs_cos_stats(a, b, simcore::Aggregate::Max, opt);
    setenv("WEIGHTSCOPE_THREADS", "16", 1);
    const auto parallel = simcore::abs_cos_stats(a, b, simcore::Aggregate::Mean, opt);
    const auto parallel_max = simcore::abs_cos_stats(a, b, simcore::Aggregate::Max, opt);
    unsetenv("WEIGHTSCOPE_THREADS");

    CHECK(serial.row_stat == parallel.row_stat);
    CHECK(serial.col_stat == parallel.col_stat);
    CHECK(serial_max.row_stat == parallel_max.row_stat);
    CHECK(serial_max.col_stat == parallel_max.col_stat);
}

TEST_CASE("gumbel fit: degenerate data") {
    const double data[] = {0.5, 0.5, 0.5};
    const auto fit = simcore::gumbel_fit_location(data);
    CHECK(fit.location_u == 0.5);
    CHECK(fit.scale_beta == 0.0);
    CHECK(fit.degenerate);
    CHECK(fit.converged);
}

TEST_CASE("gumbel fit: all-ones data gives location one") {
    std::vector<double> data(512, 1.0);
    const auto fit = simcore::gumbel_fit_location(data);
    CHECK(fit.location_u == 1.0);
    CHECK(fit.degenerate);
}

TEST_CASE("gumbel fit recovers known parameters") {
    const auto data = testsupport::sample_gumbel(0.7, 0.05, 10000, 424242);
    const auto fit = simcore::gumbel_fit_location(data);
    CHECK(fit.converged);
    CHECK(!fit.degenerate);
    CHECK(fit.location_u > 0.695);
    CHECK(fit.location_u < 0.705);
    CHECK(fit.scale_beta == doctest::Approx(0.05).epsilon(0.1));
}

TEST_CASE("gumbel fit location stays inside the data range") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Xoshiro256StarStar rng(seed);
        const std::size_t count = 1 + rng.next() % 200;
        std::vector<double> data(count);
        for (auto& v : data) v = rng.uniform();
        const auto fit = simcore::gumbel_fit_location(data);
        const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
        CHECK(fit.location_u >= *lo);
        CHECK(fit.location_u <= *hi);
    }
}

TEST_CASE("gumbel fit rejects non-finite input") {
    const double data[] = {0.1, std::nan(""), 0.3};
    CHECK_THROWS_AS(simcore::gumbel_fit_location(data), NonFiniteError);
}

TEST_CASE("docs is exactly one on identical input") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const MatD x = testsupport::random_matrix(20 + seed, 30, seed);
        const auto score = simcore::docs(x, x);
        CHECK(score.value == 1.0);
        REQUIRE(score.meta.has_value());
        CHECK(score.meta->fit_x.degenerate);
    }
}

TEST_CASE("docs separates the two reference orthogonal pairs") {
    // 3x3 pairs printed to four decimals; expected indices 0.88 and 0.76.
    MatD x1(3, 3), y1(3, 3), x2(3, 3), y2(3, 3);
    x1 << -0.6676, 0.5171, -0.5357, -0.7310, -0.5917, 0.3399, -0.1412, 0.6185, 0.7730;
    y1 << -0.1837, 0.5950, 0.7825, 0.0457, -0.7900, 0.6114, 0.9819, 0.1481, 0.1179;
    x2 << -0.8499, 0.0164, 0.5267, -0.0816, -0.9915, -0.1009, 0.5206, -0.1287, 0.8440;
    y2 << -0.7028, -0.6446, -0.3009, 0.3734, -0.6943, 0.6153, -0.6056, 0.3200, 0.7286;
    const double high = simcore::docs(x1, y1).value;
    const double low = simcore::docs(x2, y2).value;
    CHECK(high == doctest::Approx(0.88).epsilon(0.0115));
    CHECK(low == doctest::Approx(0.76).epsilon(0.0135));
    CHECK(high != low);
}

TEST_CASE("docs on the basis-vs-Hadamard construction is exactly 1/sqrt(m)") {
    for (const Eigen::Index m : {4, 16, 64}) {
        const auto score = simcore::docs(theorem_pair_x(m), theorem_pair_y(m));
        REQUIRE(score.meta.has_value());
        CHECK(score.meta->fit_x.degenerate);
        CHECK(score.meta->fit_y.degenerate);
        CHECK(std::fabs(score.value - 1.0 / std::sqrt(static_cast<double>(m))) <= 1e-13);
    }
}

TEST_CASE("docs flags unequal column counts in its diagnostics") {
    const MatD x = testsupport::random_matrix(16, 20, 1);
    const MatD y = testsupport::random_matrix(16, 12, 2);
    const auto score = simcore::docs(x, y);
    REQUIRE(score.meta.has_value());
    CHECK(score.meta->unequal_columns);
    CHECK(score.meta->fit_x.converged);
    CHECK(score.meta->fit_y.converged);
    CHECK(!simcore::docs(x, x).meta->unequal_columns);
}

TEST_CASE("docs mean aggregate differs from max aggregate") {
    const MatD x = testsupport::random_matrix(32, 48, 91);
    const MatD y = testsupport::random_matrix(32, 48, 92);
    const auto max_score = simcore::docs(x, y, simcore::Aggregate::Max);
    const auto mean_score = simcore::docs(x, y, simcore::Aggregate::Mean);
    CHECK(max_score.kind == simcore::IndexKind::Docs);
    CHECK(mean_score.kind == simcore::IndexKind::DocsMean);
    CHECK(mean_score.value < max_score.value);
}

TEST_CASE("orthonormal_basis of an orthogonal matrix is full rank") {
    GaussianSource gauss(3);
    MatD g(6, 6);
    for (Eigen::Index j = 0; j < 6; ++j)
        for (Eigen::Index i = 0; i < 6; ++i) g(i, j) = gauss.next();
    const MatD q0 = Eigen::HouseholderQR<MatD>(g).householderQ();
    const MatD q = simcore::orthonormal_basis(q0);
    CHECK(q.cols() == 6);
    CHECK((q.transpose() * q - MatD::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("orthonormal_basis detects rank deficiency") {
    const MatD v = testsupport::random_matrix(9, 1, 17);
    MatD x(9, 2);
    x.col(0) = v;
    x.col(1) = 2.0 * v;
    CHECK(simcore::orthonormal_basis(x).cols() == 1);
}

TEST_CASE("orthonormal_basis spans the input column space") {
    const MatD x = testsupport::random_matrix(8, 5, 23);
    const MatD q = simcore::orthonormal_basis(x);
    REQUIRE(q.cols() == 5);
    CHECK((q.transpose() * q - MatD::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
    const MatD p_qr = q * q.transpose();
    const MatD p_oracle = projector_by_normal_equations(x);
    CHECK((p_qr - p_oracle).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("baseline constancy on random orthogonal pairs") {
    GaussianSource gauss(2024);
    auto orth = [&](Eigen::Index n) {
        MatD g(n, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < n; ++i) g(i, j) = gauss.next();
        Eigen::HouseholderQR<MatD> qr(g);
        MatD q = qr.householderQ();
        const MatD r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (Eigen::Index i = 0; i < n; ++i)
            if (r(i, i) < 0) q.col(i) = -q.col(i);
        return q;
    };
    const MatD x = orth(64);
    const MatD y = orth(64);
    CHECK(simcore::baseline_index(simcore::IndexKind::LinearCka, x, y).value ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(simcore::baseline_index(simcore::IndexKind::LinearHsic, x, y).value ==
          doctest::Approx(64.0 / (63.0 * 63.0)).epsilon(1e-9));
    CHECK(simcore::baseline_index(simcore::IndexKind::LinReg, x, y).value ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(simcore::baseline_index(simcore::IndexKind::CcaR2, x, y).value ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(simcore::baseline_index(simcore::IndexKind::CcaNuclear, x, y).value ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(simcore::baseline_index(simcore::IndexKind::SvccaR2, x, y, 1.0).value ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(simcore::baseline_index(simcore::IndexKind::SvccaNuclear, x, y, 1.0).value ==
          doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("linear CKA is one on identical input") {
    const MatD x = testsupport::random_matrix(40, 25, 5);
    CHECK(simcore::baseline_index(simcore::IndexKind::LinearCka, x, x).value ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("baseline_index rejects DOCS kinds and row mismatches") {
    const MatD x = testsupport::random_matrix(4, 4, 1);
    CHECK_THROWS_AS(simcore::baseline_index(simcore::IndexKind::Docs, x, x), UsageError);
    const MatD y = testsupport::random_matrix(5, 4, 2);
    CHECK_THROWS_AS(simcore::baseline_index(simcore::IndexKind::LinearCka, x, y), DimError);
}

TEST_CASE("hadamard construction") {
    CHECK(simcore::hadamard(1)(0, 0) == 1.0);
    MatD h2(2, 2);
    h2 << 1, 1, 1, -1;
    CHECK(simcore::hadamard(2) == h2);
    const MatD h8 = simcore::hadamard(8);
    CHECK(h8.cwiseAbs().minCoeff() == 1.0);
    CHECK((h8.transpose() * h8 - 8.0 * MatD::Identity(8, 8)).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(simcore::hadamard(6), ArgError);
    CHECK_THROWS_AS(simcore::hadamard(0), ArgError);
}

TEST_CASE("singular values of simple matrices") {
    const auto id = simcore::singular_values(MatD(MatD::Identity(4, 4)));
    for (double v : id) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    MatD diag = MatD::Zero(3, 3);
    diag(0, 0) = 3;
    diag(1, 1) = 2;
    diag(2, 2) = 1;
    const auto sv = simcore::singular_values(diag);
    CHECK(sv[0] == doctest::Approx(3.0));
    CHECK(sv[1] == doctest::Approx(2.0));
    CHECK(sv[2] == doctest::Approx(1.0));
}

TEST_CASE("singular values match the symmetric eigensolver oracle") {
    const MatD x = testsupport::random_matrix(6, 4, 77);
    const auto sv = simcore::singular_values(x);
    const auto eig = jacobi_eigenvalues(x.transpose() * x);
    REQUIRE(sv.size() == 4);
    for (std::size_t i = 0; i < sv.size(); ++i)
        CHECK(sv[i] == doctest::Approx(std::sqrt(std::max(0.0, eig[i]))).epsilon(1e-8));
}
