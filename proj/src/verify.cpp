// SPDX-License-Identifier: Apache-2.0

#include "weightscope/verify.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <map>

namespace weightscope::verify {

std::string_view to_string(PropertyId p) {
    switch (p) {
        case PropertyId::PT: return "PT";
        case PropertyId::Symmetry: return "Symmetry";
        case PropertyId::IS: return "IS";
        case PropertyId::Reflexivity: return "Reflexivity";
        case PropertyId::OrthogonalBehavior: return "OrthogonalBehavior";
        case PropertyId::Theorem1: return "Theorem1";
    }
    return "?";
}

std::string_view to_string(Classification c) {
    switch (c) {
        case Classification::Constant: return "Constant";
        case Classification::DimensionDependent: return "DimensionDependent";
        case Classification::Discriminative: return "Discriminative";
        case Classification::Holds: return "Holds";
        case Classification::Fails: return "Fails";
    }
    return "?";
}

MatD random_orthogonal(Eigen::Index n, GaussianSource& gauss) {
    MatD g(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) g(i, j) = gauss.next();
    Eigen::HouseholderQR<MatD> qr(g);
    MatD q = qr.householderQ();
    const MatD r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < n; ++i)
        if (r(i, i) < 0) q.col(i) = -q.col(i);
    return q;
}

std::pair<MatD, MatD> witness_pair_high() {
    MatD x(3, 3), y(3, 3);
    x << -0.6676, 0.5171, -0.5357,  //
        -0.7310, -0.5917, 0.3399,   //
        -0.1412, 0.6185, 0.7730;
    y << -0.1837, 0.5950, 0.7825,  //
        0.0457, -0.7900, 0.6114,   //
        0.9819, 0.1481, 0.1179;
    return {x, y};
}

std::pair<MatD, MatD> witness_pair_low() {
    MatD x(3, 3), y(3, 3);
    x << -0.8499, 0.0164, 0.5267,  //
        -0.0816, -0.9915, -0.1009, //
        0.5206, -0.1287, 0.8440;
    y << -0.7028, -0.6446, -0.3009,  //
        0.3734, -0.6943, 0.6153,     //
        -0.6056, 0.3200, 0.7286;
    return {x, y};
}

PropertyReport verify_theorem1(std::span<const Eigen::Index> m_values) {
    PropertyReport report;
    report.property = PropertyId::Theorem1;
    report.kind = IndexKind::Docs;
    report.trials = static_cast<int>(m_values.size());
    report.classification = Classification::Holds;
    for (const Eigen::Index m : m_values) {
        if (m < 1 || (m & (m - 1)) != 0) throw ArgError("theorem check needs powers of two");
        const MatD x = MatD::Identity(m, m);
        const MatD y = simcore::hadamard(m) / std::sqrt(static_cast<double>(m));
        const double frob_sq = (x - y).squaredNorm();
        const double expected_frob = 2.0 * static_cast<double>(m);
        const double frob_dev = std::fabs(frob_sq - expected_frob) / expected_frob;
        const auto score = simcore::docs(x, y);
        const double docs_dev = std::fabs(score.value - 1.0 / std::sqrt(static_cast<double>(m)));
        report.max_deviation = std::max({report.max_deviation, frob_dev, docs_dev});
        const bool degenerate_path =
            score.meta && score.meta->fit_x.degenerate && score.meta->fit_y.degenerate;
        if (frob_dev > 1e-9 || docs_dev > 1e-12 || !degenerate_path)
            report.classification = Classification::Fails;
    }
    return report;
}

namespace {

double evaluate_on_pair(IndexKind kind, const MatD& x, const MatD& y) {
    if (kind == IndexKind::Docs) return simcore::docs(x, y, simcore::Aggregate::Max).value;
    if (kind == IndexKind::DocsMean) return simcore::docs(x, y, simcore::Aggregate::Mean).value;
    return simcore::baseline_index(kind, x, y, /*svcca_threshold=*/1.0).value;
}

}  // namespace

PropertyReport verify_orthogonal_behavior(IndexKind kind, std::span<const int> n_values,
                                          int trials_per_n, std::uint64_t seed) {
    if (trials_per_n < 2) throw ArgError("orthogonal-behavior check needs at least 2 trials");
    PropertyReport report;
    report.property = PropertyId::OrthogonalBehavior;
    report.kind = kind;
    report.trials = trials_per_n * static_cast<int>(n_values.size());
    report.seed = seed;

    GaussianSource gauss(seed);
    double max_within = 0.0;
    double global_lo = std::numeric_limits<double>::infinity();
    double global_hi = -std::numeric_limits<double>::infinity();
    for (const int n : n_values) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (int t = 0; t < trials_per_n; ++t) {
            const MatD x = random_orthogonal(n, gauss);
            const MatD y = random_orthogonal(n, gauss);
            const double v = evaluate_on_pair(kind, x, y);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        max_within = std::max(max_within, hi - lo);
        global_lo = std::min(global_lo, lo);
        global_hi = std::max(global_hi, hi);
    }
    const double cross = global_hi - global_lo;

    if (max_within > kDiscriminativeFloor) {
        report.classification = Classification::Discriminative;
        report.max_deviation = max_within;
    } else if (max_within <= kConstancyTol) {
        report.classification =
            cross <= kConstancyTol ? Classification::Constant : Classification::DimensionDependent;
        report.max_deviation = report.classification == Classification::Constant ? cross
                                                                                  : max_within;
    } else {
        report.classification = Classification::Fails;
        report.max_deviation = max_within;
    }
    return report;
}

std::vector<PropertyReport> verify_docs_properties(int trials, std::uint64_t seed) {
    if (trials < 1) throw ArgError("property check needs at least one trial");
    GaussianSource gauss(seed);
    auto& rng = gauss.raw();

    const auto random_matrix = [&](Eigen::Index n, Eigen::Index m) {
        MatD out(n, m);
        for (Eigen::Index j = 0; j < m; ++j)
            for (Eigen::Index i = 0; i < n; ++i) out(i, j) = gauss.next();
        return out;
    };
    const auto random_permutation = [&](Eigen::Index m) {
        std::vector<Eigen::Index> perm(static_cast<std::size_t>(m));
        for (Eigen::Index i = 0; i < m; ++i) perm[static_cast<std::size_t>(i)] = i;
        for (Eigen::Index i = m - 1; i > 0; --i) {
            const auto j = static_cast<Eigen::Index>(rng.next() % static_cast<std::uint64_t>(i + 1));
            std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
        }
        return perm;
    };
    const auto permute_cols = [](const MatD& m, const std::vector<Eigen::Index>& perm) {
        MatD out(m.rows(), m.cols());
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out.col(j) = m.col(perm[static_cast<std::size_t>(j)]);
        return out;
    };
    // log-uniform magnitude over 1e-6..1e6 with a random sign
    const auto random_scalar = [&] {
        const double mag = std::pow(10.0, -6.0 + 12.0 * rng.uniform());
        return (rng.next() & 1) ? mag : -mag;
    };

    double dev_pt = 0.0, dev_sym = 0.0, dev_is = 0.0, dev_refl = 0.0;
    for (int t = 0; t < trials; ++t) {
        const auto n = static_cast<Eigen::Index>(2 + rng.next() % 63);
        const auto m = static_cast<Eigen::Index>(2 + rng.next() % 63);
        const MatD x = random_matrix(n, m);
        const MatD y = random_matrix(n, m);
        const double base = simcore::docs(x, y).value;

        const MatD xp = permute_cols(x, random_permutation(m));
        const MatD yp = permute_cols(y, random_permutation(m));
        dev_pt = std::max(dev_pt, std::fabs(simcore::docs(xp, yp).value - base));

        dev_sym = std::max(dev_sym, std::fabs(simcore::docs(y, x).value - base));

        const double a = random_scalar();
        const double b = random_scalar();
        dev_is = std::max(dev_is, std::fabs(simcore::docs(MatD(a * x), MatD(b * y)).value - base));

        dev_refl = std::max(dev_refl, std::fabs(simcore::docs(x, x).value - 1.0));
    }

    const auto make = [&](PropertyId property, double deviation, double tolerance) {
        PropertyReport report;
        report.property = property;
        report.kind = IndexKind::Docs;
        report.trials = trials;
        report.max_deviation = deviation;
        report.seed = seed;
        report.classification =
            deviation <= tolerance ? Classification::Holds : Classification::Fails;
        return report;
    };
    return {
        make(PropertyId::PT, dev_pt, 1e-12),
        make(PropertyId::Symmetry, dev_sym, 1e-9),
        make(PropertyId::IS, dev_is, 1e-9),
        make(PropertyId::Reflexivity, dev_refl, 0.0),
    };
}

std::vector<PropertyReport> default_suite(std::uint64_t seed) {
    std::vector<PropertyReport> reports = verify_docs_properties(100, seed);
    const Eigen::Index m_values[] = {2, 4, 8, 16, 64, 256};
    reports.push_back(verify_theorem1(m_values));
    const int n_values[] = {4, 16, 64, 256};
    for (IndexKind kind : simcore::kAllIndexKinds)
        reports.push_back(verify_orthogonal_behavior(kind, n_values, 50, seed));
    return reports;
}

Classification expected_orthogonal_behavior(IndexKind kind) {
    switch (kind) {
        case IndexKind::Docs:
        case IndexKind::DocsMean: return Classification::Discriminative;
        case IndexKind::LinearHsic: return Classification::DimensionDependent;
        default: return Classification::Constant;
    }
}

bool suite_matches_expectations(std::span<const PropertyReport> reports) {
    for (const auto& report : reports) {
        if (report.property == PropertyId::OrthogonalBehavior) {
            if (report.classification != expected_orthogonal_behavior(report.kind)) return false;
        } else if (report.classification != Classification::Holds) {
            return false;
        }
    }
    return true;
}

}  // namespace weightscope::verify
