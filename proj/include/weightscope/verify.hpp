// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "weightscope/rng.hpp"
#include "weightscope/simcore.hpp"

namespace weightscope::verify {

using simcore::IndexKind;
using simcore::MatD;

enum class PropertyId { PT, Symmetry, IS, Reflexivity, OrthogonalBehavior, Theorem1 };

enum class Classification { Constant, DimensionDependent, Discriminative, Holds, Fails };

std::string_view to_string(PropertyId p);
std::string_view to_string(Classification c);

// Tolerances used by the classifier: an index is treated as constant when
// spreads stay within kConstancyTol, and as discriminative when the
// within-dimension spread exceeds kDiscriminativeFloor.
inline constexpr double kConstancyTol = 1e-6;
inline constexpr double kDiscriminativeFloor = 1e-3;

struct PropertyReport {
    PropertyId property = PropertyId::PT;
    IndexKind kind = IndexKind::Docs;
    int trials = 0;
    double max_deviation = 0.0;
    Classification classification = Classification::Fails;
    std::uint64_t seed = 0;
};

// Haar-like random orthogonal matrix: QR of a seeded Gaussian with the R
// diagonal signs folded into Q.
MatD random_orthogonal(Eigen::Index n, GaussianSource& gauss);

// Two hand-picked pairs of 3x3 orthogonal matrices on which DOCS attains
// distinct values (roughly 0.88 and 0.76); the discriminativity witness.
std::pair<MatD, MatD> witness_pair_high();
std::pair<MatD, MatD> witness_pair_low();

// Checks the basis-vs-scaled-Hadamard construction at each m: the Frobenius
// norm gap satisfies |X - Y|_F^2 = 2m while DOCS equals 1/sqrt(m) through
// the degenerate-fit path.
PropertyReport verify_theorem1(std::span<const Eigen::Index> m_values);

// Samples random orthogonal pairs per dimension and classifies the index as
// Constant / DimensionDependent / Discriminative.
PropertyReport verify_orthogonal_behavior(IndexKind kind, std::span<const int> n_values,
                                          int trials_per_n, std::uint64_t seed);

// Certifies permutation invariance (1e-12), symmetry (1e-9), isotropic
// scaling invariance with scalars spanning 1e-6..1e6 (1e-9), and exact
// reflexivity over seeded random trials.
std::vector<PropertyReport> verify_docs_properties(int trials, std::uint64_t seed);

// Full default suite: the four DOCS lemmas, the theorem check at
// m = 2..256, and orthogonal behavior for every index kind.
std::vector<PropertyReport> default_suite(std::uint64_t seed);

// Expected orthogonal-matrix behavior per index kind.
Classification expected_orthogonal_behavior(IndexKind kind);

// True when every property report Holds and every orthogonal-behavior
// classification matches its expected row.
bool suite_matches_expectations(std::span<const PropertyReport> reports);

}  // namespace weightscope::verify
