// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "weightscope/errors.hpp"

namespace weightscope::simcore {

using MatF = Eigen::MatrixXf;
using MatD = Eigen::MatrixXd;
using Index = Eigen::Index;

// The eight published similarity indices plus the mean-aggregation ablation
// of DOCS.
enum class IndexKind {
    Docs,
    DocsMean,
    LinReg,
    CcaR2,
    CcaNuclear,
    SvccaR2,
    SvccaNuclear,
    LinearHsic,
    LinearCka,
};

inline constexpr IndexKind kAllIndexKinds[] = {
    IndexKind::Docs,         IndexKind::DocsMean,   IndexKind::LinReg,
    IndexKind::CcaR2,        IndexKind::CcaNuclear, IndexKind::SvccaR2,
    IndexKind::SvccaNuclear, IndexKind::LinearHsic, IndexKind::LinearCka,
};

std::string_view to_string(IndexKind kind);
std::optional<IndexKind> index_kind_from_string(std::string_view name);

// Symmetry / reflexivity classification used by heatmap assembly and the
// similarity-matrix invariants. Linear regression and linear HSIC are the
// non-symmetric kinds; CCA R-squared, linear HSIC and the mean-aggregation
// ablation are the non-reflexive ones.
bool is_symmetric_kind(IndexKind kind);
bool is_reflexive_kind(IndexKind kind);

// Per-column maxima of absolute cosine similarity against the opposing
// matrix. Entries are clamped into [0, 1]; length equals the column count of
// the matrix the vector was computed for.
struct CosineMaxVector {
    std::vector<double> values;
    Index source_m = 0;  // column count of the opposing matrix
};

// Location/scale of a Gumbel (max) distribution fitted by MLE, with fit
// diagnostics. degenerate means the sample standard deviation was below the
// degeneracy threshold, in which case location_u is the sample mean and
// scale_beta is zero.
struct GumbelFit {
    double location_u = 0.0;
    double scale_beta = 0.0;
    int iterations = 0;
    bool converged = false;
    bool degenerate = false;
};

struct DocsDiagnostics {
    GumbelFit fit_x;
    GumbelFit fit_y;
    bool unequal_columns = false;  // column counts differed between operands
};

struct SimilarityScore {
    IndexKind kind = IndexKind::Docs;
    double value = 0.0;
    std::optional<DocsDiagnostics> meta;
};

enum class Aggregate { Max, Mean };

struct KernelOptions {
    Index tile = 512;  // column tile width for both operands
};

// ---------------------------------------------------------------------------
// Deterministic cosine kernel
//
// Every absolute-cosine entry produced by this module follows one pinned
// arithmetic recipe, so results are bitwise reproducible for any tile size
// and worker count:
//
//   dot(a, b) over n rows:
//     - rows are processed in chunks of 256, in increasing order;
//     - within a chunk, eight f64 accumulator lanes are used, lane l taking
//       the rows with (row index within chunk) mod 8 == l in increasing
//       order, each step via fma(double(a_i), double(b_i), lane);
//     - a chunk is reduced as ((l0+l1)+(l2+l3)) + ((l4+l5)+(l6+l7)) and the
//       chunk sums are added in chunk order.
//   entry(j, k) = min(1, |dot(A_j, B_k) / sqrt(dot(A_j, A_j) * dot(B_k, B_k))|)
//
// Because sqrt(d*d) == d holds exactly in IEEE-754 for normal d, the
// self-similarity of a column is exactly 1.0, which is what makes the
// reflexivity path of DOCS exact.
// ---------------------------------------------------------------------------

// Row-side and column-side aggregation of |cosine| over all column pairs of
// two matrices sharing a row dimension; the full pair matrix is never stored.
struct CosStats {
    std::vector<double> row_stat;  // per column of A: max or mean over B's columns
    std::vector<double> col_stat;  // per column of B: max or mean over A's columns
};

CosStats abs_cos_stats(const MatF& a, const MatF& b, Aggregate agg, const KernelOptions& opt = {});
CosStats abs_cos_stats(const MatD& a, const MatD& b, Aggregate agg, const KernelOptions& opt = {});

CosineMaxVector max_cos_sim(const MatF& a, const MatF& b, const KernelOptions& opt = {});
CosineMaxVector max_cos_sim(const MatD& a, const MatD& b, const KernelOptions& opt = {});

// Gumbel(max) location fit by maximum likelihood. Degenerate samples (std
// below 1e-12) return location = mean, scale = 0. Otherwise beta is found by
// fixed-point iteration from the method-of-moments start std*sqrt(6)/pi with
// stopping rule |delta beta| <= 1e-10 * max(1, beta), capped at 200
// iterations (converged reports whether the cap hit), and the location is
// u = -beta * log(mean(exp(-x_i / beta))) with max-shifted exponentials.
GumbelFit gumbel_fit_location(std::span<const double> data);

// DOCS similarity (and its mean-aggregation ablation): aggregate |cosine|
// per column in both directions, fit a Gumbel location to each side, and
// average the two locations.
SimilarityScore docs(const MatF& x, const MatF& y, Aggregate agg = Aggregate::Max,
                     const KernelOptions& opt = {});
SimilarityScore docs(const MatD& x, const MatD& y, Aggregate agg = Aggregate::Max,
                     const KernelOptions& opt = {});

// Orthonormal basis of the column space (QR with column pivoting, rank cut
// at max(n,m) * eps * max pivot). Returned matrix is n x rank.
MatD orthonormal_basis(const MatD& x);

// Singular values in descending order.
std::vector<double> singular_values(const MatD& x);

// Closed-form baseline indices. svcca_threshold is the cumulative-variance
// fraction (of squared singular values) retained by SVCCA truncation;
// threshold 1.0 keeps every numerically nonzero singular direction.
SimilarityScore baseline_index(IndexKind kind, const MatD& x, const MatD& y,
                               double svcca_threshold = 0.99);

// Sylvester-construction Hadamard matrix, entries +-1, H^T H = m I exactly.
MatD hadamard(Index m);

}  // namespace weightscope::simcore
