// SPDX-License-Identifier: Apache-2.0

#include "weightscope/simcore.hpp"

#include <Eigen/Dense>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "weightscope/parallel.hpp"

namespace weightscope::simcore {

std::string_view to_string(IndexKind kind) {
    switch (kind) {
        case IndexKind::Docs: return "DOCS";
        case IndexKind::DocsMean: return "DOCS_MEAN";
        case IndexKind::LinReg: return "LINREG";
        case IndexKind::CcaR2: return "CCA_R2";
        case IndexKind::CcaNuclear: return "CCA_NUCLEAR";
        case IndexKind::SvccaR2: return "SVCCA_R2";
        case IndexKind::SvccaNuclear: return "SVCCA_NUCLEAR";
        case IndexKind::LinearHsic: return "LINEAR_HSIC";
        case IndexKind::LinearCka: return "LINEAR_CKA";
    }
    return "?";
}

std::optional<IndexKind> index_kind_from_string(std::string_view name) {
    for (IndexKind kind : kAllIndexKinds)
        if (name == to_string(kind)) return kind;
    return std::nullopt;
}

bool is_symmetric_kind(IndexKind kind) {
    return kind != IndexKind::LinReg && kind != IndexKind::LinearHsic;
}

bool is_reflexive_kind(IndexKind kind) {
    // Mean aggregation dilutes the unit self-similarity with every other
    // column, so the ablation is not reflexive either.
    return kind != IndexKind::CcaR2 && kind != IndexKind::LinearHsic &&
           kind != IndexKind::DocsMean;
}

namespace {

constexpr Index kChunk = 256;  // row-blocking granularity of the pinned dot
constexpr int kLanes = 8;
constexpr Index kMicroJ = 8;
constexpr Index kMicroK = 2;

// Reference form of the pinned dot recipe (see simcore.hpp). The tiled
// kernel below reproduces it entry by entry through packed panels.
template <typename T>
double pinned_dot(const T* a, const T* b, Index n) {
    double total = 0.0;
    for (Index base = 0; base < n; base += kChunk) {
        const Index len = std::min(kChunk, n - base);
        double lane[kLanes] = {0, 0, 0, 0, 0, 0, 0, 0};
        const Index full = len - len % kLanes;
        for (Index i = 0; i < full; i += kLanes)
            for (int l = 0; l < kLanes; ++l)
                lane[l] = std::fma(static_cast<double>(a[base + i + l]),
                                   static_cast<double>(b[base + i + l]), lane[l]);
        for (Index i = full; i < len; ++i)
            lane[i - full] = std::fma(static_cast<double>(a[base + i]),
                                      static_cast<double>(b[base + i]), lane[i - full]);
        total += ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
                 ((lane[4] + lane[5]) + (lane[6] + lane[7]));
    }
    return total;
}

template <typename T>
std::vector<double> column_sq_norms(const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& m) {
    std::vector<double> out(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) {
        const T* col = m.data() + j * m.rows();
        out[static_cast<std::size_t>(j)] = pinned_dot(col, col, m.rows());
    }
    return out;
}

void check_norms(const std::vector<double>& sq, const char* side) {
    for (std::size_t j = 0; j < sq.size(); ++j) {
        if (!(sq[j] >= std::numeric_limits<double>::min()))
            throw ZeroColumnError(std::string("column ") + std::to_string(j) + " of the " + side +
                                      " matrix has zero norm",
                                  static_cast<std::int64_t>(j));
    }
}

// One chunk of lane-accumulated products for a fixed micro-block, operating
// on f64 panels packed with stride kChunk per column.
template <Index MJ, Index MK>
void micro_chunk(const double* pa, const double* pb, Index len, double* acc_cell, Index ld_acc) {
    double lane[MJ][MK][kLanes] = {};
    const Index full = len - len % kLanes;
    for (Index i = 0; i < full; i += kLanes)
        for (Index j = 0; j < MJ; ++j)
            for (Index k = 0; k < MK; ++k)
                for (int l = 0; l < kLanes; ++l)
                    lane[j][k][l] = std::fma(pa[j * kChunk + i + l], pb[k * kChunk + i + l],
                                             lane[j][k][l]);
    for (Index i = full; i < len; ++i)
        for (Index j = 0; j < MJ; ++j)
            for (Index k = 0; k < MK; ++k)
                lane[j][k][i - full] =
                    std::fma(pa[j * kChunk + i], pb[k * kChunk + i], lane[j][k][i - full]);
    for (Index j = 0; j < MJ; ++j)
        for (Index k = 0; k < MK; ++k) {
            const double* l = lane[j][k];
            acc_cell[j + k * ld_acc] +=
                ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7]));
        }
}

// Variable-size edge version of micro_chunk.
void micro_chunk_edge(const double* pa, const double* pb, Index len, Index mj, Index mk,
                      double* acc_cell, Index ld_acc) {
    for (Index j = 0; j < mj; ++j)
        for (Index k = 0; k < mk; ++k) {
            double lane[kLanes] = {0, 0, 0, 0, 0, 0, 0, 0};
            const double* a = pa + j * kChunk;
            const double* b = pb + k * kChunk;
            const Index full = len - len % kLanes;
            for (Index i = 0; i < full; i += kLanes)
                for (int l = 0; l < kLanes; ++l)
                    lane[l] = std::fma(a[i + l], b[i + l], lane[l]);
            for (Index i = full; i < len; ++i)
                lane[i - full] = std::fma(a[i], b[i], lane[i - full]);
            acc_cell[j + k * ld_acc] +=
                ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
                ((lane[4] + lane[5]) + (lane[6] + lane[7]));
        }
}

template <typename T>
void pack_panel(const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& m, Index row0, Index len,
                Index col0, Index cols, double* dst) {
    for (Index c = 0; c < cols; ++c) {
        const T* src = m.data() + (col0 + c) * m.rows() + row0;
        double* out = dst + c * kChunk;
        for (Index i = 0; i < len; ++i) out[i] = static_cast<double>(src[i]);
    }
}

template <typename T>
CosStats abs_cos_stats_impl(const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& a,
                            const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& b,
                            Aggregate agg, const KernelOptions& opt) {
    if (a.rows() != b.rows())
        throw DimError("row dimension mismatch: " + std::to_string(a.rows()) + " vs " +
                       std::to_string(b.rows()));
    if (a.cols() == 0 || b.cols() == 0) throw DimError("operand has no columns");
    const Index tile = std::max<Index>(1, opt.tile);
    const Index n = a.rows();
    const Index ma = a.cols();
    const Index mb = b.cols();

    const std::vector<double> da = column_sq_norms(a);
    const std::vector<double> db = column_sq_norms(b);
    check_norms(da, "left");
    check_norms(db, "right");

    const Index a_tiles = (ma + tile - 1) / tile;
    const bool mean = agg == Aggregate::Mean;

    std::vector<double> row_stat(static_cast<std::size_t>(ma), 0.0);
    // Column-side partials are kept per A-tile and reduced in tile order, so
    // the result does not depend on how tiles are assigned to workers.
    std::vector<double> col_partial(static_cast<std::size_t>(a_tiles * mb), 0.0);

    parallel_for(a_tiles, [&](std::int64_t ti) {
        const Index ja = static_cast<Index>(ti) * tile;
        const Index ta = std::min(tile, ma - ja);
        double* col_out = col_partial.data() + static_cast<std::size_t>(ti) * mb;

        std::vector<double> c_tile(static_cast<std::size_t>(ta * tile));
        std::vector<double> pa(static_cast<std::size_t>(ta * kChunk));
        std::vector<double> pb(static_cast<std::size_t>(tile * kChunk));

        for (Index jb = 0; jb < mb; jb += tile) {
            const Index tb = std::min(tile, mb - jb);
            std::fill(c_tile.begin(), c_tile.begin() + static_cast<std::size_t>(ta * tb), 0.0);

            for (Index row0 = 0; row0 < n; row0 += kChunk) {
                const Index len = std::min(kChunk, n - row0);
                pack_panel(a, row0, len, ja, ta, pa.data());
                pack_panel(b, row0, len, jb, tb, pb.data());

                const Index ja_full = ta - ta % kMicroJ;
                const Index jb_full = tb - tb % kMicroK;
                for (Index k = 0; k < jb_full; k += kMicroK) {
                    for (Index j = 0; j < ja_full; j += kMicroJ)
                        micro_chunk<kMicroJ, kMicroK>(pa.data() + j * kChunk,
                                                      pb.data() + k * kChunk, len,
                                                      c_tile.data() + j + k * ta, ta);
                    if (ja_full < ta)
                        micro_chunk_edge(pa.data() + ja_full * kChunk, pb.data() + k * kChunk, len,
                                         ta - ja_full, kMicroK, c_tile.data() + ja_full + k * ta,
                                         ta);
                }
                if (jb_full < tb)
                    micro_chunk_edge(pa.data(), pb.data() + jb_full * kChunk, len, ta,
                                     tb - jb_full, c_tile.data() + jb_full * ta, ta);
            }

            // epilogue: normalize, clamp, aggregate
            for (Index k = 0; k < tb; ++k) {
                const double dk = db[static_cast<std::size_t>(jb + k)];
                double col_acc = col_out[jb + k];
                for (Index j = 0; j < ta; ++j) {
                    const double dj = da[static_cast<std::size_t>(ja + j)];
                    double v = std::fabs(c_tile[static_cast<std::size_t>(j + k * ta)] /
                                         std::sqrt(dj * dk));
                    if (v > 1.0) v = 1.0;
                    double& row_acc = row_stat[static_cast<std::size_t>(ja + j)];
                    if (mean) {
                        row_acc += v;
                        col_acc += v;
                    } else {
                        if (v > row_acc) row_acc = v;
                        if (v > col_acc) col_acc = v;
                    }
                }
                col_out[jb + k] = col_acc;
            }
        }
    });

    CosStats stats;
    stats.row_stat = std::move(row_stat);
    stats.col_stat.assign(static_cast<std::size_t>(mb), 0.0);
    for (Index ti = 0; ti < a_tiles; ++ti) {
        const double* part = col_partial.data() + static_cast<std::size_t>(ti) * mb;
        for (Index k = 0; k < mb; ++k) {
            double& dst = stats.col_stat[static_cast<std::size_t>(k)];
            if (mean)
                dst += part[k];
            else if (part[k] > dst)
                dst = part[k];
        }
    }
    if (mean) {
        for (double& v : stats.row_stat) v /= static_cast<double>(mb);
        for (double& v : stats.col_stat) v /= static_cast<double>(ma);
    }
    return stats;
}

}  // namespace

CosStats abs_cos_stats(const MatF& a, const MatF& b, Aggregate agg, const KernelOptions& opt) {
    return abs_cos_stats_impl(a, b, agg, opt);
}

CosStats abs_cos_stats(const MatD& a, const MatD& b, Aggregate agg, const KernelOptions& opt) {
    return abs_cos_stats_impl(a, b, agg, opt);
}

CosineMaxVector max_cos_sim(const MatF& a, const MatF& b, const KernelOptions& opt) {
    CosineMaxVector out;
    out.values = abs_cos_stats(a, b, Aggregate::Max, opt).row_stat;
    out.source_m = b.cols();
    return out;
}

CosineMaxVector max_cos_sim(const MatD& a, const MatD& b, const KernelOptions& opt) {
    CosineMaxVector out;
    out.values = abs_cos_stats(a, b, Aggregate::Max, opt).row_stat;
    out.source_m = b.cols();
    return out;
}

GumbelFit gumbel_fit_location(std::span<const double> data) {
    if (data.empty()) throw ArgError("gumbel fit requires at least one data point");
    const auto m = static_cast<double>(data.size());
    double sum = 0.0;
    double lo = data[0];
    double hi = data[0];
    for (double x : data) {
        if (!std::isfinite(x)) throw NonFiniteError("non-finite value in gumbel fit input");
        sum += x;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double mean = sum / m;
    double var = 0.0;
    for (double x : data) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / m);

    GumbelFit fit;
    if (sd < 1e-12) {
        fit.location_u = std::clamp(mean, lo, hi);
        fit.scale_beta = 0.0;
        fit.converged = true;
        fit.degenerate = true;
        return fit;
    }

    // Fixed-point iteration: beta = mean(x) - sum(x e^{-x/b}) / sum(e^{-x/b}),
    // exponentials shifted by the minimum so every exponent is <= 0.
    double beta = sd * std::sqrt(6.0) / 3.14159265358979323846;
    int iter = 0;
    bool converged = false;
    double s0 = 0.0;
    while (iter < 200) {
        ++iter;
        s0 = 0.0;
        double s1 = 0.0;
        for (double x : data) {
            const double w = std::exp(-(x - lo) / beta);
            s0 += w;
            s1 += x * w;
        }
        const double next = mean - s1 / s0;
        const bool done = std::fabs(next - beta) <= 1e-10 * std::max(1.0, std::fabs(next));
        beta = next;
        if (done) {
            converged = true;
            break;
        }
    }
    s0 = 0.0;
    for (double x : data) s0 += std::exp(-(x - lo) / beta);
    fit.location_u = std::clamp(lo - beta * std::log(s0 / m), lo, hi);
    fit.scale_beta = beta;
    fit.iterations = iter;
    fit.converged = converged;
    fit.degenerate = false;
    return fit;
}

namespace {

template <typename Mat>
SimilarityScore docs_impl(const Mat& x, const Mat& y, Aggregate agg, const KernelOptions& opt) {
    const CosStats stats = abs_cos_stats_impl(x, y, agg, opt);
    DocsDiagnostics diag;
    diag.fit_x = gumbel_fit_location(stats.row_stat);
    diag.fit_y = gumbel_fit_location(stats.col_stat);
    diag.unequal_columns = x.cols() != y.cols();
    SimilarityScore score;
    score.kind = agg == Aggregate::Max ? IndexKind::Docs : IndexKind::DocsMean;
    score.value = (diag.fit_x.location_u + diag.fit_y.location_u) / 2.0;
    score.meta = diag;
    return score;
}

}  // namespace

SimilarityScore docs(const MatF& x, const MatF& y, Aggregate agg, const KernelOptions& opt) {
    return docs_impl(x, y, agg, opt);
}

SimilarityScore docs(const MatD& x, const MatD& y, Aggregate agg, const KernelOptions& opt) {
    return docs_impl(x, y, agg, opt);
}

MatD orthonormal_basis(const MatD& x) {
    if (!x.allFinite()) throw NonFiniteError("orthonormal_basis: non-finite input");
    Eigen::ColPivHouseholderQR<MatD> qr(x);
    qr.setThreshold(static_cast<double>(std::max(x.rows(), x.cols())) *
                    std::numeric_limits<double>::epsilon());
    const Index r = qr.rank();
    MatD q = qr.householderQ() * MatD::Identity(x.rows(), r);
    return q;
}

std::vector<double> singular_values(const MatD& x) {
    if (!x.allFinite()) throw NonFiniteError("singular_values: non-finite input");
    Eigen::VectorXd sv;
    if (std::max(x.rows(), x.cols()) <= 64) {
        Eigen::JacobiSVD<MatD> svd(x);
        sv = svd.singularValues();
    } else {
        Eigen::BDCSVD<MatD> svd(x);
        sv = svd.singularValues();
    }
    return {sv.data(), sv.data() + sv.size()};
}

namespace {

double frob_sq(const MatD& m) { return m.squaredNorm(); }

double nuclear_norm(const MatD& m) {
    double sum = 0.0;
    for (double s : singular_values(m)) sum += s;
    return sum;
}

// Left singular vectors truncated at the cumulative squared-singular-value
// fraction `threshold`; numerically zero directions are dropped first.
MatD svcca_basis(const MatD& x, double threshold) {
    Eigen::BDCSVD<MatD> svd(x, Eigen::ComputeThinU);
    const Eigen::VectorXd sv = svd.singularValues();
    const double cutoff =
        static_cast<double>(std::max(x.rows(), x.cols())) * std::numeric_limits<double>::epsilon() *
        (sv.size() > 0 ? sv(0) : 0.0);
    Index rank = 0;
    double total = 0.0;
    for (Index i = 0; i < sv.size(); ++i) {
        if (sv(i) <= cutoff) break;
        ++rank;
        total += sv(i) * sv(i);
    }
    if (rank == 0) throw DomainError("svcca: input has numerical rank zero");
    Index keep = rank;
    double cum = 0.0;
    for (Index i = 0; i < rank; ++i) {
        cum += sv(i) * sv(i);
        if (cum >= threshold * total) {
            keep = i + 1;
            break;
        }
    }
    return svd.matrixU().leftCols(keep);
}

}  // namespace

SimilarityScore baseline_index(IndexKind kind, const MatD& x, const MatD& y,
                               double svcca_threshold) {
    if (kind == IndexKind::Docs || kind == IndexKind::DocsMean)
        throw UsageError("baseline_index does not handle DOCS kinds");
    if (x.rows() != y.rows())
        throw DimError("row dimension mismatch: " + std::to_string(x.rows()) + " vs " +
                       std::to_string(y.rows()));
    if (!(svcca_threshold > 0.0 && svcca_threshold <= 1.0))
        throw ArgError("svcca threshold must lie in (0, 1]");
    if (!x.allFinite() || !y.allFinite()) throw NonFiniteError("baseline_index: non-finite input");

    SimilarityScore score;
    score.kind = kind;
    switch (kind) {
        case IndexKind::LinReg: {
            const double denom = frob_sq(x);
            if (denom <= 0.0) throw DomainError("linear regression similarity of a zero matrix");
            const MatD qy = orthonormal_basis(y);
            score.value = frob_sq(qy.transpose() * x) / denom;
            break;
        }
        case IndexKind::CcaR2:
        case IndexKind::CcaNuclear: {
            const MatD qx = orthonormal_basis(x);
            const MatD qy = orthonormal_basis(y);
            const double denom = static_cast<double>(std::min(qx.cols(), qy.cols()));
            if (denom <= 0.0) throw DomainError("cca of a rank-zero matrix");
            const MatD m = qy.transpose() * qx;
            score.value = (kind == IndexKind::CcaR2 ? frob_sq(m) : nuclear_norm(m)) / denom;
            break;
        }
        case IndexKind::SvccaR2:
        case IndexKind::SvccaNuclear: {
            const MatD ux = svcca_basis(x, svcca_threshold);
            const MatD uy = svcca_basis(y, svcca_threshold);
            const double denom = static_cast<double>(std::min(ux.cols(), uy.cols()));
            const MatD m = uy.transpose() * ux;
            score.value = (kind == IndexKind::SvccaR2 ? frob_sq(m) : nuclear_norm(m)) / denom;
            break;
        }
        case IndexKind::LinearHsic: {
            if (x.rows() < 2) throw DomainError("linear HSIC requires at least two rows");
            const double denom = static_cast<double>(x.rows() - 1);
            score.value = frob_sq(y.transpose() * x) / (denom * denom);
            break;
        }
        case IndexKind::LinearCka: {
            const double denom = (x.transpose() * x).norm() * (y.transpose() * y).norm();
            if (denom <= 0.0) throw DomainError("linear CKA of a zero matrix");
            score.value = frob_sq(x.transpose() * y) / denom;
            break;
        }
        default: break;
    }
    return score;
}

MatD hadamard(Index m) {
    if (m < 1 || (m & (m - 1)) != 0) throw ArgError("hadamard order must be a power of two");
    MatD h = MatD::Ones(1, 1);
    for (Index size = 1; size < m; size *= 2) {
        MatD next(2 * size, 2 * size);
        next.topLeftCorner(size, size) = h;
        next.topRightCorner(size, size) = h;
        next.bottomLeftCorner(size, size) = h;
        next.bottomRightCorner(size, size) = -h;
        h = std::move(next);
    }
    return h;
}

}  // namespace weightscope::simcore
