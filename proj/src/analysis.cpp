// SPDX-License-Identifier: Apache-2.0

#include "weightscope/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "weightscope/rng.hpp"

namespace weightscope::analysis {

namespace {

simcore::KernelOptions kernel_options(const AnalysisParams& params) {
    simcore::KernelOptions opt;
    opt.tile = params.tile;
    return opt;
}

// Loads and orients one slot.
ckpt::WeightMatrix oriented_matrix(const ckpt::CheckpointIndex& index, int layer,
                                   const ckpt::RoleTag& role, const AnalysisParams& params) {
    return ckpt::orient_matrix(ckpt::load_matrix(index, layer, role, params.compute_dtype));
}

}  // namespace

double evaluate_pair(IndexKind kind, const ckpt::WeightMatrix& a, const ckpt::WeightMatrix& b,
                     const AnalysisParams& params) {
    if (!a.oriented || !b.oriented) throw StateError("evaluate_pair expects oriented matrices");
    if (kind == IndexKind::Docs || kind == IndexKind::DocsMean) {
        const Aggregate agg = kind == IndexKind::DocsMean ? Aggregate::Mean : params.aggregate;
        const auto opt = kernel_options(params);
        if (const auto* af = std::get_if<ckpt::MatF>(&a.data)) {
            if (const auto* bf = std::get_if<ckpt::MatF>(&b.data))
                return simcore::docs(*af, *bf, agg, opt).value;
        }
        return simcore::docs(a.as_f64(), b.as_f64(), agg, opt).value;
    }
    return simcore::baseline_index(kind, a.as_f64(), b.as_f64(), params.svcca_threshold).value;
}

SimilarityMatrix layer_heatmap(const ckpt::CheckpointIndex& index, const ckpt::RoleTag& role,
                               IndexKind kind, const AnalysisParams& params) {
    const int layers = index.num_layers;
    if (layers < 1) throw ArgError("checkpoint maps no layers");
    for (int layer = 0; layer < layers; ++layer)
        if (!index.has_slot(layer, role))
            throw SlotNotFoundError("layer " + std::to_string(layer) + " role " +
                                    ckpt::role_name(role) + " is missing from the checkpoint");

    SimilarityMatrix sim;
    sim.kind = kind;
    sim.role = role;
    sim.model_id = index.model_id;
    sim.layer_count = layers;
    sim.values.resize(layers, layers);

    const bool mirror = simcore::is_symmetric_kind(kind);
    // Row-major over i <= j (full grid for non-symmetric kinds); the row
    // matrix stays resident while the column one cycles, so at most two
    // oriented matrices are held at a time.
    for (int i = 0; i < layers; ++i) {
        const ckpt::WeightMatrix mi = oriented_matrix(index, i, role, params);
        const int j0 = mirror ? i : 0;
        for (int j = j0; j < layers; ++j) {
            if (j == i) {
                sim.values(i, j) = evaluate_pair(kind, mi, mi, params);
                continue;
            }
            const ckpt::WeightMatrix mj = oriented_matrix(index, j, role, params);
            sim.values(i, j) = evaluate_pair(kind, mi, mj, params);
            if (mirror) sim.values(j, i) = sim.values(i, j);
        }
    }
    return sim;
}

double gini(const SimilarityMatrix& sim) {
    const int layers = sim.layer_count;
    if (layers < 3) throw ArgError("gini needs at least 3 layers");
    const Eigen::Index m = layers - 1;
    std::vector<double> row(static_cast<std::size_t>(m));
    double total = 0.0;
    for (int i = 0; i < layers; ++i) {
        std::size_t at = 0;
        double row_sum = 0.0;
        for (int j = 0; j < layers; ++j) {
            if (j == i) continue;
            const double v = sim.values(i, j);
            if (v < 0.0)
                throw DomainError("gini input has a negative entry at (" + std::to_string(i) +
                                  ", " + std::to_string(j) + ")");
            row[at++] = v;
            row_sum += v;
        }
        if (row_sum <= 0.0) throw DomainError("gini row " + std::to_string(i) + " sums to zero");
        for (double& v : row) v /= row_sum;
        std::sort(row.begin(), row.end());
        // G = sum_i (2i - n - 1) x_i / (n sum_i x_i) over ascending x
        double weighted = 0.0;
        double sum = 0.0;
        for (Eigen::Index k = 0; k < m; ++k) {
            weighted += static_cast<double>(2 * (k + 1) - m - 1) * row[static_cast<std::size_t>(k)];
            sum += row[static_cast<std::size_t>(k)];
        }
        total += weighted / (static_cast<double>(m) * sum);
    }
    return total / static_cast<double>(layers);
}

BlockProfile block_profile(const SimilarityMatrix& sim, int block_size) {
    const int layers = sim.layer_count;
    if (block_size < 3 || block_size > 7 || block_size > layers)
        throw ArgError("block size must lie in [3, 7] and fit the matrix");
    BlockProfile profile;
    profile.block_size = block_size;
    for (int start = 0; start + block_size <= layers; ++start) {
        double sum = 0.0;
        int count = 0;
        for (int i = start; i < start + block_size; ++i)
            for (int j = start; j < start + block_size; ++j) {
                if (i == j) continue;  // self-similarity would shift every block equally
                sum += sim.values(i, j);
                ++count;
            }
        profile.start_indices.push_back(start);
        profile.averages.push_back(sum / static_cast<double>(count));
    }
    return profile;
}

DistanceProfile distance_profile(const SimilarityMatrix& sim) {
    const int layers = sim.layer_count;
    if (layers < 2) throw ArgError("distance profile needs at least 2 layers");
    DistanceProfile profile;
    for (int d = 1; d < layers; ++d) {
        const int count = layers - d;
        double sum = 0.0;
        for (int i = 0; i < count; ++i) sum += sim.values(i, i + d);
        const double mean = sum / count;
        double var = 0.0;
        for (int i = 0; i < count; ++i) {
            const double diff = sim.values(i, i + d) - mean;
            var += diff * diff;
        }
        profile.distances.push_back(d);
        profile.mean_sim.push_back(mean);
        profile.std_sim.push_back(std::sqrt(var / count));
    }
    return profile;
}

double offdiag_avg_cos(const Eigen::MatrixXd& oriented, Eigen::Index tile) {
    const Eigen::Index m = oriented.cols();
    if (m < 2) throw ArgError("off-diagonal average needs at least 2 columns");
    simcore::KernelOptions opt;
    opt.tile = tile;
    const auto stats = simcore::abs_cos_stats(oriented, oriented, simcore::Aggregate::Mean, opt);
    // row_stat includes the unit self-similarity; remove it per column.
    double total = 0.0;
    for (double mean_with_self : stats.row_stat)
        total += (mean_with_self * static_cast<double>(m) - 1.0) / static_cast<double>(m - 1);
    return total / static_cast<double>(m);
}

double offdiag_avg_cos(const ckpt::WeightMatrix& oriented, Eigen::Index tile) {
    if (!oriented.oriented) throw StateError("offdiag_avg_cos expects an oriented matrix");
    return offdiag_avg_cos(oriented.as_f64(), tile);
}

Eigen::MatrixXd make_m_theta(Eigen::Index n, double theta, std::uint64_t seed) {
    if (n < 1) throw ArgError("m_theta size must be positive");
    GaussianSource gauss(seed);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = gauss.next();
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) m(i, j) += theta * v(i);
    return m;
}

RatioReport similarity_ratio(const ckpt::CheckpointIndex& index_a,
                             const ckpt::CheckpointIndex& index_b,
                             const ckpt::CheckpointIndex& index_c, const ckpt::RoleTag& role,
                             IndexKind kind, const AnalysisParams& params) {
    if (index_a.num_layers != index_b.num_layers || index_a.num_layers != index_c.num_layers)
        throw DimError("similarity_ratio checkpoints disagree on layer count");
    RatioReport report;
    report.model_a = index_a.model_id;
    report.model_b = index_b.model_id;
    report.model_c = index_c.model_id;
    report.role = role;
    report.kind = kind;
    for (int layer = 0; layer < index_a.num_layers; ++layer) {
        const auto ma = oriented_matrix(index_a, layer, role, params);
        const auto mb = oriented_matrix(index_b, layer, role, params);
        const auto mc = oriented_matrix(index_c, layer, role, params);
        if (ma.rows() != mb.rows() || ma.cols() != mb.cols() || ma.rows() != mc.rows() ||
            ma.cols() != mc.cols())
            throw DimError("similarity_ratio shapes disagree at layer " + std::to_string(layer));
        RatioEntry entry;
        entry.layer = layer;
        entry.sim_ab = evaluate_pair(kind, ma, mb, params);
        entry.sim_ac = evaluate_pair(kind, ma, mc, params);
        entry.defined = entry.sim_ac > 0.0;
        entry.ratio = entry.defined ? entry.sim_ab / entry.sim_ac : 0.0;
        report.entries.push_back(entry);
    }
    return report;
}

SimilarityMatrix expert_heatmap(const ckpt::CheckpointIndex& index, int layer,
                                ckpt::RoleKind expert_role, IndexKind kind,
                                const AnalysisParams& params) {
    if (!ckpt::role_is_expert(expert_role)) throw ArgError("expert_heatmap needs an expert role");
    const std::vector<int> experts = index.experts_at(layer, expert_role);
    const int count = static_cast<int>(experts.size());
    if (count < 2) throw ArgError("layer " + std::to_string(layer) + " exposes fewer than 2 " +
                                  std::string(ckpt::role_kind_name(expert_role)) + " experts");

    SimilarityMatrix sim;
    sim.kind = kind;
    sim.role = ckpt::RoleTag(expert_role);
    sim.model_id = index.model_id;
    sim.layer_count = count;
    sim.values.resize(count, count);

    const bool mirror = simcore::is_symmetric_kind(kind);
    for (int i = 0; i < count; ++i) {
        const auto mi =
            oriented_matrix(index, layer, ckpt::RoleTag(expert_role, experts[i]), params);
        const int j0 = mirror ? i : 0;
        for (int j = j0; j < count; ++j) {
            if (j == i) {
                sim.values(i, j) = evaluate_pair(kind, mi, mi, params);
                continue;
            }
            const auto mj =
                oriented_matrix(index, layer, ckpt::RoleTag(expert_role, experts[j]), params);
            sim.values(i, j) = evaluate_pair(kind, mi, mj, params);
            if (mirror) sim.values(j, i) = sim.values(i, j);
        }
    }
    return sim;
}

}  // namespace weightscope::analysis
