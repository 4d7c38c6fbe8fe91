// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "weightscope/checkpoint.hpp"
#include "weightscope/simcore.hpp"

namespace weightscope::analysis {

using simcore::Aggregate;
using simcore::IndexKind;

struct AnalysisParams {
    ckpt::ComputeDtype compute_dtype = ckpt::ComputeDtype::F32;
    double svcca_threshold = 0.99;
    Aggregate aggregate = Aggregate::Max;  // applies when kind is Docs
    Eigen::Index tile = 512;
};

// Square matrix of pairwise index values over layers (or experts).
struct SimilarityMatrix {
    Eigen::MatrixXd values;
    IndexKind kind = IndexKind::Docs;
    ckpt::RoleTag role;
    std::string model_id;
    int layer_count = 0;
};

// Sliding diagonal-block averages of a similarity matrix; main-diagonal
// cells are excluded from each block average.
struct BlockProfile {
    int block_size = 0;
    std::vector<int> start_indices;
    std::vector<double> averages;
};

// Mean and population standard deviation of each superdiagonal.
struct DistanceProfile {
    std::vector<int> distances;
    std::vector<double> mean_sim;
    std::vector<double> std_sim;
};

struct RatioEntry {
    int layer = 0;
    double sim_ab = 0.0;
    double sim_ac = 0.0;
    double ratio = 0.0;
    bool defined = false;  // sim_ac > 0
};

struct RatioReport {
    std::string model_a, model_b, model_c;
    ckpt::RoleTag role;
    IndexKind kind = IndexKind::Docs;
    std::vector<RatioEntry> entries;
};

// Index value for one oriented matrix pair.
double evaluate_pair(IndexKind kind, const ckpt::WeightMatrix& a, const ckpt::WeightMatrix& b,
                     const AnalysisParams& params = {});

// L x L matrix of the index over all layer pairs of one role. Symmetric
// kinds are computed for i <= j and mirrored; the others over the full grid.
SimilarityMatrix layer_heatmap(const ckpt::CheckpointIndex& index, const ckpt::RoleTag& role,
                               IndexKind kind, const AnalysisParams& params = {});

// Mean row-wise Gini coefficient of the diagonal-excluded, row-normalized
// similarity matrix.
double gini(const SimilarityMatrix& sim);

BlockProfile block_profile(const SimilarityMatrix& sim, int block_size);

DistanceProfile distance_profile(const SimilarityMatrix& sim);

// Mean absolute cosine over all ordered column pairs i != j.
double offdiag_avg_cos(const Eigen::MatrixXd& oriented, Eigen::Index tile = 512);
double offdiag_avg_cos(const ckpt::WeightMatrix& oriented, Eigen::Index tile = 512);

// I + theta * v * 1^T with v standard normal from the seeded generator;
// the approximate-orthogonality reference family.
Eigen::MatrixXd make_m_theta(Eigen::Index n, double theta, std::uint64_t seed);

// Per-layer similarity of A vs B and A vs C for one role, with their ratio.
RatioReport similarity_ratio(const ckpt::CheckpointIndex& index_a,
                             const ckpt::CheckpointIndex& index_b,
                             const ckpt::CheckpointIndex& index_c, const ckpt::RoleTag& role,
                             IndexKind kind, const AnalysisParams& params = {});

// E x E matrix over the oriented expert matrices of one layer.
SimilarityMatrix expert_heatmap(const ckpt::CheckpointIndex& index, int layer,
                                ckpt::RoleKind expert_role, IndexKind kind,
                                const AnalysisParams& params = {});

}  // namespace weightscope::analysis
