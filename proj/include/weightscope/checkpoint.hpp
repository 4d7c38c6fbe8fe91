// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "weightscope/errors.hpp"

namespace weightscope::ckpt {

using MatF = Eigen::MatrixXf;
using MatD = Eigen::MatrixXd;

// Storage dtypes accepted in containers.
enum class Dtype : std::uint8_t { F64, F32, F16, BF16 };

std::size_t dtype_size(Dtype d);
std::string_view dtype_name(Dtype d);  // safetensors spelling: "F64", "F32", ...

// Precision the decoded matrix is materialized in. Reductions always
// accumulate in f64 regardless of this choice (see simcore).
enum class ComputeDtype : std::uint8_t { F32, F64 };

// Weight-matrix slots of a decoder-only transformer layer, plus the three
// per-expert matrices of an MoE block.
enum class RoleKind : std::uint8_t {
    Wq,
    Wk,
    Wv,
    Wo,
    MlpUp,
    MlpDown,
    MlpGate,
    ExpertW1,
    ExpertW2,
    ExpertW3,
};

inline constexpr RoleKind kAllRoleKinds[] = {
    RoleKind::Wq,      RoleKind::Wk,       RoleKind::Wv,       RoleKind::Wo,      RoleKind::MlpUp,
    RoleKind::MlpDown, RoleKind::MlpGate,  RoleKind::ExpertW1, RoleKind::ExpertW2,
    RoleKind::ExpertW3,
};

bool role_is_expert(RoleKind kind);
// Stored checkpoints keep output dimensions in rows; these roles are
// transposed during orientation so that columns become the neuron vectors.
bool role_is_transposed(RoleKind kind);
std::string_view role_kind_name(RoleKind kind);
std::optional<RoleKind> role_kind_from_string(std::string_view name);

// A role slot; ExpertW* tags carry the expert index, all others carry none.
struct RoleTag {
    RoleKind kind = RoleKind::Wq;
    int expert = -1;

    RoleTag() = default;
    RoleTag(RoleKind k, int e = -1) : kind(k), expert(role_is_expert(k) ? e : -1) {}
    auto operator<=>(const RoleTag&) const = default;
};

std::string role_name(const RoleTag& tag);  // "MlpUp", "ExpertW1.3"

struct TensorRecord {
    std::string name;
    Dtype dtype = Dtype::F32;
    std::vector<std::int64_t> shape;
    std::uint64_t byte_offset = 0;  // absolute offset within its file
    std::uint64_t byte_length = 0;
    bool fortran_order = false;  // NPY only; safetensors data is row-major
    int file = 0;                // index into CheckpointIndex::files
};

struct SlotKey {
    int layer = 0;
    RoleTag role;
    auto operator<=>(const SlotKey&) const = default;
};

struct CheckpointIndex {
    std::vector<std::filesystem::path> files;
    std::vector<TensorRecord> records;
    std::map<SlotKey, std::size_t> layer_map;  // slot -> position in records
    int num_layers = 0;
    std::string model_id;

    const TensorRecord* find_slot(int layer, const RoleTag& role) const;
    bool has_slot(int layer, const RoleTag& role) const;
    // Sorted expert indices present at (layer, kind).
    std::vector<int> experts_at(int layer, RoleKind kind) const;
};

// Naming config: a list of regex patterns with a role literal each. Patterns
// must contain a named group `layer` and, for expert roles, `expert`
// (syntax (?<layer>...)). The first matching pattern wins.
struct NamingPattern {
    std::string regex;
    RoleKind role;
};

struct NamingConfig {
    std::vector<NamingPattern> patterns;
};

// Built-in presets: "llama", "gemma", "mixtral".
NamingConfig naming_preset(std::string_view name);
NamingConfig parse_naming_config(const std::string& json_text);
NamingConfig load_naming_config(const std::filesystem::path& path);

// Dense weight matrix with role metadata. Data is column-major; when
// oriented, columns are the neuron vectors compared by cosine similarity.
struct WeightMatrix {
    std::variant<MatF, MatD> data;
    int layer = -1;
    RoleTag role;
    bool oriented = false;

    Eigen::Index rows() const;
    Eigen::Index cols() const;
    MatD as_f64() const;  // copy/cast to f64 (no-op copy for f64 storage)
};

// Opens a safetensors file or a directory of .npy files and maps tensor
// names to (layer, role) slots via the naming config. The multi-path
// overload merges shards; tensor names must be globally unique.
CheckpointIndex open_checkpoint(const std::filesystem::path& path, const NamingConfig& naming);
CheckpointIndex open_checkpoint(std::span<const std::filesystem::path> paths,
                                const NamingConfig& naming);

// Decodes the tensor at (layer, role) into compute_dtype. The result is not
// yet oriented.
WeightMatrix load_matrix(const CheckpointIndex& index, int layer, const RoleTag& role,
                         ComputeDtype compute_dtype = ComputeDtype::F32);

// Applies the role orientation rule (transpose Wq/Wk/Wv/MlpUp/MlpGate/
// ExpertW1/ExpertW3, keep Wo/MlpDown/ExpertW2). Orienting twice is rejected.
WeightMatrix orient_matrix(WeightMatrix w);

// dtype widening used by the decoder.
float f16_to_f32(std::uint16_t bits);
float bf16_to_f32(std::uint16_t bits);  // appends 16 zero mantissa bits

// --- synthetic checkpoint writers (fixtures and round-trip checks) ----------

struct TensorInit {
    std::string name;
    Dtype dtype = Dtype::F32;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> bytes;  // row-major element order
};

TensorInit tensor_from_f32(std::string name, Eigen::Index rows, Eigen::Index cols,
                           const MatF& values);

void write_safetensors(const std::filesystem::path& path, std::span<const TensorInit> tensors);
void write_npy(const std::filesystem::path& path, const TensorInit& tensor);
void write_npy_dir(const std::filesystem::path& dir, std::span<const TensorInit> tensors);

}  // namespace weightscope::ckpt
