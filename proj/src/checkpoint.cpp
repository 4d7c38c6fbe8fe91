// SPDX-License-Identifier: Apache-2.0

#include "weightscope/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>
#include <set>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace weightscope::ckpt {

std::size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::F64: return 8;
        case Dtype::F32: return 4;
        case Dtype::F16:
        case Dtype::BF16: return 2;
    }
    return 0;
}

std::string_view dtype_name(Dtype d) {
    switch (d) {
        case Dtype::F64: return "F64";
        case Dtype::F32: return "F32";
        case Dtype::F16: return "F16";
        case Dtype::BF16: return "BF16";
    }
    return "?";
}

static std::optional<Dtype> dtype_from_name(std::string_view name) {
    if (name == "F64") return Dtype::F64;
    if (name == "F32") return Dtype::F32;
    if (name == "F16") return Dtype::F16;
    if (name == "BF16") return Dtype::BF16;
    return std::nullopt;
}

bool role_is_expert(RoleKind kind) {
    return kind == RoleKind::ExpertW1 || kind == RoleKind::ExpertW2 || kind == RoleKind::ExpertW3;
}

bool role_is_transposed(RoleKind kind) {
    switch (kind) {
        case RoleKind::Wq:
        case RoleKind::Wk:
        case RoleKind::Wv:
        case RoleKind::MlpUp:
        case RoleKind::MlpGate:
        case RoleKind::ExpertW1:
        case RoleKind::ExpertW3: return true;
        case RoleKind::Wo:
        case RoleKind::MlpDown:
        case RoleKind::ExpertW2: return false;
    }
    return false;
}

std::string_view role_kind_name(RoleKind kind) {
    switch (kind) {
        case RoleKind::Wq: return "Wq";
        case RoleKind::Wk: return "Wk";
        case RoleKind::Wv: return "Wv";
        case RoleKind::Wo: return "Wo";
        case RoleKind::MlpUp: return "MlpUp";
        case RoleKind::MlpDown: return "MlpDown";
        case RoleKind::MlpGate: return "MlpGate";
        case RoleKind::ExpertW1: return "ExpertW1";
        case RoleKind::ExpertW2: return "ExpertW2";
        case RoleKind::ExpertW3: return "ExpertW3";
    }
    return "?";
}

std::optional<RoleKind> role_kind_from_string(std::string_view name) {
    for (RoleKind kind : kAllRoleKinds)
        if (name == role_kind_name(kind)) return kind;
    return std::nullopt;
}

std::string role_name(const RoleTag& tag) {
    std::string out{role_kind_name(tag.kind)};
    if (tag.expert >= 0) out += "." + std::to_string(tag.expert);
    return out;
}

const TensorRecord* CheckpointIndex::find_slot(int layer, const RoleTag& role) const {
    const auto it = layer_map.find(SlotKey{layer, role});
    if (it == layer_map.end()) return nullptr;
    return &records[it->second];
}

bool CheckpointIndex::has_slot(int layer, const RoleTag& role) const {
    return find_slot(layer, role) != nullptr;
}

std::vector<int> CheckpointIndex::experts_at(int layer, RoleKind kind) const {
    std::vector<int> out;
    for (const auto& [key, _] : layer_map)
        if (key.layer == layer && key.role.kind == kind) out.push_back(key.role.expert);
    std::sort(out.begin(), out.end());
    return out;
}

// --- naming config ----------------------------------------------------------

namespace {

// std::regex has no named-group support, so `(?<name>...)` is rewritten to a
// plain group while recording which capture index each name landed on.
struct TranslatedPattern {
    std::regex re;
    int layer_group = -1;
    int expert_group = -1;
    RoleKind role;
};

TranslatedPattern translate_pattern(const NamingPattern& pattern) {
    std::string plain;
    plain.reserve(pattern.regex.size());
    int group = 0;
    int layer_group = -1;
    int expert_group = -1;
    const std::string& src = pattern.regex;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const char c = src[i];
        if (c == '\\' && i + 1 < src.size()) {
            plain += c;
            plain += src[++i];
            continue;
        }
        if (c != '(') {
            plain += c;
            continue;
        }
        if (i + 2 < src.size() && src[i + 1] == '?' && src[i + 2] == '<' &&
            (i + 3 >= src.size() || (src[i + 3] != '=' && src[i + 3] != '!'))) {
            const std::size_t close = src.find('>', i + 3);
            if (close == std::string::npos)
                throw ParseError("naming pattern has an unterminated group name: " + src);
            const std::string name = src.substr(i + 3, close - (i + 3));
            ++group;
            if (name == "layer")
                layer_group = group;
            else if (name == "expert")
                expert_group = group;
            else
                throw ParseError("naming pattern uses unknown group name '" + name + "'");
            plain += '(';
            i = close;
            continue;
        }
        if (i + 1 < src.size() && src[i + 1] == '?') {
            plain += c;  // non-capturing or assertion group
            continue;
        }
        ++group;
        plain += c;
    }
    if (layer_group < 0)
        throw ParseError("naming pattern is missing the (?<layer>...) group: " + src);
    if (role_is_expert(pattern.role) && expert_group < 0)
        throw ParseError("expert-role naming pattern is missing the (?<expert>...) group: " + src);

    TranslatedPattern out;
    out.re = std::regex(plain, std::regex::ECMAScript);
    out.layer_group = layer_group;
    out.expert_group = expert_group;
    out.role = pattern.role;
    return out;
}

}  // namespace

NamingConfig naming_preset(std::string_view name) {
    const auto layer = [](const char* mid, RoleKind role) {
        return NamingPattern{std::string("model\\.layers\\.(?<layer>\\d+)\\.") + mid + "\\.weight",
                             role};
    };
    NamingConfig config;
    if (name == "llama" || name == "gemma") {
        config.patterns = {
            layer("self_attn\\.q_proj", RoleKind::Wq),
            layer("self_attn\\.k_proj", RoleKind::Wk),
            layer("self_attn\\.v_proj", RoleKind::Wv),
            layer("self_attn\\.o_proj", RoleKind::Wo),
            layer("mlp\\.up_proj", RoleKind::MlpUp),
            layer("mlp\\.down_proj", RoleKind::MlpDown),
            layer("mlp\\.gate_proj", RoleKind::MlpGate),
        };
        return config;
    }
    if (name == "mixtral") {
        config.patterns = {
            layer("self_attn\\.q_proj", RoleKind::Wq),
            layer("self_attn\\.k_proj", RoleKind::Wk),
            layer("self_attn\\.v_proj", RoleKind::Wv),
            layer("self_attn\\.o_proj", RoleKind::Wo),
            layer("block_sparse_moe\\.experts\\.(?<expert>\\d+)\\.w1", RoleKind::ExpertW1),
            layer("block_sparse_moe\\.experts\\.(?<expert>\\d+)\\.w2", RoleKind::ExpertW2),
            layer("block_sparse_moe\\.experts\\.(?<expert>\\d+)\\.w3", RoleKind::ExpertW3),
        };
        return config;
    }
    throw ParseError("unknown naming preset '" + std::string(name) + "'");
}

NamingConfig parse_naming_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("naming config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("patterns") || !doc["patterns"].is_array())
        throw ParseError("naming config must be an object with a 'patterns' array");
    NamingConfig config;
    for (const auto& entry : doc["patterns"]) {
        if (!entry.is_object() || !entry.contains("regex") || !entry.contains("role"))
            throw ParseError("each naming pattern needs 'regex' and 'role'");
        const auto role = role_kind_from_string(entry["role"].get<std::string>());
        if (!role) throw ParseError("unknown role '" + entry["role"].get<std::string>() + "'");
        config.patterns.push_back({entry["regex"].get<std::string>(), *role});
    }
    return config;
}

NamingConfig load_naming_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open naming config " + path.string());
    std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return parse_naming_config(text);
}

// --- container parsing --------------------------------------------------------

namespace {

std::uint64_t read_u64_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) n *= d;
    return n;
}

std::vector<TensorRecord> parse_safetensors(const fs::path& path, int file_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0);
    if (file_size < 8) throw ParseError(path.string() + ": truncated safetensors header");
    std::uint8_t len_bytes[8];
    in.read(reinterpret_cast<char*>(len_bytes), 8);
    const std::uint64_t header_len = read_u64_le(len_bytes);
    if (header_len == 0 || header_len > file_size - 8)
        throw ParseError(path.string() + ": safetensors header length out of range");
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw ParseError(path.string() + ": truncated safetensors header");

    // Duplicate top-level keys collapse silently in DOM parsing, so a
    // callback watches for them while the header is parsed.
    std::set<std::string> seen;
    int depth = 0;
    json::parser_callback_t watch_keys = [&](int, json::parse_event_t event, json& parsed) {
        if (event == json::parse_event_t::object_start) ++depth;
        if (event == json::parse_event_t::object_end) --depth;
        if (event == json::parse_event_t::key && depth == 1) {
            const auto key = parsed.get<std::string>();
            if (!seen.insert(key).second)
                throw DuplicateTensorError(path.string() + ": duplicate tensor name '" + key +
                                           "'");
        }
        return true;
    };
    json doc;
    try {
        doc = json::parse(header, watch_keys);
    } catch (const DuplicateTensorError&) {
        throw;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": bad safetensors JSON: " + e.what());
    }
    if (!doc.is_object())
        throw ParseError(path.string() + ": safetensors header is not a JSON object");

    const std::uint64_t data_base = 8 + header_len;
    std::vector<TensorRecord> records;
    for (const auto& [name, info] : doc.items()) {
        if (name == "__metadata__") continue;
        if (!info.is_object() || !info.contains("dtype") || !info.contains("shape") ||
            !info.contains("data_offsets"))
            throw ParseError(path.string() + ": tensor '" + name + "' entry is malformed");
        const auto dtype = dtype_from_name(info["dtype"].get<std::string>());
        if (!dtype)
            throw ParseError(path.string() + ": tensor '" + name + "' has unsupported dtype " +
                             info["dtype"].get<std::string>());
        TensorRecord rec;
        rec.name = name;
        rec.dtype = *dtype;
        for (const auto& d : info["shape"]) {
            const std::int64_t v = d.get<std::int64_t>();
            if (v <= 0) throw ParseError(path.string() + ": tensor '" + name + "' has a bad shape");
            rec.shape.push_back(v);
        }
        const auto& offs = info["data_offsets"];
        if (!offs.is_array() || offs.size() != 2)
            throw ParseError(path.string() + ": tensor '" + name + "' has bad data_offsets");
        const std::uint64_t begin = offs[0].get<std::uint64_t>();
        const std::uint64_t end = offs[1].get<std::uint64_t>();
        if (end < begin || data_base + end > file_size)
            throw ParseError(path.string() + ": tensor '" + name + "' data range out of bounds");
        rec.byte_offset = data_base + begin;
        rec.byte_length = end - begin;
        const std::uint64_t expected =
            static_cast<std::uint64_t>(element_count(rec.shape)) * dtype_size(rec.dtype);
        if (rec.byte_length != expected)
            throw ShapeError(path.string() + ": tensor '" + name +
                             "' byte length does not match shape");
        rec.file = file_id;
        records.push_back(std::move(rec));
    }
    return records;
}

// Minimal NPY v1.0/v2.0 header parser for '<f2' / '<f4' / '<f8' tensors.
TensorRecord parse_npy(const fs::path& path, int file_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::uint8_t magic[8];
    in.read(reinterpret_cast<char*>(magic), 8);
    if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0)
        throw ParseError(path.string() + ": not an NPY file");
    const int major = magic[6];
    std::uint32_t header_len = 0;
    if (major == 1) {
        std::uint8_t b[2];
        in.read(reinterpret_cast<char*>(b), 2);
        header_len = b[0] | (std::uint32_t(b[1]) << 8);
    } else if (major == 2) {
        std::uint8_t b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        header_len = b[0] | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
                     (std::uint32_t(b[3]) << 24);
    } else {
        throw ParseError(path.string() + ": unsupported NPY version");
    }
    std::string header(header_len, '\0');
    in.read(header.data(), header_len);
    if (!in) throw ParseError(path.string() + ": truncated NPY header");

    const auto find_str = [&](const char* key) -> std::string {
        const auto at = header.find(key);
        if (at == std::string::npos)
            throw ParseError(path.string() + ": NPY header is missing " + key);
        const auto q0 = header.find('\'', at + std::strlen(key));
        const auto q1 = header.find('\'', q0 + 1);
        if (q0 == std::string::npos || q1 == std::string::npos)
            throw ParseError(path.string() + ": bad NPY header");
        return header.substr(q0 + 1, q1 - q0 - 1);
    };

    TensorRecord rec;
    const std::string descr = find_str("'descr'");
    if (descr == "<f8")
        rec.dtype = Dtype::F64;
    else if (descr == "<f4")
        rec.dtype = Dtype::F32;
    else if (descr == "<f2")
        rec.dtype = Dtype::F16;
    else
        throw ParseError(path.string() + ": unsupported NPY descr '" + descr + "'");

    const auto fo_at = header.find("'fortran_order'");
    if (fo_at == std::string::npos)
        throw ParseError(path.string() + ": NPY header is missing fortran_order");
    rec.fortran_order = header.find("True", fo_at) != std::string::npos &&
                        header.find("True", fo_at) < header.find(',', fo_at + 16);

    const auto sh_at = header.find("'shape'");
    if (sh_at == std::string::npos) throw ParseError(path.string() + ": NPY header missing shape");
    const auto p0 = header.find('(', sh_at);
    const auto p1 = header.find(')', p0);
    if (p0 == std::string::npos || p1 == std::string::npos)
        throw ParseError(path.string() + ": bad NPY shape");
    std::string dims = header.substr(p0 + 1, p1 - p0 - 1);
    std::size_t pos = 0;
    while (pos < dims.size()) {
        while (pos < dims.size() && !std::isdigit(static_cast<unsigned char>(dims[pos]))) ++pos;
        if (pos >= dims.size()) break;
        std::size_t used = 0;
        rec.shape.push_back(std::stoll(dims.substr(pos), &used));
        pos += used;
    }

    rec.name = path.stem().string();
    rec.byte_offset = 8 + (major == 1 ? 2u : 4u) + header_len;
    rec.byte_length = static_cast<std::uint64_t>(element_count(rec.shape)) * dtype_size(rec.dtype);
    rec.file = file_id;

    in.seekg(0, std::ios::end);
    if (rec.byte_offset + rec.byte_length > static_cast<std::uint64_t>(in.tellg()))
        throw ParseError(path.string() + ": NPY data truncated");
    return rec;
}

std::string stem_of(const fs::path& path) {
    if (fs::is_directory(path)) return path.filename().string();
    return path.stem().string();
}

}  // namespace

CheckpointIndex open_checkpoint(const fs::path& path, const NamingConfig& naming) {
    const fs::path paths[] = {path};
    return open_checkpoint(std::span<const fs::path>(paths), naming);
}

CheckpointIndex open_checkpoint(std::span<const fs::path> paths, const NamingConfig& naming) {
    if (paths.empty()) throw ArgError("open_checkpoint needs at least one path");

    std::vector<TranslatedPattern> patterns;
    patterns.reserve(naming.patterns.size());
    for (const auto& p : naming.patterns) patterns.push_back(translate_pattern(p));

    CheckpointIndex index;
    index.model_id = stem_of(paths[0]);
    for (const auto& path : paths) {
        if (!fs::exists(path)) throw ParseError("checkpoint path does not exist: " + path.string());
        const int file_id = static_cast<int>(index.files.size());
        if (fs::is_directory(path)) {
            std::vector<fs::path> entries;
            for (const auto& e : fs::directory_iterator(path))
                if (e.path().extension() == ".npy") entries.push_back(e.path());
            std::sort(entries.begin(), entries.end());
            for (const auto& e : entries) {
                index.files.push_back(e);
                index.records.push_back(parse_npy(e, static_cast<int>(index.files.size()) - 1));
            }
        } else {
            index.files.push_back(path);
            auto records = parse_safetensors(path, file_id);
            index.records.insert(index.records.end(), std::make_move_iterator(records.begin()),
                                 std::make_move_iterator(records.end()));
        }
    }

    std::set<std::string> names;
    for (const auto& rec : index.records)
        if (!names.insert(rec.name).second)
            throw DuplicateTensorError("duplicate tensor name '" + rec.name + "'");

    for (std::size_t pos = 0; pos < index.records.size(); ++pos) {
        const TensorRecord& rec = index.records[pos];
        for (const auto& pattern : patterns) {
            std::smatch match;
            if (!std::regex_match(rec.name, match, pattern.re)) continue;
            if (rec.shape.size() != 2)
                throw ShapeError("tensor '" + rec.name + "' matched role " +
                                 std::string(role_kind_name(pattern.role)) + " but is not 2-D");
            SlotKey key;
            key.layer = std::stoi(match[static_cast<std::size_t>(pattern.layer_group)].str());
            int expert = -1;
            if (pattern.expert_group > 0)
                expert = std::stoi(match[static_cast<std::size_t>(pattern.expert_group)].str());
            key.role = RoleTag(pattern.role, expert);
            const auto [it, inserted] = index.layer_map.emplace(key, pos);
            if (!inserted)
                throw DuplicateTensorError("tensors '" + index.records[it->second].name +
                                           "' and '" + rec.name + "' both map to layer " +
                                           std::to_string(key.layer) + " role " +
                                           role_name(key.role));
            index.num_layers = std::max(index.num_layers, key.layer + 1);
            break;
        }
    }
    return index;
}

// --- decoding -----------------------------------------------------------------

float f16_to_f32(std::uint16_t bits) {
    const std::uint32_t sign = (bits & 0x8000u) << 16;
    const std::uint32_t exponent = (bits >> 10) & 0x1f;
    const std::uint32_t mantissa = bits & 0x3ff;
    std::uint32_t out;
    if (exponent == 0) {
        if (mantissa == 0) {
            out = sign;
        } else {
            // subnormal: renormalize
            int shift = 0;
            std::uint32_t m = mantissa;
            while ((m & 0x400) == 0) {
                m <<= 1;
                ++shift;
            }
            out = sign | ((127 - 15 - shift + 1) << 23) | ((m & 0x3ff) << 13);
        }
    } else if (exponent == 0x1f) {
        out = sign | 0x7f800000u | (mantissa << 13);
    } else {
        out = sign | ((exponent - 15 + 127) << 23) | (mantissa << 13);
    }
    return std::bit_cast<float>(out);
}

float bf16_to_f32(std::uint16_t bits) {
    return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

Eigen::Index WeightMatrix::rows() const {
    return std::visit([](const auto& m) { return m.rows(); }, data);
}

Eigen::Index WeightMatrix::cols() const {
    return std::visit([](const auto& m) { return m.cols(); }, data);
}

MatD WeightMatrix::as_f64() const {
    if (const auto* d = std::get_if<MatD>(&data)) return *d;
    return std::get<MatF>(data).cast<double>();
}

namespace {

double decode_element(const std::uint8_t* p, Dtype dtype) {
    switch (dtype) {
        case Dtype::F64: {
            double v;
            std::memcpy(&v, p, 8);
            return v;
        }
        case Dtype::F32: {
            float v;
            std::memcpy(&v, p, 4);
            return static_cast<double>(v);
        }
        case Dtype::F16: {
            std::uint16_t v;
            std::memcpy(&v, p, 2);
            return static_cast<double>(f16_to_f32(v));
        }
        case Dtype::BF16: {
            std::uint16_t v;
            std::memcpy(&v, p, 2);
            return static_cast<double>(bf16_to_f32(v));
        }
    }
    return 0.0;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> decode_matrix(
    const std::vector<std::uint8_t>& bytes, const TensorRecord& rec) {
    const Eigen::Index rows = rec.shape[0];
    const Eigen::Index cols = rec.shape[1];
    const std::size_t esize = dtype_size(rec.dtype);
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            const std::size_t at = rec.fortran_order
                                       ? static_cast<std::size_t>(c * rows + r)
                                       : static_cast<std::size_t>(r * cols + c);
            const double v = decode_element(bytes.data() + at * esize, rec.dtype);
            out(r, c) = static_cast<Scalar>(v);
        }
    }
    if (!out.allFinite())
        throw NonFiniteError("tensor '" + rec.name + "' contains NaN or Inf after decode");
    return out;
}

}  // namespace

WeightMatrix load_matrix(const CheckpointIndex& index, int layer, const RoleTag& role,
                         ComputeDtype compute_dtype) {
    const auto it = index.layer_map.find(SlotKey{layer, role});
    if (it == index.layer_map.end())
        throw SlotNotFoundError("no tensor mapped to layer " + std::to_string(layer) + " role " +
                                role_name(role));
    const TensorRecord& rec = index.records[it->second];

    std::ifstream in(index.files[static_cast<std::size_t>(rec.file)], std::ios::binary);
    if (!in)
        throw ParseError("cannot open " + index.files[static_cast<std::size_t>(rec.file)].string());
    in.seekg(static_cast<std::streamoff>(rec.byte_offset));
    std::vector<std::uint8_t> bytes(rec.byte_length);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(rec.byte_length));
    if (!in) throw ParseError("tensor '" + rec.name + "' data truncated");

    WeightMatrix w;
    w.layer = layer;
    w.role = role;
    w.oriented = false;
    if (compute_dtype == ComputeDtype::F32)
        w.data = decode_matrix<float>(bytes, rec);
    else
        w.data = decode_matrix<double>(bytes, rec);
    return w;
}

WeightMatrix orient_matrix(WeightMatrix w) {
    if (w.oriented)
        throw StateError("matrix for layer " + std::to_string(w.layer) + " role " +
                         role_name(w.role) + " is already oriented");
    if (role_is_transposed(w.role.kind))
        std::visit([](auto& m) { m = m.transpose().eval(); }, w.data);
    w.oriented = true;
    return w;
}

// --- writers -------------------------------------------------------------------

TensorInit tensor_from_f32(std::string name, Eigen::Index rows, Eigen::Index cols,
                           const MatF& values) {
    TensorInit t;
    t.name = std::move(name);
    t.dtype = Dtype::F32;
    t.shape = {rows, cols};
    t.bytes.resize(static_cast<std::size_t>(rows * cols) * 4);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            const float v = values(r, c);
            std::memcpy(t.bytes.data() + static_cast<std::size_t>(r * cols + c) * 4, &v, 4);
        }
    return t;
}

void write_safetensors(const fs::path& path, std::span<const TensorInit> tensors) {
    json header = json::object();
    std::uint64_t offset = 0;
    for (const auto& t : tensors) {
        const std::uint64_t expected =
            static_cast<std::uint64_t>(element_count(t.shape)) * dtype_size(t.dtype);
        if (expected != t.bytes.size())
            throw ShapeError("tensor '" + t.name + "' byte count does not match shape");
        header[t.name] = {{"dtype", std::string(dtype_name(t.dtype))},
                          {"shape", t.shape},
                          {"data_offsets", {offset, offset + t.bytes.size()}}};
        offset += t.bytes.size();
    }
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write " + path.string());
    const std::uint64_t n = text.size();
    std::uint8_t len_bytes[8];
    for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<std::uint8_t>((n >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(len_bytes), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : tensors)
        out.write(reinterpret_cast<const char*>(t.bytes.data()),
                  static_cast<std::streamsize>(t.bytes.size()));
}

void write_npy(const fs::path& path, const TensorInit& tensor) {
    const char* descr = nullptr;
    switch (tensor.dtype) {
        case Dtype::F64: descr = "<f8"; break;
        case Dtype::F32: descr = "<f4"; break;
        case Dtype::F16: descr = "<f2"; break;
        case Dtype::BF16: throw ArgError("NPY has no bf16 dtype");
    }
    std::string shape = "(";
    for (std::size_t i = 0; i < tensor.shape.size(); ++i)
        shape += std::to_string(tensor.shape[i]) + (tensor.shape.size() == 1 ? "," : (i + 1 < tensor.shape.size() ? ", " : ""));
    shape += ")";
    std::string dict = std::string("{'descr': '") + descr + "', 'fortran_order': False, 'shape': " +
                       shape + ", }";
    std::size_t header_total = 10 + dict.size() + 1;
    const std::size_t pad = (64 - header_total % 64) % 64;
    dict.append(pad, ' ');
    dict += '\n';

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write " + path.string());
    out.write("\x93NUMPY\x01\x00", 8);
    const auto len = static_cast<std::uint16_t>(dict.size());
    const std::uint8_t len_bytes[2] = {static_cast<std::uint8_t>(len & 0xff),
                                       static_cast<std::uint8_t>(len >> 8)};
    out.write(reinterpret_cast<const char*>(len_bytes), 2);
    out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
    out.write(reinterpret_cast<const char*>(tensor.bytes.data()),
              static_cast<std::streamsize>(tensor.bytes.size()));
}

void write_npy_dir(const fs::path& dir, std::span<const TensorInit> tensors) {
    fs::create_directories(dir);
    for (const auto& t : tensors) write_npy(dir / (t.name + ".npy"), t);
}

}  // namespace weightscope::ckpt
