// SPDX-License-Identifier: Apache-2.0

#include "weightscope/output.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace weightscope::out {

std::string format_sig9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw UsageError("cannot write " + path.string());
    file.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string heatmap_csv(const analysis::SimilarityMatrix& sim) {
    std::string text;
    for (int j = 0; j < sim.layer_count; ++j) text += "," + std::to_string(j);
    text += "\n";
    for (int i = 0; i < sim.layer_count; ++i) {
        text += std::to_string(i);
        for (int j = 0; j < sim.layer_count; ++j) text += "," + format_sig9(sim.values(i, j));
        text += "\n";
    }
    return text;
}

json heatmap_json(const analysis::SimilarityMatrix& sim) {
    json rows = json::array();
    for (int i = 0; i < sim.layer_count; ++i) {
        json row = json::array();
        for (int j = 0; j < sim.layer_count; ++j) row.push_back(sim.values(i, j));
        rows.push_back(std::move(row));
    }
    return json{{"model_id", sim.model_id},
                {"role", ckpt::role_name(sim.role)},
                {"kind", std::string(simcore::to_string(sim.kind))},
                {"layer_count", sim.layer_count},
                {"values", std::move(rows)}};
}

std::string distance_csv(const analysis::DistanceProfile& profile) {
    std::string text = "distance,mean,std\n";
    for (std::size_t i = 0; i < profile.distances.size(); ++i)
        text += std::to_string(profile.distances[i]) + "," + format_sig9(profile.mean_sim[i]) +
                "," + format_sig9(profile.std_sim[i]) + "\n";
    return text;
}

std::string blocks_csv(const analysis::BlockProfile& profile) {
    std::string text = "start,average\n";
    for (std::size_t i = 0; i < profile.start_indices.size(); ++i)
        text += std::to_string(profile.start_indices[i]) + "," +
                format_sig9(profile.averages[i]) + "\n";
    return text;
}

std::string gini_csv(std::span<const GiniRow> rows) {
    std::string text = "role,kind,gini\n";
    for (const auto& row : rows)
        text += row.role + "," + row.kind + "," + format_sig9(row.value) + "\n";
    return text;
}

std::string compare_csv(std::span<const int> layers, std::span<const double> similarity) {
    std::string text = "layer,similarity\n";
    for (std::size_t i = 0; i < layers.size(); ++i)
        text += std::to_string(layers[i]) + "," + format_sig9(similarity[i]) + "\n";
    return text;
}

std::string ratio_csv(const analysis::RatioReport& report) {
    std::string text = "layer,sim_ab,sim_ac,ratio,defined\n";
    for (const auto& entry : report.entries) {
        text += std::to_string(entry.layer) + "," + format_sig9(entry.sim_ab) + "," +
                format_sig9(entry.sim_ac) + ",";
        text += entry.defined ? format_sig9(entry.ratio) : std::string("undefined");
        text += entry.defined ? ",1\n" : ",0\n";
    }
    return text;
}

std::string ortho_csv(std::span<const int> layers, std::span<const double> values,
                      std::span<const double> thetas, std::span<const double> references) {
    std::string text = "layer,offdiag_avg_cos";
    for (double theta : thetas) text += ",mtheta_" + format_sig9(theta);
    text += "\n";
    for (std::size_t i = 0; i < layers.size(); ++i) {
        text += std::to_string(layers[i]) + "," + format_sig9(values[i]);
        for (double ref : references) text += "," + format_sig9(ref);
        text += "\n";
    }
    return text;
}

json verify_report_json(std::span<const verify::PropertyReport> reports) {
    json list = json::array();
    for (const auto& report : reports) {
        list.push_back({{"property", std::string(verify::to_string(report.property))},
                        {"kind", std::string(simcore::to_string(report.kind))},
                        {"trials", report.trials},
                        {"max_deviation", report.max_deviation},
                        {"classification", std::string(verify::to_string(report.classification))},
                        {"seed", report.seed}});
    }
    return json{{"reports", std::move(list)}};
}

// --- PNG -------------------------------------------------------------------

namespace {

std::uint32_t crc32_table_entry(std::uint32_t n) {
    for (int k = 0; k < 8; ++k) n = (n & 1) ? 0xedb88320u ^ (n >> 1) : n >> 1;
    return n;
}

std::uint32_t crc32(std::span<const std::uint8_t> data, std::uint32_t crc = 0xffffffffu) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) t[i] = crc32_table_entry(i);
        return t;
    }();
    for (std::uint8_t byte : data) crc = table[(crc ^ byte) & 0xffu] ^ (crc >> 8);
    return crc;
}

void push_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void push_chunk(std::vector<std::uint8_t>& out, const char type[4],
                std::span<const std::uint8_t> payload) {
    push_u32_be(out, static_cast<std::uint32_t>(payload.size()));
    std::vector<std::uint8_t> body(payload.size() + 4);
    std::memcpy(body.data(), type, 4);
    std::copy(payload.begin(), payload.end(), body.begin() + 4);
    out.insert(out.end(), body.begin(), body.end());
    push_u32_be(out, crc32(body) ^ 0xffffffffu);
}

// zlib container with stored (uncompressed) deflate blocks
std::vector<std::uint8_t> zlib_stored(std::span<const std::uint8_t> raw) {
    std::vector<std::uint8_t> out;
    out.push_back(0x78);
    out.push_back(0x01);
    std::size_t at = 0;
    do {
        const std::size_t len = std::min<std::size_t>(raw.size() - at, 65535);
        const bool final = at + len == raw.size();
        out.push_back(final ? 1 : 0);
        out.push_back(static_cast<std::uint8_t>(len & 0xff));
        out.push_back(static_cast<std::uint8_t>(len >> 8));
        out.push_back(static_cast<std::uint8_t>(~len & 0xff));
        out.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xff));
        out.insert(out.end(), raw.begin() + static_cast<std::ptrdiff_t>(at),
                   raw.begin() + static_cast<std::ptrdiff_t>(at + len));
        at += len;
    } while (at < raw.size());
    std::uint32_t a = 1, b = 0;
    for (std::uint8_t byte : raw) {
        a = (a + byte) % 65521;
        b = (b + a) % 65521;
    }
    push_u32_be(out, (b << 16) | a);
    return out;
}

// viridis anchors, interpolated linearly
constexpr double kColormap[][3] = {
    {0.267004, 0.004874, 0.329415}, {0.282623, 0.140926, 0.457517},
    {0.253935, 0.265254, 0.529983}, {0.206756, 0.371758, 0.553117},
    {0.163625, 0.471133, 0.558148}, {0.127568, 0.566949, 0.550556},
    {0.134692, 0.658636, 0.517649}, {0.266941, 0.748751, 0.440573},
    {0.477504, 0.821444, 0.318195}, {0.741388, 0.873449, 0.149561},
    {0.993248, 0.906157, 0.143936},
};

void colormap(double t, std::uint8_t* rgb) {
    t = std::clamp(t, 0.0, 1.0);
    constexpr int n = static_cast<int>(std::size(kColormap)) - 1;
    const double scaled = t * n;
    const int lo = std::min(static_cast<int>(scaled), n - 1);
    const double frac = scaled - lo;
    for (int c = 0; c < 3; ++c) {
        const double v = kColormap[lo][c] * (1.0 - frac) + kColormap[lo + 1][c] * frac;
        rgb[c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
}

}  // namespace

void write_png_rgb8(const fs::path& path, int width, int height,
                    std::span<const std::uint8_t> rgb) {
    if (width < 1 || height < 1 || rgb.size() != static_cast<std::size_t>(width) * height * 3)
        throw ArgError("png payload size mismatch");
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(height) * (1 + static_cast<std::size_t>(width) * 3));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);  // filter: none
        const auto* row = rgb.data() + static_cast<std::size_t>(y) * width * 3;
        raw.insert(raw.end(), row, row + static_cast<std::size_t>(width) * 3);
    }

    std::vector<std::uint8_t> file = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<std::uint8_t> ihdr;
    push_u32_be(ihdr, static_cast<std::uint32_t>(width));
    push_u32_be(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    push_chunk(file, "IHDR", ihdr);
    push_chunk(file, "IDAT", zlib_stored(raw));
    push_chunk(file, "IEND", {});

    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(file.data()),
              static_cast<std::streamsize>(file.size()));
}

HeatmapScale render_heatmap_png(const fs::path& path, const analysis::SimilarityMatrix& sim) {
    const int layers = sim.layer_count;
    HeatmapScale scale;
    if (layers > 1) {
        scale.vmin = std::numeric_limits<double>::infinity();
        scale.vmax = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < layers; ++i)
            for (int j = 0; j < layers; ++j) {
                if (i == j) continue;
                scale.vmin = std::min(scale.vmin, sim.values(i, j));
                scale.vmax = std::max(scale.vmax, sim.values(i, j));
            }
    } else {
        scale.vmin = sim.values(0, 0);
        scale.vmax = sim.values(0, 0);
    }
    const double span = scale.vmax - scale.vmin;

    const int cell = std::clamp(512 / layers, 1, 64);
    const int size = layers * cell;
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(size) * size * 3);
    for (int i = 0; i < layers; ++i)
        for (int j = 0; j < layers; ++j) {
            std::uint8_t color[3];
            const double t = span > 0 ? (sim.values(i, j) - scale.vmin) / span : 0.5;
            colormap(t, color);
            for (int y = i * cell; y < (i + 1) * cell; ++y)
                for (int x = j * cell; x < (j + 1) * cell; ++x) {
                    auto* px = rgb.data() + (static_cast<std::size_t>(y) * size + x) * 3;
                    px[0] = color[0];
                    px[1] = color[1];
                    px[2] = color[2];
                }
        }
    write_png_rgb8(path, size, size, rgb);
    return scale;
}

}  // namespace weightscope::out
