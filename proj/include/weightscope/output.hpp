// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "weightscope/analysis.hpp"
#include "weightscope/verify.hpp"

namespace weightscope::out {

// Numeric CSV cells carry 9 significant digits; JSON numbers stay unrounded.
std::string format_sig9(double v);

void write_text(const std::filesystem::path& path, const std::string& text);

// Heatmap CSV: first row and first column are layer indices, cells row-major.
std::string heatmap_csv(const analysis::SimilarityMatrix& sim);
nlohmann::json heatmap_json(const analysis::SimilarityMatrix& sim);

std::string distance_csv(const analysis::DistanceProfile& profile);
std::string blocks_csv(const analysis::BlockProfile& profile);

struct GiniRow {
    std::string role;
    std::string kind;
    double value = 0.0;
};
std::string gini_csv(std::span<const GiniRow> rows);

std::string compare_csv(std::span<const int> layers, std::span<const double> similarity);
std::string ratio_csv(const analysis::RatioReport& report);

std::string ortho_csv(std::span<const int> layers, std::span<const double> values,
                      std::span<const double> thetas, std::span<const double> references);

nlohmann::json verify_report_json(std::span<const verify::PropertyReport> reports);

// --- PNG rendering ---------------------------------------------------------

// Minimal deterministic PNG encoder (8-bit RGB, stored deflate blocks).
void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                    std::span<const std::uint8_t> rgb);

// Renders the similarity matrix with a fixed perceptually-uniform colormap,
// autoscaled to the off-diagonal min/max; the scale is returned so callers
// can record it in a sidecar document.
struct HeatmapScale {
    double vmin = 0.0;
    double vmax = 1.0;
};
HeatmapScale render_heatmap_png(const std::filesystem::path& path,
                                const analysis::SimilarityMatrix& sim);

}  // namespace weightscope::out
