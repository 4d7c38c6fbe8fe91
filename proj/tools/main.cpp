// SPDX-License-Identifier: Apache-2.0
//
// weightscope: layer-similarity analysis over transformer checkpoint weights.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "weightscope/analysis.hpp"
#include "weightscope/checkpoint.hpp"
#include "weightscope/output.hpp"
#include "weightscope/verify.hpp"

namespace fs = std::filesystem;
using namespace weightscope;
using json = nlohmann::json;

namespace {

struct RunConfig {
    std::vector<std::string> checkpoints;
    std::string naming = "llama";
    std::vector<std::string> roles;
    std::vector<std::string> kinds = {"DOCS"};
    std::vector<int> layers;
    std::vector<double> thetas = {0.001, 0.002, 0.003, 0.005};
    double svcca_threshold = 0.99;
    std::string aggregate = "max";
    std::string compute_dtype = "f32";
    std::uint64_t seed = 42;
    int tile = 512;
    int trials = 100;
    std::string out_dir = ".";
    std::string formats = "csv,json";
    std::string stdout_mode;
};

void add_common_options(CLI::App* cmd, RunConfig& config, bool needs_checkpoint) {
    if (needs_checkpoint)
        cmd->add_option("--checkpoint", config.checkpoints,
                        "checkpoint file(s) or NPY directory; repeat for shards")
            ->required();
    cmd->add_option("--naming", config.naming, "naming preset (llama|gemma|mixtral) or JSON path");
    cmd->add_option("--role", config.roles, "role tag(s): Wq Wk Wv Wo MlpUp MlpDown MlpGate ...");
    cmd->add_option("--kind", config.kinds, "index kind(s), or 'all' for the eight published ones");
    cmd->add_option("--svcca-threshold", config.svcca_threshold,
                    "SVCCA cumulative-variance threshold in (0,1]");
    cmd->add_option("--aggregate", config.aggregate, "DOCS aggregation: max|mean");
    cmd->add_option("--tile", config.tile, "column tile width of the cosine kernel");
    cmd->add_option("--seed", config.seed, "seed for all randomized fixtures");
    cmd->add_option("--compute-dtype", config.compute_dtype, "matrix compute dtype: f32|f64");
    cmd->add_option("--out", config.out_dir, "output directory");
    cmd->add_option("--format", config.formats, "comma list from csv,json,png");
    cmd->add_option("--stdout", config.stdout_mode, "set to 'json' for a single-document stdout");
}

struct Formats {
    bool csv = false, json_out = false, png = false;
};

Formats parse_formats(const std::string& text) {
    Formats formats;
    std::size_t at = 0;
    while (at <= text.size()) {
        const auto comma = text.find(',', at);
        const std::string item = text.substr(at, comma == std::string::npos ? comma : comma - at);
        if (item == "csv")
            formats.csv = true;
        else if (item == "json")
            formats.json_out = true;
        else if (item == "png")
            formats.png = true;
        else if (!item.empty())
            throw ArgError("unknown output format '" + item + "'");
        if (comma == std::string::npos) break;
        at = comma + 1;
    }
    if (!formats.csv && !formats.json_out && !formats.png)
        throw ArgError("no output format selected");
    return formats;
}

ckpt::NamingConfig naming_from_option(const std::string& value) {
    if (value == "llama" || value == "gemma" || value == "mixtral")
        return ckpt::naming_preset(value);
    return ckpt::load_naming_config(value);
}

std::vector<simcore::IndexKind> kinds_from_option(const std::vector<std::string>& names) {
    std::vector<simcore::IndexKind> kinds;
    for (const auto& name : names) {
        if (name == "all") {
            for (simcore::IndexKind kind : simcore::kAllIndexKinds)
                if (kind != simcore::IndexKind::DocsMean) kinds.push_back(kind);
            continue;
        }
        const auto kind = simcore::index_kind_from_string(name);
        if (!kind) throw ArgError("unknown index kind '" + name + "'");
        kinds.push_back(*kind);
    }
    if (kinds.empty()) throw ArgError("no index kind selected");
    return kinds;
}

std::vector<ckpt::RoleTag> roles_from_option(const std::vector<std::string>& names) {
    std::vector<ckpt::RoleTag> roles;
    for (const auto& name : names) {
        const auto kind = ckpt::role_kind_from_string(name);
        if (!kind) throw ArgError("unknown role '" + name + "'");
        roles.emplace_back(*kind);
    }
    if (roles.empty()) throw ArgError("at least one --role is required");
    return roles;
}

analysis::AnalysisParams params_from_config(const RunConfig& config) {
    analysis::AnalysisParams params;
    if (config.compute_dtype == "f32")
        params.compute_dtype = ckpt::ComputeDtype::F32;
    else if (config.compute_dtype == "f64")
        params.compute_dtype = ckpt::ComputeDtype::F64;
    else
        throw ArgError("compute dtype must be f32 or f64");
    if (!(config.svcca_threshold > 0.0 && config.svcca_threshold <= 1.0))
        throw ArgError("svcca threshold must lie in (0, 1]");
    params.svcca_threshold = config.svcca_threshold;
    if (config.aggregate == "max")
        params.aggregate = simcore::Aggregate::Max;
    else if (config.aggregate == "mean")
        params.aggregate = simcore::Aggregate::Mean;
    else
        throw ArgError("aggregate must be max or mean");
    if (config.tile < 1) throw ArgError("tile must be positive");
    params.tile = config.tile;
    return params;
}

fs::path prepare_out_dir(const RunConfig& config) {
    fs::path dir(config.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw UsageError("output directory is not writable: " + dir.string());
    return dir;
}

// When --kind DOCS is combined with --aggregate mean the ablation kind is
// computed instead.
simcore::IndexKind effective_kind(simcore::IndexKind kind, const analysis::AnalysisParams& p) {
    if (kind == simcore::IndexKind::Docs && p.aggregate == simcore::Aggregate::Mean)
        return simcore::IndexKind::DocsMean;
    return kind;
}

// Single-model commands merge every --checkpoint path as shards of one
// checkpoint; compare treats each path as a separate model.
ckpt::CheckpointIndex open_merged(const RunConfig& config) {
    const auto naming = naming_from_option(config.naming);
    std::vector<fs::path> paths;
    for (const auto& p : config.checkpoints) paths.emplace_back(p);
    return ckpt::open_checkpoint(paths, naming);
}

ckpt::CheckpointIndex open_from_config(const RunConfig& config, std::size_t at) {
    const auto naming = naming_from_option(config.naming);
    const fs::path paths[] = {fs::path(config.checkpoints.at(at))};
    return ckpt::open_checkpoint(paths, naming);
}

void emit_stdout(const RunConfig& config, const json& doc) {
    if (config.stdout_mode.empty()) return;
    if (config.stdout_mode != "json") throw ArgError("--stdout only supports 'json'");
    std::cout << doc.dump() << "\n";
}

std::string heatmap_stem(const analysis::SimilarityMatrix& sim) {
    return ckpt::role_name(sim.role) + "_" + std::string(simcore::to_string(sim.kind));
}

void write_heatmap_outputs(const fs::path& dir, const Formats& formats,
                           const analysis::SimilarityMatrix& sim, const std::string& prefix,
                           json* stdout_doc) {
    const std::string stem = prefix + "_" + heatmap_stem(sim);
    if (formats.csv) out::write_text(dir / (stem + ".csv"), out::heatmap_csv(sim));
    if (formats.json_out)
        out::write_text(dir / (stem + ".json"), out::heatmap_json(sim).dump(2) + "\n");
    if (formats.png) {
        const auto scale = out::render_heatmap_png(dir / (stem + ".png"), sim);
        const json sidecar = {{"vmin", scale.vmin}, {"vmax", scale.vmax}, {"colormap", "viridis"}};
        out::write_text(dir / (stem + ".scale.json"), sidecar.dump(2) + "\n");
    }
    if (stdout_doc) stdout_doc->push_back(out::heatmap_json(sim));
}

int cmd_layers(const RunConfig& config) {
    const auto formats = parse_formats(config.formats);
    const auto params = params_from_config(config);
    const auto dir = prepare_out_dir(config);
    const auto index = open_merged(config);
    const auto roles = roles_from_option(config.roles);
    const auto kinds = kinds_from_option(config.kinds);

    json doc = json::array();
    for (const auto& role : roles) {
        for (const auto requested : kinds) {
            const auto kind = effective_kind(requested, params);
            std::fprintf(stderr, "[layers] %s %s\n", ckpt::role_name(role).c_str(),
                         std::string(simcore::to_string(kind)).c_str());
            const auto sim = analysis::layer_heatmap(index, role, kind, params);
            write_heatmap_outputs(dir, formats, sim, "heatmap",
                                  config.stdout_mode.empty() ? nullptr : &doc);
            if (formats.csv && sim.layer_count >= 2)
                out::write_text(dir / ("distance_" + heatmap_stem(sim) + ".csv"),
                                out::distance_csv(analysis::distance_profile(sim)));
        }
    }
    emit_stdout(config, doc);
    return 0;
}

int cmd_gini(const RunConfig& config) {
    const auto params = params_from_config(config);
    const auto dir = prepare_out_dir(config);
    const auto index = open_merged(config);
    const auto roles = roles_from_option(config.roles);
    const auto kinds = kinds_from_option(config.kinds);

    std::vector<out::GiniRow> rows;
    for (const auto& role : roles)
        for (const auto requested : kinds) {
            const auto kind = effective_kind(requested, params);
            const auto sim = analysis::layer_heatmap(index, role, kind, params);
            rows.push_back({ckpt::role_name(role), std::string(simcore::to_string(kind)),
                            analysis::gini(sim)});
        }
    out::write_text(dir / "gini.csv", out::gini_csv(rows));
    json doc = json::array();
    for (const auto& row : rows)
        doc.push_back({{"role", row.role}, {"kind", row.kind}, {"gini", row.value}});
    emit_stdout(config, doc);
    return 0;
}

int cmd_blocks(const RunConfig& config) {
    const auto params = params_from_config(config);
    const auto dir = prepare_out_dir(config);
    const auto index = open_merged(config);
    const auto roles = roles_from_option(config.roles);
    const auto kind = effective_kind(kinds_from_option(config.kinds).front(), params);

    json doc = json::array();
    for (const auto& role : roles) {
        const auto sim = analysis::layer_heatmap(index, role, kind, params);
        for (int k = 3; k <= 7; ++k) {
            const auto profile = analysis::block_profile(sim, k);
            out::write_text(dir / ("blocks_" + ckpt::role_name(role) + "_k" + std::to_string(k) +
                                   ".csv"),
                            out::blocks_csv(profile));
            if (!config.stdout_mode.empty())
                doc.push_back({{"role", ckpt::role_name(role)},
                               {"block_size", k},
                               {"averages", profile.averages}});
        }
    }
    emit_stdout(config, doc);
    return 0;
}

int cmd_compare(const RunConfig& config) {
    if (config.checkpoints.size() != 2 && config.checkpoints.size() != 3)
        throw ArgError("compare needs two checkpoints (or three for the ratio report)");
    const auto params = params_from_config(config);
    const auto dir = prepare_out_dir(config);
    const auto roles = roles_from_option(config.roles);
    const auto kind = effective_kind(kinds_from_option(config.kinds).front(), params);

    const auto index_a = open_from_config(config, 0);
    const auto index_b = open_from_config(config, 1);

    json doc = json::array();
    if (config.checkpoints.size() == 2) {
        if (index_a.num_layers != index_b.num_layers)
            throw DimError("checkpoints disagree on layer count");
        for (const auto& role : roles) {
            std::vector<int> layers;
            std::vector<double> sims;
            for (int layer = 0; layer < index_a.num_layers; ++layer) {
                const auto ma = ckpt::orient_matrix(
                    ckpt::load_matrix(index_a, layer, role, params.compute_dtype));
                const auto mb = ckpt::orient_matrix(
                    ckpt::load_matrix(index_b, layer, role, params.compute_dtype));
                layers.push_back(layer);
                sims.push_back(analysis::evaluate_pair(kind, ma, mb, params));
            }
            out::write_text(dir / ("compare_" + ckpt::role_name(role) + ".csv"),
                            out::compare_csv(layers, sims));
            if (!config.stdout_mode.empty())
                doc.push_back({{"role", ckpt::role_name(role)}, {"similarity", sims}});
        }
    } else {
        const auto index_c = open_from_config(config, 2);
        for (const auto& role : roles) {
            const auto report = analysis::similarity_ratio(index_a, index_b, index_c, role, kind,
                                                           params);
            out::write_text(dir / ("ratio_" + ckpt::role_name(role) + ".csv"),
                            out::ratio_csv(report));
            if (!config.stdout_mode.empty()) {
                json entries = json::array();
                for (const auto& e : report.entries)
                    entries.push_back({{"layer", e.layer},
                                       {"sim_ab", e.sim_ab},
                                       {"sim_ac", e.sim_ac},
                                       {"ratio", e.ratio},
                                       {"defined", e.defined}});
                doc.push_back({{"role", ckpt::role_name(role)}, {"entries", entries}});
            }
        }
    }
    emit_stdout(config, doc);
    return 0;
}

int cmd_experts(const RunConfig& config) {
    const auto formats = parse_formats(config.formats);
    const auto params = params_from_config(config);
    const auto dir = prepare_out_dir(config);
    const auto index = open_merged(config);
    const auto kind = effective_kind(kinds_from_option(config.kinds).front(), params);
    if (config.layers.empty()) throw ArgError("experts needs at least one --layer");

    std::vector<ckpt::RoleKind> expert_roles;
    if (config.roles.empty()) {
        expert_roles = {ckpt::RoleKind::ExpertW1, ckpt::RoleKind::ExpertW2,
                        ckpt::RoleKind::ExpertW3};
    } else {
        for (const auto& name : config.roles) {
            const auto role = ckpt::role_kind_from_string(name);
            if (!role || !ckpt::role_is_expert(*role))
                throw ArgError("experts needs ExpertW1/ExpertW2/ExpertW3 roles");
            expert_roles.push_back(*role);
        }
    }

    json doc = json::array();
    for (const int layer : config.layers)
        for (const auto role : expert_roles) {
            const auto sim = analysis::expert_heatmap(index, layer, role, kind, params);
            write_heatmap_outputs(dir, formats, sim, "experts_L" + std::to_string(layer),
                                  config.stdout_mode.empty() ? nullptr : &doc);
        }
    emit_stdout(config, doc);
    return 0;
}

int cmd_ortho(const RunConfig& config) {
    const auto params = params_from_config(config);
    const auto dir = prepare_out_dir(config);
    const auto index = open_merged(config);
    const auto roles = roles_from_option(config.roles);

    json doc = json::array();
    for (const auto& role : roles) {
        std::vector<int> layers;
        std::vector<double> values;
        Eigen::Index dim = 0;
        for (int layer = 0; layer < index.num_layers; ++layer) {
            const auto m =
                ckpt::orient_matrix(ckpt::load_matrix(index, layer, role, params.compute_dtype));
            dim = m.rows();
            layers.push_back(layer);
            values.push_back(analysis::offdiag_avg_cos(m, params.tile));
        }
        std::vector<double> references;
        for (double theta : config.thetas)
            references.push_back(analysis::offdiag_avg_cos(
                analysis::make_m_theta(dim, theta, config.seed), params.tile));
        out::write_text(dir / ("ortho_" + ckpt::role_name(role) + ".csv"),
                        out::ortho_csv(layers, values, config.thetas, references));
        if (!config.stdout_mode.empty())
            doc.push_back({{"role", ckpt::role_name(role)},
                           {"values", values},
                           {"thetas", config.thetas},
                           {"references", references}});
    }
    emit_stdout(config, doc);
    return 0;
}

int cmd_verify(const RunConfig& config) {
    const auto dir = prepare_out_dir(config);
    const auto reports = verify::default_suite(config.seed);
    const json doc = out::verify_report_json(reports);
    out::write_text(dir / "verify_report.json", doc.dump(2) + "\n");
    for (const auto& report : reports)
        std::fprintf(stderr, "[verify] %-18s %-13s %-18s max_dev=%g\n",
                     std::string(verify::to_string(report.property)).c_str(),
                     std::string(simcore::to_string(report.kind)).c_str(),
                     std::string(verify::to_string(report.classification)).c_str(),
                     report.max_deviation);
    emit_stdout(config, doc);
    return verify::suite_matches_expectations(reports) ? 0 : 5;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"weightscope: weight-matrix similarity analysis for transformer checkpoints"};
    app.require_subcommand(1);

    RunConfig config;
    auto* layers = app.add_subcommand("layers", "layer-pair similarity heatmaps and profiles");
    add_common_options(layers, config, true);
    auto* gini = app.add_subcommand("gini", "Gini concentration per (role, kind) heatmap");
    add_common_options(gini, config, true);
    auto* blocks = app.add_subcommand("blocks", "diagonal-block cluster averages (3x3..7x7)");
    add_common_options(blocks, config, true);
    auto* compare = app.add_subcommand("compare", "cross-checkpoint per-layer similarity / ratio");
    add_common_options(compare, config, true);
    auto* experts = app.add_subcommand("experts", "MoE expert-pair heatmaps for a layer");
    add_common_options(experts, config, true);
    experts->add_option("--layer", config.layers, "layer indices to analyze")->required();
    auto* ortho = app.add_subcommand("ortho", "off-diagonal average cosine vs reference family");
    add_common_options(ortho, config, true);
    ortho->add_option("--theta", config.thetas, "reference deviations for the identity family");
    auto* verify_cmd = app.add_subcommand("verify", "numerical verification suite and report");
    add_common_options(verify_cmd, config, false);
    verify_cmd->add_option("--trials", config.trials, "trials per property");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (layers->parsed()) return cmd_layers(config);
        if (gini->parsed()) return cmd_gini(config);
        if (blocks->parsed()) return cmd_blocks(config);
        if (compare->parsed()) return cmd_compare(config);
        if (experts->parsed()) return cmd_experts(config);
        if (ortho->parsed()) return cmd_ortho(config);
        if (verify_cmd->parsed()) return cmd_verify(config);
    } catch (const ArgError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "ingestion error: " << e.what() << "\n";
        return 3;
    } catch (const DuplicateTensorError& e) {
        std::cerr << "ingestion error: " << e.what() << "\n";
        return 3;
    } catch (const ShapeError& e) {
        std::cerr << "ingestion error: " << e.what() << "\n";
        return 3;
    } catch (const SlotNotFoundError& e) {
        std::cerr << "ingestion error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
