#include "plexquery/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <random>

#include "plexquery/encoder.hpp"
#include "plexquery/error.hpp"
#include "plexquery/persistence.hpp"
#include "plexquery/png.hpp"

namespace plexquery {

Workspace load_workspace(const ProjectConfig& cfg) {
    Workspace ws;
    ws.image = load_image(load_manifest(cfg.manifest));
    ws.cells = load_centroids(cfg.centroids, ws.image.width(), ws.image.height());
    for (const auto& p : cfg.panels) validate_panel(p.panel, ws.image.manifest);
    return ws;
}

PanelTrainSummary run_training(const ProjectConfig& cfg, const Workspace& ws, const std::string& panel_name) {
    const PanelConfig& pc = cfg.panel(panel_name);
    const PatchSet patches = extract_patches(ws.image, ws.cells, pc.panel, pc.patch_size, cfg.scaling);
    const auto coords = patch_coords(patches);
    const auto dir = cfg.panel_dir(panel_name);
    std::filesystem::create_directories(dir);

    std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
    if (!log) throw Error(ErrorCode::IoError, "cannot write " + (dir / "train_log.jsonl").string());
    const auto on_epoch = [&](const EpochRecord& r, const PseudoLabels& labels) {
        log << to_json(r).dump() << '\n';
        log.flush();
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%02zu.png", r.epoch);
        write_png(render_pseudo_label_map(labels.partition, coords, ws.image.width(), ws.image.height(), pc.patch_size),
                  dir / name);
    };
    const TrainResult result = train_panel(patches, coords, pc.train, on_epoch);

    nlohmann::json meta{{"panel", pc.panel.name},
                        {"markers", pc.panel.markers},
                        {"train", to_json(pc.train)},
                        {"epochs", result.log.size() - 1},
                        {"final_code_length", result.code_lengths.back()}};
    save_checkpoint(result.initial_params, dir / "encoder_init.plxq", meta);
    save_checkpoint(result.params, cfg.checkpoint_path(panel_name), meta);
    save_panel_snapshot({pc.panel, pc.patch_size, result.final_labels.embeddings, result.final_labels.graph,
                         result.final_labels.partition},
                        cfg.snapshot_path(panel_name));
    save_partition(result.final_labels.graph, result.final_labels.partition, dir / "partition.csv");

    PanelTrainSummary s;
    s.panel = panel_name;
    s.cells = patches.size();
    s.dropped = patches.dropped;
    s.log = result.log;
    return s;
}

SearchIndex build_index(const ProjectConfig& cfg, const Workspace& ws) {
    std::vector<PanelArtifacts> artifacts;
    for (const auto& p : cfg.panels) {
        const auto path = cfg.snapshot_path(p.panel.name);
        if (!std::filesystem::exists(path)) {
            throw Error(ErrorCode::MissingFile, path.string() + " (train panel '" + p.panel.name + "' first)");
        }
        artifacts.push_back(load_panel_snapshot(path));
    }
    auto cells = align_panels(artifacts);
    if (cells.empty()) throw Error(ErrorCode::EmptyResult, "the panels share no cells");
    auto intensities = cell_mean_intensities(ws.image, cells, cfg.intensity_window, cfg.scaling);
    return SearchIndex::build(std::move(cells), ws.image.manifest.marker_names(), std::move(intensities),
                              std::move(artifacts), cfg.index);
}

std::vector<std::int64_t> sample_queries(const std::vector<std::int64_t>& ids, std::size_t count, std::uint64_t seed) {
    std::vector<std::int64_t> pool = ids;
    std::mt19937_64 rng(seed);
    const std::size_t take = std::min(count, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
        // Partial Fisher-Yates with a plain modulo draw: identical on every
        // standard library, unlike uniform_int_distribution.
        const std::size_t j = i + static_cast<std::size_t>(rng() % (pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    return pool;
}

EvalReport run_evaluation(const ProjectConfig& cfg, const Workspace& ws, const SearchIndex& index,
                          const EvalOptions& options) {
    EvalReport report;
    std::vector<std::string> names;
    for (const auto& p : index.panels()) names.push_back(p.panel.name);

    if (cfg.cell_types) {
        const auto types = load_cell_types(*cfg.cell_types);
        std::vector<std::int64_t> labeled;
        for (const auto& c : index.cells()) {
            if (types.count(c.cell_id)) labeled.push_back(c.cell_id);
        }
        const auto queries = sample_queries(labeled, options.queries, options.seed);
        for (const auto& name : names) {
            for (std::size_t k : options.ks) {
                report.topk.push_back({name, k, queries.size(), topk_accuracy(index, name, types, k, queries)});
            }
        }
    }
    if (cfg.label_raster && cfg.label_legend) {
        const auto labels = load_label_raster(*cfg.label_raster, *cfg.label_legend, ws.image.width(), ws.image.height());
        for (const auto& p : index.panels()) {
            auto c = confusion_iou(p.partition, index.cells(), labels);
            c.name = p.panel.name;
            report.confusion.push_back(std::move(c));
        }
        if (names.size() >= 2) {
            const auto fused = index.fused(names);
            auto c = confusion_iou(fused->partition, index.cells(), labels);
            for (const auto& n : fused->panels) c.name += (c.name.empty() ? "" : "+") + n;
            report.confusion.push_back(std::move(c));
        }
    }
    std::vector<std::vector<std::string>> sets;
    for (const auto& n : names) sets.push_back({n});
    if (names.size() >= 2) sets.push_back(names);
    report.code_lengths = codelength_compare(index, sets);
    return report;
}

}  // namespace plexquery
