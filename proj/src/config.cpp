#include "plexquery/config.hpp"

#include <fstream>

#include "plexquery/error.hpp"

namespace plexquery {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace

const PanelConfig& ProjectConfig::panel(const std::string& name) const {
    for (const auto& p : panels) {
        if (p.panel.name == name) return p;
    }
    throw Error(ErrorCode::UnknownPanelSet, "panel '" + name + "' is not in the config");
}

std::vector<PanelDefinition> ProjectConfig::panel_definitions() const {
    std::vector<PanelDefinition> out;
    for (const auto& p : panels) out.push_back(p.panel);
    return out;
}

std::filesystem::path ProjectConfig::panel_dir(const std::string& panel) const { return output / panel; }
std::filesystem::path ProjectConfig::checkpoint_path(const std::string& panel) const {
    return panel_dir(panel) / "encoder.plxq";
}
std::filesystem::path ProjectConfig::snapshot_path(const std::string& panel) const {
    return panel_dir(panel) / "snapshot.plxq";
}

ProjectConfig project_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                       std::optional<std::uint64_t> seed) {
    ProjectConfig cfg;
    try {
        cfg.manifest = resolve(base_dir, j.at("manifest").get<std::string>());
        cfg.centroids = resolve(base_dir, j.at("centroids").get<std::string>());
        if (j.contains("labels")) {
            const auto& l = j.at("labels");
            cfg.label_raster = resolve(base_dir, l.at("raster").get<std::string>());
            cfg.label_legend = resolve(base_dir, l.at("legend").get<std::string>());
        }
        if (j.contains("cell_types")) cfg.cell_types = resolve(base_dir, j.at("cell_types").get<std::string>());
        cfg.output = resolve(base_dir, j.value("output", std::string("out")));
        cfg.intensity_window = j.value("intensity_window", cfg.intensity_window);
        if (j.contains("scaling")) {
            const auto& s = j.at("scaling");
            const std::string mode = s.value("mode", std::string("dtype_max"));
            if (mode == "dtype_max") {
                cfg.scaling.mode = IntensityScaling::DtypeMax;
            } else if (mode == "percentile") {
                cfg.scaling.mode = IntensityScaling::Percentile;
            } else {
                throw Error(ErrorCode::SchemaError, "scaling.mode must be dtype_max or percentile");
            }
            cfg.scaling.percentile = s.value("percentile", cfg.scaling.percentile);
        }
        if (j.contains("index")) {
            const auto& ix = j.at("index");
            cfg.index.pca_dim = ix.value("pca_dim", cfg.index.pca_dim);
            cfg.index.min_size = ix.value("min_size", cfg.index.min_size);
            cfg.index.seed = ix.value("seed", cfg.index.seed);
        }
        const int default_patch = j.value("patch_size", 25);
        nlohmann::json train = j.value("train", nlohmann::json::object());
        if (j.contains("graph")) train.update(j.at("graph"));
        for (const auto& p : j.at("panels")) {
            PanelConfig pc;
            pc.panel.name = p.at("name").get<std::string>();
            pc.panel.markers = p.at("markers").get<std::vector<std::string>>();
            pc.patch_size = p.value("patch_size", default_patch);
            nlohmann::json t = train;
            if (p.contains("train")) t.update(p.at("train"));
            pc.train = train_config_from_json(t, pc.patch_size);
            cfg.panels.push_back(std::move(pc));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("project config: ") + e.what());
    }
    for (const auto& f : {cfg.manifest, cfg.centroids}) {
        if (!std::filesystem::exists(f)) throw Error(ErrorCode::MissingFile, f.string());
    }
    if (cfg.panels.empty()) throw Error(ErrorCode::SchemaError, "project config lists no panels");
    for (std::size_t a = 0; a < cfg.panels.size(); ++a) {
        if (cfg.panels[a].patch_size < 1 || cfg.panels[a].patch_size % 2 == 0) {
            throw Error(ErrorCode::SchemaError, "panel '" + cfg.panels[a].panel.name + "': patch_size must be odd");
        }
        for (std::size_t b = 0; b < a; ++b) {
            if (cfg.panels[a].panel.name == cfg.panels[b].panel.name) {
                throw Error(ErrorCode::SchemaError, "duplicate panel '" + cfg.panels[a].panel.name + "'");
            }
        }
    }
    if (cfg.intensity_window < 1) throw Error(ErrorCode::SchemaError, "intensity_window must be >= 1");
    if (seed) {
        for (auto& p : cfg.panels) p.train.seed = *seed;
        cfg.index.seed = *seed;
    }
    return cfg;
}

ProjectConfig load_project_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorCode::MissingFile, path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
    }
    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    return project_config_from_json(j, base, seed);
}

}  // namespace plexquery
