#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plexquery/ingest.hpp"
#include "plexquery/query.hpp"
#include "plexquery/trainer.hpp"

namespace plexquery {

struct PanelConfig {
    PanelDefinition panel;
    int patch_size = 25;
    TrainConfig train;
};

/// One JSON file shared by every pipeline stage. Relative paths resolve
/// against the directory holding the config.
struct ProjectConfig {
    std::filesystem::path manifest;
    std::filesystem::path centroids;
    std::optional<std::filesystem::path> label_raster;
    std::optional<std::filesystem::path> label_legend;
    std::optional<std::filesystem::path> cell_types;
    std::vector<PanelConfig> panels;
    ScalingOptions scaling;
    int intensity_window = 5;  // pixels averaged per cell for the intensity table
    IndexOptions index;
    std::filesystem::path output = "out";

    const PanelConfig& panel(const std::string& name) const;  // UnknownPanelSet
    std::vector<PanelDefinition> panel_definitions() const;

    std::filesystem::path checkpoint_path(const std::string& panel) const;
    std::filesystem::path snapshot_path(const std::string& panel) const;
    std::filesystem::path panel_dir(const std::string& panel) const;
};

/// Reads and validates the config. `seed`, when given, replaces every seed.
ProjectConfig load_project_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed = {});
ProjectConfig project_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                       std::optional<std::uint64_t> seed = {});

}  // namespace plexquery
