#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "plexquery/ingest.hpp"
#include "plexquery/query.hpp"

namespace plexquery {

/// Community index CSV: `cell_id,x,y,<panel>_community...,<marker>_mean...`,
/// panels in index order, markers in index order, reals at 9 significant digits.
std::size_t export_index(const SearchIndex& index, const std::filesystem::path& path);

/// Community + intensity index from the CSV. The header must match the given
/// panels and manifest markers exactly. The result has no embeddings or graphs.
SearchIndex load_index(const std::filesystem::path& path, const Manifest& manifest,
                       const std::vector<PanelDefinition>& panels, const IndexOptions& options = {});

/// Everything one trained panel contributes to an index, persisted as a
/// panel-snapshot container plus a `<path>.json` sidecar (panel, patch size).
void save_panel_snapshot(const PanelArtifacts& artifacts, const std::filesystem::path& path);
PanelArtifacts load_panel_snapshot(const std::filesystem::path& path);

}  // namespace plexquery
