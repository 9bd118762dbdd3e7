#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plexquery/config.hpp"
#include "plexquery/eval.hpp"
#include "plexquery/ingest.hpp"
#include "plexquery/query.hpp"
#include "plexquery/trainer.hpp"

namespace plexquery {

/// Image and centroids named by a project config.
struct Workspace {
    MultiplexImage image;
    std::vector<CellRecord> cells;
};

Workspace load_workspace(const ProjectConfig& cfg);

struct PanelTrainSummary {
    std::string panel;
    std::size_t cells = 0;
    std::size_t dropped = 0;
    std::vector<EpochRecord> log;
};

/// Trains one panel and writes under cfg.panel_dir(panel): the encoder
/// checkpoint and its epoch-0 initialization (encoder_init.plxq), each with a
/// sidecar, train_log.jsonl, epoch_NN.png pseudo-label maps, the panel
/// snapshot and partition.csv.
PanelTrainSummary run_training(const ProjectConfig& cfg, const Workspace& ws, const std::string& panel);

/// Loads the snapshots of every config panel, aligns them on their shared
/// cells and attaches the mean-intensity table.
SearchIndex build_index(const ProjectConfig& cfg, const Workspace& ws);

/// `count` distinct ids drawn with a seeded generator (all of them when
/// count >= ids.size()), in draw order.
std::vector<std::int64_t> sample_queries(const std::vector<std::int64_t>& ids, std::size_t count, std::uint64_t seed);

struct EvalOptions {
    std::size_t queries = 200;
    std::uint64_t seed = 0;
    std::vector<std::size_t> ks{1, 5};
};

/// Top-k per panel (when cell types are configured), confusion per panel and
/// for the fusion of all panels (when labels are configured), and code
/// lengths for every single panel plus the all-panel fusion.
EvalReport run_evaluation(const ProjectConfig& cfg, const Workspace& ws, const SearchIndex& index,
                          const EvalOptions& options);

}  // namespace plexquery
