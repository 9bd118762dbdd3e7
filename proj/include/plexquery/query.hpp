#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "plexquery/community.hpp"
#include "plexquery/encoder.hpp"
#include "plexquery/graph.hpp"
#include "plexquery/ingest.hpp"
#include "plexquery/trainer.hpp"

namespace plexquery {

/// Everything a trained panel contributes to an index.
struct PanelArtifacts {
    PanelDefinition panel;
    int patch_size = 0;
    EmbeddingSet embeddings;  // rows aligned with the index cells
    PatchGraph graph;
    CommunityPartition partition;
};

/// Restricts every panel to the cells they all share (ascending cell id),
/// taking induced subgraphs. Partitions keep their labels.
std::vector<CellRecord> align_panels(std::vector<PanelArtifacts>& panels);

struct PanelIndex {
    PanelDefinition panel;
    int patch_size = 0;
    bool has_embeddings = false;
    bool has_graph = false;
    PcaModel pca;
    std::vector<double> reduced;  // cells x pca.rank()
    std::vector<double> reduced_norms;
    PatchGraph graph;
    CommunityPartition partition;
};

struct FusedPartition {
    std::vector<std::string> panels;  // sorted
    PatchGraph graph;
    CommunityPartition partition;
};

struct IndexOptions {
    std::size_t pca_dim = 128;
    std::size_t min_size = 5;  // fused partitions
    std::uint64_t seed = 0;
};

/// Immutable query snapshot. The only mutable state is the fused-partition
/// cache, whose inserts are first-writer-wins under a mutex.
class SearchIndex {
public:
    /// Cells, marker columns and per-cell mean intensities (cells x markers).
    /// Intensities are stored at 9 significant digits, the exported precision.
    static SearchIndex build(std::vector<CellRecord> cells, std::vector<std::string> markers,
                             std::vector<double> intensities, std::vector<PanelArtifacts> panels,
                             const IndexOptions& options = {});
    /// Index without embeddings or graphs (what the community CSV carries).
    static SearchIndex from_table(std::vector<CellRecord> cells, std::vector<std::string> markers,
                                  std::vector<double> intensities, std::vector<PanelIndex> panels,
                                  const IndexOptions& options = {});

    std::size_t size() const { return cells_.size(); }
    const std::vector<CellRecord>& cells() const { return cells_; }
    const std::vector<std::string>& markers() const { return markers_; }
    std::span<const double> intensities(std::size_t row) const {
        return {intensities_.data() + row * markers_.size(), markers_.size()};
    }
    const std::vector<PanelIndex>& panels() const { return panels_; }
    const IndexOptions& options() const { return options_; }

    /// Throws UnknownCell.
    std::size_t row(std::int64_t cell_id) const;
    bool contains(std::int64_t cell_id) const { return row_of_.count(cell_id) != 0; }
    /// Throws UnknownPanelSet.
    const PanelIndex& panel(const std::string& name) const;
    std::size_t marker_column(const std::string& marker) const;

    /// Fuses the named panel graphs and runs infomap once per panel set;
    /// the key is the sorted panel names. Requires graphs.
    std::shared_ptr<const FusedPartition> fused(std::vector<std::string> panel_names) const;

private:
    struct FusedCache {
        std::mutex mutex;
        std::map<std::string, std::shared_ptr<const FusedPartition>> entries;
    };

    std::vector<CellRecord> cells_;
    std::vector<std::string> markers_;
    std::vector<double> intensities_;
    std::vector<PanelIndex> panels_;
    std::unordered_map<std::int64_t, std::size_t> row_of_;
    IndexOptions options_;
    std::shared_ptr<FusedCache> cache_ = std::make_shared<FusedCache>();
};

/// Rounds to the 9 significant digits the community CSV stores.
double canonical_value(double v);

struct RetrievalResult {
    std::vector<std::int64_t> cell_ids;
    std::vector<double> scores;
    std::string mode;
    std::vector<std::string> panels;
};

/// Exact cosine against every other cell in the panel's PCA space; top n,
/// ties broken by cell id, query excluded.
RetrievalResult topn_cosine(const SearchIndex& index, const std::string& panel, std::int64_t query_cell,
                            std::size_t n);

/// All members of the query's community (query included), ordered by cosine
/// of their panel-marker intensity profile to the community mean profile.
RetrievalResult community_retrieve(const SearchIndex& index, const std::string& panel, std::int64_t query_cell);

/// Community retrieval on the fused partition of two or more panels.
RetrievalResult fused_retrieve(const SearchIndex& index, const std::vector<std::string>& panels,
                               std::int64_t query_cell);

struct QuickSearchResult {
    RetrievalResult result;
    std::vector<std::string> features_used;
    std::vector<double> similarity;  // result size squared, row-major
};

/// Model-free retrieval: z-scored feature columns, cosine, top n (ties go to
/// the nearer standardized vector, then the lower cell id).
QuickSearchResult quick_search(const SearchIndex& index, std::int64_t query_cell,
                               const std::vector<std::string>& features, std::size_t n);

struct MarkerProfile {
    std::string marker;
    double mean = 0.0;
    double std = 0.0;
};

/// Per-marker mean and population std of the per-cell mean intensities.
std::vector<MarkerProfile> expression_profile(const SearchIndex& index, std::span<const std::int64_t> cells);

/// The `count` members of a community closest (cosine) to its embedding centroid.
std::vector<std::int64_t> representative_patches(const SearchIndex& index, const std::string& panel, int community,
                                                 std::size_t count);

}  // namespace plexquery
