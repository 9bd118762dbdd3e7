#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "plexquery/encoder.hpp"

namespace plexquery {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct Edge {
    std::size_t i = 0;  // i < j, node indices
    std::size_t j = 0;
    double weight = 0.0;
};

/// Weighted undirected graph over patches. Edges are unique, loop-free,
/// strictly positive and sorted by (i, j).
struct PatchGraph {
    std::vector<std::int64_t> node_ids;
    std::vector<Point> coords;
    std::vector<Edge> edges;

    std::size_t node_count() const { return node_ids.size(); }
    /// Neighbor lists (index, weight), each sorted by index.
    std::vector<std::vector<std::pair<std::size_t, double>>> adjacency() const;
    std::vector<double> strengths() const;
    double total_weight() const;
};

struct GraphConfig {
    std::size_t k = 20;
    double sigma = 100.0;  // pixels

    static GraphConfig for_patch_size(int patch_size) { return {20, 4.0 * patch_size}; }
    void validate() const;
};

/// cos(a, b) * exp(-|pa - pb| / sigma), or nullopt when the cosine is not positive.
std::optional<double> proximity(std::span<const double> a, std::span<const double> b, Point pa, Point pb,
                                double sigma);

/// Exact brute-force kNN graph: every node keeps its k highest-proximity
/// neighbors (ties to the lower index) and an edge exists when either end
/// selected the other. Nodes without a positive neighbor stay isolated.
PatchGraph build_knn_graph(const EmbeddingSet& embeddings, std::span<const Point> coords, const GraphConfig& cfg);

/// Keeps the edges present in every input, weighted by the mean input weight.
PatchGraph fuse_graphs(std::span<const PatchGraph> graphs);

/// `i,j,weight` CSV with cell ids and full-precision weights.
void save_edge_list(const PatchGraph& graph, const std::filesystem::path& path);

}  // namespace plexquery
