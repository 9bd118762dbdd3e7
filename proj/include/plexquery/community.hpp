#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "plexquery/graph.hpp"

namespace plexquery {

/// Pseudo-labels of a graph: community index per node (kOutlier for isolated
/// nodes and for members of communities below the minimum size) plus the
/// two-level map-equation code length, in bits, of the partition found.
struct CommunityPartition {
    std::vector<int> labels;
    std::size_t community_count = 0;
    double code_length = 0.0;

    std::size_t outlier_count() const;
    std::vector<std::size_t> community_sizes() const;
};

/// Two-level map equation L = q H(Q) + sum_i p_i H(P_i) for undirected flow,
/// base 2. Negative module ids are treated as singleton modules.
/// Throws EmptyGraph without nodes and IsolatedOnlyGraph without edge weight.
double map_equation(const PatchGraph& graph, std::span<const int> modules);

struct InfomapOptions {
    std::size_t min_size = 5;
    std::uint64_t seed = 0;
    std::size_t trials = 8;  // independent seeded searches, best kept
};

/// Greedy map-equation minimization: local node moves to the best adjacent
/// module in seeded order, module aggregation into super-nodes, repeated with
/// leaf-level refinement until nothing improves. Never worse than the
/// one-module partition.
CommunityPartition infomap(const PatchGraph& graph, const InfomapOptions& options = {});

struct BrutePartition {
    std::vector<int> modules;
    double code_length = 0.0;
};

/// Exhaustive search over all set partitions; at most 10 nodes (TooLarge otherwise).
BrutePartition brute_force_partition(const PatchGraph& graph);

/// Contiguous labels ordered by community size (desc) then first member;
/// groups smaller than min_size and isolated nodes become kOutlier.
CommunityPartition relabel_partition(const PatchGraph& graph, std::span<const int> modules, std::size_t min_size,
                                     double code_length);

/// `cell_id,community` CSV, outliers as -1.
void save_partition(const PatchGraph& graph, const CommunityPartition& partition, const std::filesystem::path& path);

}  // namespace plexquery
