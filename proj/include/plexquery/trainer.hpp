#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "plexquery/community.hpp"
#include "plexquery/encoder.hpp"
#include "plexquery/graph.hpp"
#include "plexquery/png.hpp"

namespace plexquery {

struct TrainConfig {
    std::size_t epochs_max = 20;
    std::size_t batch_size = 256;
    double lr = 3e-4;
    GraphConfig graph;
    LossConfig loss;
    std::size_t min_size = 5;
    std::uint64_t seed = 0;
    double convergence = 0.005;  // relative code-length change, two epochs in a row
    std::size_t feature_dim = 64;
    std::size_t gate_kernel = 0;  // 0 picks the adaptive size for the channel count

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; graph.sigma defaults to 4x patch size.
TrainConfig train_config_from_json(const nlohmann::json& j, int patch_size);

std::vector<Point> patch_coords(const PatchSet& patches);

struct PseudoLabels {
    EmbeddingSet embeddings;
    PatchGraph graph;
    CommunityPartition partition;
};

/// forward -> kNN graph -> infomap.
PseudoLabels generate_pseudo_labels(const EncoderParams& params, const PatchSet& patches,
                                    std::span<const Point> coords, const TrainConfig& cfg, std::uint64_t seed);

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;  // NaN for epoch 0, which only labels
    std::size_t communities = 0;
    double code_length = 0.0;
    std::size_t outliers = 0;
};

/// One JSON-lines training log record.
nlohmann::json to_json(const EpochRecord& r);

struct TrainResult {
    EncoderParams initial_params;
    EncoderParams params;
    std::vector<CommunityPartition> history;  // epoch 0 first
    std::vector<double> code_lengths;
    std::vector<EpochRecord> log;
    PseudoLabels final_labels;
};

using EpochCallback = std::function<void(const EpochRecord&, const PseudoLabels&)>;

/// Iterative self-supervision: pseudo-labels, memory dictionary from cluster
/// centroids, shuffled mini-batch steps with momentum updates, relabel; stops
/// at epochs_max or on a code-length plateau.
TrainResult train_panel(const PatchSet& patches, std::span<const Point> coords, const TrainConfig& cfg,
                        const EpochCallback& on_epoch = {});

struct PcaModel {
    std::size_t dim = 0;
    std::vector<double> mean;
    std::vector<double> components;  // rank() x dim, orthonormal rows
    std::vector<double> explained_variance;

    std::size_t rank() const { return explained_variance.size(); }
};

/// Exact PCA via symmetric eigendecomposition of the sample covariance;
/// r = min(r_max, D, N - 1), clamped to the numerical rank.
PcaModel pca_fit(const EmbeddingSet& embeddings, std::size_t r_max = 128);
/// (x - mean) * components^T, N x rank row-major.
std::vector<double> pca_project(const PcaModel& model, std::span<const double> features);

std::array<std::uint8_t, 3> community_color(int label);

/// Each cell painted as a filled disc in its community color (outliers gray).
Image8 render_pseudo_label_map(const CommunityPartition& partition, std::span<const Point> coords, int width,
                               int height, int patch_size);

}  // namespace plexquery
