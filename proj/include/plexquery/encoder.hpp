#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plexquery/ingest.hpp"

namespace plexquery {

/// Community label of a sample that belongs to no retained community.
inline constexpr int kOutlier = -1;

/// Per-panel patch encoder: one linear projection shared by every channel,
/// a 1-D convolutional channel gate over per-channel mean intensities, then
/// concatenation and L2 normalization. Output dimension is feature_dim * channels.
struct EncoderParams {
    std::size_t channels = 0;
    int patch_size = 0;
    std::size_t feature_dim = 64;
    std::vector<double> weight;       // feature_dim x patch_size^2
    std::vector<double> bias;         // feature_dim
    std::vector<double> gate_kernel;  // odd length

    std::size_t pixels() const {
        return static_cast<std::size_t>(patch_size) * static_cast<std::size_t>(patch_size);
    }
    std::size_t output_dim() const { return feature_dim * channels; }
    std::size_t parameter_count() const { return weight.size() + bias.size() + gate_kernel.size(); }
};

/// Kernel size rule of efficient channel attention: |(log2 C + 1) / 2| rounded up to odd.
std::size_t adaptive_gate_kernel(std::size_t channels);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization, seeded.
EncoderParams init_encoder(std::size_t channels, int patch_size, std::size_t feature_dim, std::size_t gate_kernel,
                           std::uint64_t seed);

struct EmbeddingSet {
    std::string panel;
    std::size_t dim = 0;
    std::vector<std::int64_t> cell_ids;
    std::vector<double> features;  // size() x dim, unit rows

    std::size_t size() const { return cell_ids.size(); }
    std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
};

/// gate_c = sigmoid(sum_j w_j * mean_{c+j}), zero padded at both ends.
std::vector<double> eca_gate(const EncoderParams& params, std::span<const double> channel_means);

EmbeddingSet forward(const EncoderParams& params, const PatchSet& patches);

/// Cluster centroids used as the contrastive memory; rows stay unit length.
struct MemoryDictionary {
    std::size_t dim = 0;
    std::vector<double> centroids;  // count() x dim
    std::vector<std::size_t> sizes;

    std::size_t count() const { return sizes.size(); }
    std::span<const double> centroid(std::size_t k) const { return {centroids.data() + k * dim, dim}; }
};

/// Normalized mean feature per label 0..cluster_count-1; outliers ignored.
MemoryDictionary build_memory(const EmbeddingSet& embeddings, std::span<const int> labels, std::size_t cluster_count);

struct LossConfig {
    double temperature = 0.05;
    double margin = 0.3;
    double triplet_weight = 1.0;
    double momentum = 0.2;

    void validate() const;
};

struct LossGradient {
    double loss = 0.0;
    std::vector<double> grad;
};

/// -log softmax of q . c_label / tau over all centroids, stabilized by the max logit.
LossGradient cluster_nce_loss(std::span<const double> q, int label, const MemoryDictionary& memory,
                              double temperature);

struct TripletResult {
    double loss = 0.0;
    std::vector<double> grad;  // same layout as the features
    std::size_t anchors = 0;
};

/// Batch-hard triplet loss: for every anchor the farthest same-label sample and
/// the nearest other-label sample (Euclidean), hinge with `margin`, averaged
/// over valid anchors. Samples labelled kOutlier take no part.
TripletResult triplet_loss(std::span<const double> features, std::size_t dim, std::span<const int> labels,
                           double margin);

/// Gradient with the same layout as EncoderParams.
struct EncoderGradient {
    std::vector<double> weight;
    std::vector<double> bias;
    std::vector<double> gate_kernel;
};

struct CombinedLoss {
    double loss = 0.0;
    double contrastive = 0.0;
    double triplet = 0.0;
    EncoderGradient grad;
    EmbeddingSet embeddings;  // features of the labelled samples, before the update
    std::vector<int> labels;  // labels matching `embeddings`
};

/// Mean cluster-NCE plus weighted triplet loss over the labelled samples of a
/// batch, with the exact gradient. Batches without a valid triplet contribute
/// no triplet term.
CombinedLoss combined_loss(const EncoderParams& params, const PatchSet& batch, std::span<const int> labels,
                           const MemoryDictionary& memory, const LossConfig& cfg);

struct StepResult {
    EncoderParams params;
    CombinedLoss loss;
};

/// One plain gradient-descent step.
StepResult combined_step(const EncoderParams& params, const PatchSet& batch, std::span<const int> labels,
                         const MemoryDictionary& memory, const LossConfig& cfg, double lr);

/// c_k <- (1 - mu) c_k + mu * mean(batch features of k), then renormalized.
/// Clusters absent from the batch are untouched.
void momentum_update(MemoryDictionary& memory, std::span<const double> features, std::span<const int> labels,
                     double momentum);

/// Binary checkpoint plus `<path>.json` sidecar carrying `metadata` and dims.
void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object());
EncoderParams load_checkpoint(const std::filesystem::path& path);

}  // namespace plexquery
