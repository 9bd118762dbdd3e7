#include "plexquery/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "plexquery/error.hpp"
#include "plexquery/parallel.hpp"

namespace plexquery {

namespace {

PatchSet gather(const PatchSet& patches, std::span<const std::size_t> indices) {
    PatchSet out;
    out.panel = patches.panel;
    out.patch_size = patches.patch_size;
    out.cells.reserve(indices.size());
    out.pixels.reserve(indices.size() * patches.patch_stride());
    for (std::size_t i : indices) {
        out.cells.push_back(patches.cells[i]);
        const auto p = patches.patch(i);
        out.pixels.insert(out.pixels.end(), p.begin(), p.end());
    }
    return out;
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) { return seed * 1000003ULL + epoch; }

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 2) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 2");
    if (!(lr >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lr must be >= 0");
    if (!(convergence >= 0.0)) throw Error(ErrorCode::InvalidArgument, "convergence must be >= 0");
    if (feature_dim == 0) throw Error(ErrorCode::InvalidArgument, "feature_dim must be positive");
    if (gate_kernel != 0 && gate_kernel % 2 == 0) throw Error(ErrorCode::InvalidArgument, "gate_kernel must be odd");
    graph.validate();
    loss.validate();
}

nlohmann::json to_json(const TrainConfig& cfg) {
    return {{"epochs_max", cfg.epochs_max},
            {"batch_size", cfg.batch_size},
            {"lr", cfg.lr},
            {"k", cfg.graph.k},
            {"sigma", cfg.graph.sigma},
            {"temperature", cfg.loss.temperature},
            {"margin", cfg.loss.margin},
            {"triplet_weight", cfg.loss.triplet_weight},
            {"momentum", cfg.loss.momentum},
            {"min_size", cfg.min_size},
            {"seed", cfg.seed},
            {"convergence", cfg.convergence},
            {"feature_dim", cfg.feature_dim},
            {"gate_kernel", cfg.gate_kernel}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, int patch_size) {
    TrainConfig cfg;
    cfg.graph = GraphConfig::for_patch_size(patch_size);
    try {
        cfg.epochs_max = j.value("epochs_max", cfg.epochs_max);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.lr = j.value("lr", cfg.lr);
        cfg.graph.k = j.value("k", cfg.graph.k);
        cfg.graph.sigma = j.value("sigma", cfg.graph.sigma);
        cfg.loss.temperature = j.value("temperature", cfg.loss.temperature);
        cfg.loss.margin = j.value("margin", cfg.loss.margin);
        cfg.loss.triplet_weight = j.value("triplet_weight", cfg.loss.triplet_weight);
        cfg.loss.momentum = j.value("momentum", cfg.loss.momentum);
        cfg.min_size = j.value("min_size", cfg.min_size);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.convergence = j.value("convergence", cfg.convergence);
        cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
        cfg.gate_kernel = j.value("gate_kernel", cfg.gate_kernel);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("training config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::vector<Point> patch_coords(const PatchSet& patches) {
    std::vector<Point> out;
    out.reserve(patches.size());
    for (const auto& c : patches.cells) out.push_back({c.x, c.y});
    return out;
}

PseudoLabels generate_pseudo_labels(const EncoderParams& params, const PatchSet& patches,
                                    std::span<const Point> coords, const TrainConfig& cfg, std::uint64_t seed) {
    PseudoLabels out;
    out.embeddings = forward(params, patches);
    out.graph = build_knn_graph(out.embeddings, coords, cfg.graph);
    out.partition = infomap(out.graph, {cfg.min_size, seed, InfomapOptions{}.trials});
    return out;
}

nlohmann::json to_json(const EpochRecord& r) {
    nlohmann::json j = {{"epoch", r.epoch},
                        {"loss", nullptr},
                        {"K", r.communities},
                        {"code_length", r.code_length},
                        {"outliers", r.outliers}};
    if (std::isfinite(r.loss)) j["loss"] = r.loss;
    return j;
}

TrainResult train_panel(const PatchSet& patches, std::span<const Point> coords, const TrainConfig& cfg,
                        const EpochCallback& on_epoch) {
    cfg.validate();
    if (patches.size() < 2 * cfg.batch_size) {
        warn("panel '" + patches.panel.name + "' has " + std::to_string(patches.size()) +
             " patches, fewer than two batches of " + std::to_string(cfg.batch_size));
    }
    const std::size_t kernel = cfg.gate_kernel != 0 ? cfg.gate_kernel : adaptive_gate_kernel(patches.channels());

    TrainResult result;
    result.initial_params = init_encoder(patches.channels(), patches.patch_size, cfg.feature_dim, kernel, cfg.seed);
    result.params = result.initial_params;

    auto record = [&](std::size_t epoch, double loss, PseudoLabels labels) {
        EpochRecord r{epoch, loss, labels.partition.community_count, labels.partition.code_length,
                      labels.partition.outlier_count()};
        result.log.push_back(r);
        result.code_lengths.push_back(r.code_length);
        result.history.push_back(labels.partition);
        if (on_epoch) on_epoch(r, labels);
        result.final_labels = std::move(labels);
    };

    record(0, std::numeric_limits<double>::quiet_NaN(),
           generate_pseudo_labels(result.params, patches, coords, cfg, epoch_seed(cfg.seed, 0)));

    std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66DULL);
    std::size_t plateau = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs_max; ++epoch) {
        const PseudoLabels& current = result.final_labels;
        const std::vector<int>& labels = current.partition.labels;
        if (current.partition.community_count == 0) {
            warn("no communities to train against; stopping");
            break;
        }
        MemoryDictionary memory = build_memory(current.embeddings, labels, current.partition.community_count);

        std::vector<std::size_t> order;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= 0) order.push_back(i);
        }
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start + 1 < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const PatchSet batch = gather(patches, idx);
            std::vector<int> batch_labels;
            batch_labels.reserve(idx.size());
            for (std::size_t i : idx) batch_labels.push_back(labels[i]);

            StepResult step = combined_step(result.params, batch, batch_labels, memory, cfg.loss, cfg.lr);
            momentum_update(memory, step.loss.embeddings.features, step.loss.labels, cfg.loss.momentum);
            result.params = std::move(step.params);
            loss_sum += step.loss.loss;
            ++batches;
        }
        const double epoch_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
        if (!std::isfinite(epoch_loss)) {
            throw Error(ErrorCode::NonFinite, "epoch " + std::to_string(epoch) + " loss is not finite");
        }

        const double previous = result.code_lengths.back();
        record(epoch, epoch_loss, generate_pseudo_labels(result.params, patches, coords, cfg, epoch_seed(cfg.seed, epoch)));
        const double change = std::abs(result.code_lengths.back() - previous) / std::max(previous, 1e-300);
        plateau = change < cfg.convergence ? plateau + 1 : 0;
        if (plateau >= 2) break;
    }
    return result;
}

PcaModel pca_fit(const EmbeddingSet& embeddings, std::size_t r_max) {
    const std::size_t n = embeddings.size();
    const std::size_t dim = embeddings.dim;
    if (n < 2) throw Error(ErrorCode::InvalidArgument, "PCA needs at least two samples");
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMatrix> x(embeddings.features.data(), static_cast<Eigen::Index>(n),
                                        static_cast<Eigen::Index>(dim));
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const RowMatrix centered = x.rowwise() - mean;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw Error(ErrorCode::DegenerateData, "eigendecomposition failed");

    const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
    const double top = values.size() > 0 ? values(values.size() - 1) : 0.0;
    std::size_t r = std::min({r_max, dim, n - 1});
    const double tol = std::max(top, 0.0) * 1e-10;
    std::size_t rank = 0;
    for (Eigen::Index i = values.size() - 1; i >= 0 && rank < r; --i) {
        if (values(i) <= tol || values(i) <= 0.0) break;
        ++rank;
    }
    if (rank == 0) throw Error(ErrorCode::DegenerateData, "embeddings have zero variance");
    if (rank < r) r = rank;

    PcaModel model;
    model.dim = dim;
    model.mean.assign(mean.data(), mean.data() + dim);
    model.components.resize(r * dim);
    for (std::size_t k = 0; k < r; ++k) {
        const Eigen::Index col = values.size() - 1 - static_cast<Eigen::Index>(k);
        Eigen::VectorXd v = solver.eigenvectors().col(col);
        Eigen::Index pivot = 0;
        v.cwiseAbs().maxCoeff(&pivot);
        if (v(pivot) < 0) v = -v;
        for (std::size_t j = 0; j < dim; ++j) model.components[k * dim + j] = v(static_cast<Eigen::Index>(j));
        model.explained_variance.push_back(values(col));
    }
    return model;
}

std::vector<double> pca_project(const PcaModel& model, std::span<const double> features) {
    if (model.dim == 0 || features.size() % model.dim != 0) {
        throw Error(ErrorCode::ShapeMismatch, "feature matrix does not match the PCA dimension");
    }
    const std::size_t n = features.size() / model.dim;
    const std::size_t r = model.rank();
    std::vector<double> out(n * r, 0.0);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        std::vector<double> centered(model.dim);
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = 0; j < model.dim; ++j) centered[j] = features[i * model.dim + j] - model.mean[j];
            for (std::size_t k = 0; k < r; ++k) {
                double s = 0.0;
                for (std::size_t j = 0; j < model.dim; ++j) s += centered[j] * model.components[k * model.dim + j];
                out[i * r + k] = s;
            }
        }
    });
    return out;
}

std::array<std::uint8_t, 3> community_color(int label) {
    if (label < 0) return {128, 128, 128};
    // Golden-angle hue walk with alternating value bands.
    const double hue = std::fmod(static_cast<double>(label) * 137.50776405, 360.0) / 60.0;
    const double sat = 0.85;
    const double val = label % 2 == 0 ? 0.95 : 0.75;
    const double chroma = val * sat;
    const double x = chroma * (1.0 - std::abs(std::fmod(hue, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hue)) {
        case 0: r = chroma; g = x; break;
        case 1: r = x; g = chroma; break;
        case 2: g = chroma; b = x; break;
        case 3: g = x; b = chroma; break;
        case 4: r = x; b = chroma; break;
        default: r = chroma; b = x; break;
    }
    const double m = val - chroma;
    auto to8 = [&](double c) { return static_cast<std::uint8_t>(std::lround((c + m) * 255.0)); };
    return {to8(r), to8(g), to8(b)};
}

Image8 render_pseudo_label_map(const CommunityPartition& partition, std::span<const Point> coords, int width,
                               int height, int patch_size) {
    if (coords.size() != partition.labels.size()) throw Error(ErrorCode::ShapeMismatch, "coords vs labels");
    Image8 img;
    img.width = width;
    img.height = height;
    img.channels = 3;
    img.pixels.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3, 0);
    const int radius = patch_size < 100 ? patch_size / 2 : 8;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const auto color = community_color(partition.labels[i]);
        const int cx = static_cast<int>(std::lround(coords[i].x));
        const int cy = static_cast<int>(std::lround(coords[i].y));
        for (int y = std::max(0, cy - radius); y <= std::min(height - 1, cy + radius); ++y) {
            for (int x = std::max(0, cx - radius); x <= std::min(width - 1, cx + radius); ++x) {
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > radius * radius) continue;
                std::uint8_t* px = img.pixels.data() +
                                   (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                                    static_cast<std::size_t>(x)) * 3;
                px[0] = color[0];
                px[1] = color[1];
                px[2] = color[2];
            }
        }
    }
    return img;
}

}  // namespace plexquery
