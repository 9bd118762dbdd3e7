#include "plexquery/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "plexquery/container.hpp"
#include "plexquery/error.hpp"
#include "plexquery/parallel.hpp"

namespace plexquery {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double gate_preactivation(std::span<const double> kernel, std::span<const double> means, std::size_t c) {
    const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    const auto count = static_cast<std::ptrdiff_t>(means.size());
    double pre = 0.0;
    for (std::ptrdiff_t j = -radius; j <= radius; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(c) + j;
        if (src < 0 || src >= count) continue;
        pre += kernel[static_cast<std::size_t>(j + radius)] * means[static_cast<std::size_t>(src)];
    }
    return pre;
}

void check_shape(const EncoderParams& p, const PatchSet& patches) {
    if (patches.channels() != p.channels || patches.patch_size != p.patch_size) {
        throw Error(ErrorCode::ShapeMismatch, "encoder expects " + std::to_string(p.channels) + " channels of " +
                                                  std::to_string(p.patch_size) + "px, got " +
                                                  std::to_string(patches.channels()) + " of " +
                                                  std::to_string(patches.patch_size) + "px");
    }
    if (p.weight.size() != p.feature_dim * p.pixels() || p.bias.size() != p.feature_dim ||
        p.gate_kernel.size() % 2 == 0) {
        throw Error(ErrorCode::ShapeMismatch, "encoder parameter arrays are inconsistent");
    }
}

/// Intermediate values of a batch forward pass, kept for backpropagation.
struct ForwardCache {
    std::size_t samples = 0;
    RowMatrix hidden;            // (samples * channels) x feature_dim, before gating
    std::vector<double> means;   // samples x channels
    std::vector<double> gates;   // samples x channels
    std::vector<double> norms;   // samples
    std::vector<double> output;  // samples x output_dim
};

ForwardCache run_forward(const EncoderParams& p, const PatchSet& patches) {
    check_shape(p, patches);
    const std::size_t n = patches.size();
    const std::size_t c = p.channels;
    const std::size_t d = p.feature_dim;
    const std::size_t px = p.pixels();
    const std::size_t dim = p.output_dim();

    ForwardCache cache;
    cache.samples = n;
    cache.hidden.resize(static_cast<Eigen::Index>(n * c), static_cast<Eigen::Index>(d));
    cache.means.resize(n * c);
    cache.gates.resize(n * c);
    cache.norms.resize(n);
    cache.output.resize(n * dim);

    const ConstRowMap weight(p.weight.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(px));
    const Eigen::Map<const Eigen::RowVectorXd> bias(p.bias.data(), static_cast<Eigen::Index>(d));

    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        const auto rows = static_cast<Eigen::Index>((end - begin) * c);
        const auto first = static_cast<Eigen::Index>(begin * c);
        const ConstRowMap x(patches.pixels.data() + begin * c * px, rows, static_cast<Eigen::Index>(px));
        cache.hidden.middleRows(first, rows).noalias() = x * weight.transpose();
        cache.hidden.middleRows(first, rows).rowwise() += bias;
        const Eigen::VectorXd row_means = x.rowwise().mean();
        for (std::size_t s = begin; s < end; ++s) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                cache.means[s * c + ch] = row_means(static_cast<Eigen::Index>((s - begin) * c + ch));
            }
            const std::span<const double> m(cache.means.data() + s * c, c);
            for (std::size_t ch = 0; ch < c; ++ch) {
                cache.gates[s * c + ch] = sigmoid(gate_preactivation(p.gate_kernel, m, ch));
            }
            double* out = cache.output.data() + s * dim;
            double sq = 0.0;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double g = cache.gates[s * c + ch];
                for (std::size_t k = 0; k < d; ++k) {
                    const double z = g * cache.hidden(static_cast<Eigen::Index>(s * c + ch), static_cast<Eigen::Index>(k));
                    out[ch * d + k] = z;
                    sq += z * z;
                }
            }
            const double norm = std::sqrt(sq);
            cache.norms[s] = norm;
            if (norm > 0.0) {
                for (std::size_t k = 0; k < dim; ++k) out[k] /= norm;
            }
        }
    });
    return cache;
}

/// Backpropagates dL/d(output) through normalization, concatenation, gate and projection.
EncoderGradient run_backward(const EncoderParams& p, const PatchSet& patches, const ForwardCache& cache,
                             std::span<const double> grad_output) {
    const std::size_t n = cache.samples;
    const std::size_t c = p.channels;
    const std::size_t d = p.feature_dim;
    const std::size_t dim = p.output_dim();
    const auto radius = static_cast<std::ptrdiff_t>(p.gate_kernel.size() / 2);

    RowMatrix grad_hidden = RowMatrix::Zero(static_cast<Eigen::Index>(n * c), static_cast<Eigen::Index>(d));
    EncoderGradient g;
    g.gate_kernel.assign(p.gate_kernel.size(), 0.0);
    std::vector<double> gz(dim);
    for (std::size_t s = 0; s < n; ++s) {
        if (cache.norms[s] == 0.0) continue;
        const std::span<const double> e(cache.output.data() + s * dim, dim);
        const std::span<const double> ge(grad_output.data() + s * dim, dim);
        const double proj = dot(e, ge);
        for (std::size_t k = 0; k < dim; ++k) gz[k] = (ge[k] - e[k] * proj) / cache.norms[s];
        for (std::size_t ch = 0; ch < c; ++ch) {
            const auto row = static_cast<Eigen::Index>(s * c + ch);
            const double gate = cache.gates[s * c + ch];
            double grad_gate = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                grad_hidden(row, static_cast<Eigen::Index>(k)) = gate * gz[ch * d + k];
                grad_gate += cache.hidden(row, static_cast<Eigen::Index>(k)) * gz[ch * d + k];
            }
            const double grad_pre = grad_gate * gate * (1.0 - gate);
            for (std::ptrdiff_t j = -radius; j <= radius; ++j) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(ch) + j;
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(c)) continue;
                g.gate_kernel[static_cast<std::size_t>(j + radius)] +=
                    grad_pre * cache.means[s * c + static_cast<std::size_t>(src)];
            }
        }
    }
    const ConstRowMap x(patches.pixels.data(), static_cast<Eigen::Index>(n * c),
                        static_cast<Eigen::Index>(p.pixels()));
    const RowMatrix grad_weight = grad_hidden.transpose() * x;
    g.weight.assign(grad_weight.data(), grad_weight.data() + grad_weight.size());
    const Eigen::RowVectorXd grad_bias = grad_hidden.colwise().sum();
    g.bias.assign(grad_bias.data(), grad_bias.data() + grad_bias.size());
    return g;
}

PatchSet select_patches(const PatchSet& batch, const std::vector<std::size_t>& keep) {
    PatchSet out;
    out.panel = batch.panel;
    out.patch_size = batch.patch_size;
    out.pixels.reserve(keep.size() * batch.patch_stride());
    for (std::size_t i : keep) {
        out.cells.push_back(batch.cells[i]);
        const auto patch = batch.patch(i);
        out.pixels.insert(out.pixels.end(), patch.begin(), patch.end());
    }
    return out;
}

}  // namespace

std::size_t adaptive_gate_kernel(std::size_t channels) {
    const double t = std::abs((std::log2(static_cast<double>(std::max<std::size_t>(1, channels))) + 1.0) / 2.0);
    const auto k = static_cast<std::size_t>(t);
    return k % 2 == 1 ? k : k + 1;
}

EncoderParams init_encoder(std::size_t channels, int patch_size, std::size_t feature_dim, std::size_t gate_kernel,
                           std::uint64_t seed) {
    if (channels == 0 || patch_size < 1 || feature_dim == 0) {
        throw Error(ErrorCode::InvalidArgument, "encoder dimensions must be positive");
    }
    if (gate_kernel % 2 == 0) throw Error(ErrorCode::InvalidArgument, "gate kernel size must be odd");
    EncoderParams p;
    p.channels = channels;
    p.patch_size = patch_size;
    p.feature_dim = feature_dim;
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.pixels()));
    std::uniform_real_distribution<double> proj(-bound, bound);
    p.weight.resize(feature_dim * p.pixels());
    for (auto& w : p.weight) w = proj(rng);
    p.bias.resize(feature_dim);
    for (auto& b : p.bias) b = proj(rng);
    const double gate_bound = 1.0 / std::sqrt(static_cast<double>(gate_kernel));
    std::uniform_real_distribution<double> gate(-gate_bound, gate_bound);
    p.gate_kernel.resize(gate_kernel);
    for (auto& w : p.gate_kernel) w = gate(rng);
    return p;
}

std::vector<double> eca_gate(const EncoderParams& params, std::span<const double> channel_means) {
    std::vector<double> gates(channel_means.size());
    for (std::size_t c = 0; c < gates.size(); ++c) {
        gates[c] = sigmoid(gate_preactivation(params.gate_kernel, channel_means, c));
    }
    return gates;
}

EmbeddingSet forward(const EncoderParams& params, const PatchSet& patches) {
    ForwardCache cache = run_forward(params, patches);
    EmbeddingSet out;
    out.panel = patches.panel.name;
    out.dim = params.output_dim();
    out.features = std::move(cache.output);
    out.cell_ids.reserve(patches.size());
    for (const auto& cell : patches.cells) out.cell_ids.push_back(cell.cell_id);
    return out;
}

MemoryDictionary build_memory(const EmbeddingSet& embeddings, std::span<const int> labels, std::size_t cluster_count) {
    if (labels.size() != embeddings.size()) throw Error(ErrorCode::ShapeMismatch, "labels vs embeddings");
    MemoryDictionary m;
    m.dim = embeddings.dim;
    m.centroids.assign(cluster_count * m.dim, 0.0);
    m.sizes.assign(cluster_count, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) continue;
        const auto k = static_cast<std::size_t>(labels[i]);
        if (k >= cluster_count) throw Error(ErrorCode::InvalidArgument, "label exceeds cluster count");
        ++m.sizes[k];
        const auto row = embeddings.row(i);
        for (std::size_t j = 0; j < m.dim; ++j) m.centroids[k * m.dim + j] += row[j];
    }
    for (std::size_t k = 0; k < cluster_count; ++k) {
        double* c = m.centroids.data() + k * m.dim;
        double norm = 0.0;
        for (std::size_t j = 0; j < m.dim; ++j) norm += c[j] * c[j];
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (std::size_t j = 0; j < m.dim; ++j) c[j] /= norm;
        }
    }
    return m;
}

void LossConfig::validate() const {
    if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
    if (!(margin >= 0.0)) throw Error(ErrorCode::InvalidArgument, "margin must be >= 0");
    if (!(triplet_weight >= 0.0)) throw Error(ErrorCode::InvalidArgument, "triplet weight must be >= 0");
    if (!(momentum >= 0.0 && momentum <= 1.0)) throw Error(ErrorCode::InvalidArgument, "momentum must lie in [0,1]");
}

LossGradient cluster_nce_loss(std::span<const double> q, int label, const MemoryDictionary& memory,
                              double temperature) {
    if (label < 0) throw Error(ErrorCode::UnlabeledSample, "outlier samples carry no contrastive target");
    if (static_cast<std::size_t>(label) >= memory.count()) {
        throw Error(ErrorCode::InvalidArgument, "label " + std::to_string(label) + " outside the memory dictionary");
    }
    if (q.size() != memory.dim) throw Error(ErrorCode::ShapeMismatch, "query dimension differs from memory");
    const std::size_t k_count = memory.count();
    std::vector<double> logits(k_count);
    for (std::size_t k = 0; k < k_count; ++k) logits[k] = dot(q, memory.centroid(k)) / temperature;
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - top);
    const double log_sum = top + std::log(sum);

    LossGradient out;
    out.loss = std::max(0.0, log_sum - logits[static_cast<std::size_t>(label)]);
    out.grad.assign(q.size(), 0.0);
    for (std::size_t k = 0; k < k_count; ++k) {
        const double coeff =
            (std::exp(logits[k] - log_sum) - (k == static_cast<std::size_t>(label) ? 1.0 : 0.0)) / temperature;
        const auto c = memory.centroid(k);
        for (std::size_t j = 0; j < q.size(); ++j) out.grad[j] += coeff * c[j];
    }
    return out;
}

TripletResult triplet_loss(std::span<const double> features, std::size_t dim, std::span<const int> labels,
                           double margin) {
    const std::size_t n = labels.size();
    if (features.size() != n * dim) throw Error(ErrorCode::ShapeMismatch, "features vs labels");
    auto distance = [&](std::size_t a, std::size_t b) {
        double s = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double diff = features[a * dim + j] - features[b * dim + j];
            s += diff * diff;
        }
        return std::sqrt(s);
    };

    TripletResult out;
    out.grad.assign(features.size(), 0.0);
    struct Active {
        std::size_t a, p, n;
        double dp, dn;
    };
    std::vector<Active> active;
    double total = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        if (labels[a] < 0) continue;
        std::size_t best_p = n, best_n = n;
        double dp = -1.0;
        double dn = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == a || labels[j] < 0) continue;
            const double dist = distance(a, j);
            if (labels[j] == labels[a]) {
                if (dist > dp) {
                    dp = dist;
                    best_p = j;
                }
            } else if (dist < dn) {
                dn = dist;
                best_n = j;
            }
        }
        if (best_p == n || best_n == n) continue;
        ++out.anchors;
        const double hinge = dp - dn + margin;
        if (hinge > 0.0) {
            total += hinge;
            active.push_back({a, best_p, best_n, dp, dn});
        }
    }
    if (out.anchors == 0) throw Error(ErrorCode::NoValidTriplet, "batch has no anchor with a positive and a negative");
    out.loss = total / static_cast<double>(out.anchors);
    const double scale = 1.0 / static_cast<double>(out.anchors);
    for (const auto& t : active) {
        for (std::size_t j = 0; j < dim; ++j) {
            if (t.dp > 0.0) {
                const double u = scale * (features[t.a * dim + j] - features[t.p * dim + j]) / t.dp;
                out.grad[t.a * dim + j] += u;
                out.grad[t.p * dim + j] -= u;
            }
            if (t.dn > 0.0) {
                const double v = scale * (features[t.a * dim + j] - features[t.n * dim + j]) / t.dn;
                out.grad[t.a * dim + j] -= v;
                out.grad[t.n * dim + j] += v;
            }
        }
    }
    return out;
}

CombinedLoss combined_loss(const EncoderParams& params, const PatchSet& batch, std::span<const int> labels,
                           const MemoryDictionary& memory, const LossConfig& cfg) {
    cfg.validate();
    if (labels.size() != batch.size()) throw Error(ErrorCode::ShapeMismatch, "labels vs batch");
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= 0) keep.push_back(i);
    }
    CombinedLoss out;
    out.grad.weight.assign(params.weight.size(), 0.0);
    out.grad.bias.assign(params.bias.size(), 0.0);
    out.grad.gate_kernel.assign(params.gate_kernel.size(), 0.0);
    out.embeddings.panel = batch.panel.name;
    out.embeddings.dim = params.output_dim();
    if (keep.empty()) return out;

    const PatchSet labelled = keep.size() == batch.size() ? batch : select_patches(batch, keep);
    for (std::size_t i : keep) out.labels.push_back(labels[i]);
    const ForwardCache cache = run_forward(params, labelled);
    const std::size_t dim = params.output_dim();
    const std::size_t n = keep.size();

    std::vector<double> grad_output(n * dim, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        const std::span<const double> q(cache.output.data() + s * dim, dim);
        const LossGradient nce = cluster_nce_loss(q, out.labels[s], memory, cfg.temperature);
        out.contrastive += nce.loss / static_cast<double>(n);
        for (std::size_t j = 0; j < dim; ++j) grad_output[s * dim + j] += nce.grad[j] / static_cast<double>(n);
    }
    if (cfg.triplet_weight > 0.0) {
        try {
            const TripletResult t = triplet_loss(cache.output, dim, out.labels, cfg.margin);
            out.triplet = t.loss;
            for (std::size_t j = 0; j < grad_output.size(); ++j) grad_output[j] += cfg.triplet_weight * t.grad[j];
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoValidTriplet) throw;
        }
    }
    out.loss = out.contrastive + cfg.triplet_weight * out.triplet;
    out.grad = run_backward(params, labelled, cache, grad_output);
    out.embeddings.features = cache.output;
    for (const auto& cell : labelled.cells) out.embeddings.cell_ids.push_back(cell.cell_id);
    return out;
}

StepResult combined_step(const EncoderParams& params, const PatchSet& batch, std::span<const int> labels,
                         const MemoryDictionary& memory, const LossConfig& cfg, double lr) {
    StepResult out{params, combined_loss(params, batch, labels, memory, cfg)};
    if (!std::isfinite(out.loss.loss)) throw Error(ErrorCode::NonFinite, "loss is not finite");
    if (lr == 0.0) return out;
    for (std::size_t i = 0; i < out.params.weight.size(); ++i) out.params.weight[i] -= lr * out.loss.grad.weight[i];
    for (std::size_t i = 0; i < out.params.bias.size(); ++i) out.params.bias[i] -= lr * out.loss.grad.bias[i];
    for (std::size_t i = 0; i < out.params.gate_kernel.size(); ++i) {
        out.params.gate_kernel[i] -= lr * out.loss.grad.gate_kernel[i];
    }
    return out;
}

void momentum_update(MemoryDictionary& memory, std::span<const double> features, std::span<const int> labels,
                     double momentum) {
    if (!(momentum >= 0.0 && momentum <= 1.0)) throw Error(ErrorCode::InvalidArgument, "momentum must lie in [0,1]");
    if (features.size() != labels.size() * memory.dim) throw Error(ErrorCode::ShapeMismatch, "features vs labels");
    if (momentum == 0.0) return;
    const std::size_t dim = memory.dim;
    std::vector<double> sums(memory.count() * dim, 0.0);
    std::vector<std::size_t> counts(memory.count(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= memory.count()) continue;
        const auto k = static_cast<std::size_t>(labels[i]);
        ++counts[k];
        for (std::size_t j = 0; j < dim; ++j) sums[k * dim + j] += features[i * dim + j];
    }
    std::vector<double> mixed(dim);
    for (std::size_t k = 0; k < memory.count(); ++k) {
        if (counts[k] == 0) continue;
        double* c = memory.centroids.data() + k * dim;
        double norm = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            mixed[j] = (1.0 - momentum) * c[j] + momentum * (sums[k * dim + j] / static_cast<double>(counts[k]));
            norm += mixed[j] * mixed[j];
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        for (std::size_t j = 0; j < dim; ++j) c[j] = mixed[j] / norm;
    }
}

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path, const nlohmann::json& metadata) {
    Container c;
    c.kind = ContainerKind::EncoderCheckpoint;
    c.put("dims", 1, 4,
          {static_cast<double>(params.channels), static_cast<double>(params.patch_size),
           static_cast<double>(params.feature_dim), static_cast<double>(params.gate_kernel.size())});
    c.put("weight", params.feature_dim, params.pixels(), params.weight);
    c.put("bias", 1, params.feature_dim, params.bias);
    c.put("gate_kernel", 1, params.gate_kernel.size(), params.gate_kernel);
    write_container(c, path);

    nlohmann::json meta = metadata;
    meta["format_version"] = kContainerVersion;
    meta["channels"] = params.channels;
    meta["patch_size"] = params.patch_size;
    meta["feature_dim"] = params.feature_dim;
    meta["gate_kernel"] = params.gate_kernel.size();
    meta["output_dim"] = params.output_dim();
    std::ofstream side(path.string() + ".json");
    if (!side) throw Error(ErrorCode::IoError, "cannot write checkpoint metadata");
    side << meta.dump(2) << '\n';
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
    const Container c = read_container(path, ContainerKind::EncoderCheckpoint);
    const auto& dims = c.get("dims", 1, 4).data;
    EncoderParams p;
    p.channels = static_cast<std::size_t>(dims[0]);
    p.patch_size = static_cast<int>(dims[1]);
    p.feature_dim = static_cast<std::size_t>(dims[2]);
    const auto kernel = static_cast<std::size_t>(dims[3]);
    p.weight = c.get("weight", p.feature_dim, p.pixels()).data;
    p.bias = c.get("bias", 1, p.feature_dim).data;
    p.gate_kernel = c.get("gate_kernel", 1, kernel).data;
    return p;
}

}  // namespace plexquery
