#include "plexquery/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "plexquery/error.hpp"
#include "plexquery/parallel.hpp"

namespace plexquery {

namespace {

// Four interleaved partial sums; the product order is symmetric in (a, b), so
// dot4(a, b) == dot4(b, a) bit for bit.
double dot4(const double* a, const double* b, std::size_t n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    for (; k < n; ++k) s0 += a[k] * b[k];
    return (s0 + s1) + (s2 + s3);
}

double spatial_decay(Point a, Point b, double sigma) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::exp(-std::sqrt(dx * dx + dy * dy) / sigma);
}

}  // namespace

std::vector<std::vector<std::pair<std::size_t, double>>> PatchGraph::adjacency() const {
    std::vector<std::vector<std::pair<std::size_t, double>>> adj(node_count());
    for (const auto& e : edges) {
        adj[e.i].emplace_back(e.j, e.weight);
        adj[e.j].emplace_back(e.i, e.weight);
    }
    for (auto& list : adj) std::sort(list.begin(), list.end());
    return adj;
}

std::vector<double> PatchGraph::strengths() const {
    std::vector<double> s(node_count(), 0.0);
    for (const auto& e : edges) {
        s[e.i] += e.weight;
        s[e.j] += e.weight;
    }
    return s;
}

double PatchGraph::total_weight() const {
    double w = 0.0;
    for (const auto& e : edges) w += e.weight;
    return w;
}

void GraphConfig::validate() const {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be > 0");
}

std::optional<double> proximity(std::span<const double> a, std::span<const double> b, Point pa, Point pb,
                                double sigma) {
    if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be > 0");
    if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "embedding lengths differ");
    const double na = std::sqrt(dot4(a.data(), a.data(), a.size()));
    const double nb = std::sqrt(dot4(b.data(), b.data(), b.size()));
    if (na == 0.0 || nb == 0.0) return std::nullopt;
    const double cosine = dot4(a.data(), b.data(), a.size()) / (na * nb);
    if (cosine <= 0.0) return std::nullopt;
    return cosine * spatial_decay(pa, pb, sigma);
}

PatchGraph build_knn_graph(const EmbeddingSet& embeddings, std::span<const Point> coords, const GraphConfig& cfg) {
    cfg.validate();
    const std::size_t n = embeddings.size();
    if (n < 2) throw Error(ErrorCode::InvalidArgument, "a kNN graph needs at least two nodes");
    if (coords.size() != n) throw Error(ErrorCode::ShapeMismatch, "coordinates vs embeddings");
    const std::size_t dim = embeddings.dim;
    const double* data = embeddings.features.data();

    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = std::sqrt(dot4(data + i * dim, data + i * dim, dim));

    const std::size_t k = std::min(cfg.k, n - 1);
    std::vector<std::vector<std::pair<double, std::size_t>>> chosen(n);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        std::vector<std::pair<double, std::size_t>> cand;
        cand.reserve(n);
        for (std::size_t i = begin; i < end; ++i) {
            cand.clear();
            if (norms[i] == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i || norms[j] == 0.0) continue;
                const double cosine = dot4(data + i * dim, data + j * dim, dim) / (norms[i] * norms[j]);
                if (cosine <= 0.0) continue;
                cand.emplace_back(cosine * spatial_decay(coords[i], coords[j], cfg.sigma), j);
            }
            const auto by_score = [](const auto& a, const auto& b) {
                return a.first != b.first ? a.first > b.first : a.second < b.second;
            };
            const std::size_t keep = std::min(k, cand.size());
            std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(), by_score);
            chosen[i].assign(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep));
        }
    });

    std::map<std::pair<std::size_t, std::size_t>, double> unique;
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& [w, j] : chosen[i]) unique.emplace(std::minmax(i, j), w);
    }
    PatchGraph g;
    g.node_ids = embeddings.cell_ids;
    g.coords.assign(coords.begin(), coords.end());
    g.edges.reserve(unique.size());
    for (const auto& [key, w] : unique) g.edges.push_back({key.first, key.second, w});

    std::size_t isolated = 0;
    for (double s : g.strengths()) isolated += s == 0.0 ? 1 : 0;
    if (isolated > 0) {
        warn(std::to_string(isolated) + " node(s) have no positive-weight neighbor and stay isolated");
    }
    return g;
}

PatchGraph fuse_graphs(std::span<const PatchGraph> graphs) {
    if (graphs.empty()) throw Error(ErrorCode::InvalidArgument, "no graphs to fuse");
    const PatchGraph& base = graphs.front();
    std::map<std::int64_t, std::size_t> index;
    for (std::size_t i = 0; i < base.node_count(); ++i) index[base.node_ids[i]] = i;
    if (index.size() != base.node_count()) throw Error(ErrorCode::NodeSetMismatch, "duplicate node ids");

    std::map<std::pair<std::size_t, std::size_t>, std::pair<double, std::size_t>> acc;
    for (const auto& e : base.edges) acc[{e.i, e.j}] = {e.weight, 1};
    for (std::size_t g = 1; g < graphs.size(); ++g) {
        const PatchGraph& other = graphs[g];
        if (other.node_count() != base.node_count()) throw Error(ErrorCode::NodeSetMismatch, "node counts differ");
        std::vector<std::size_t> remap(other.node_count());
        for (std::size_t i = 0; i < other.node_count(); ++i) {
            const auto it = index.find(other.node_ids[i]);
            if (it == index.end()) throw Error(ErrorCode::NodeSetMismatch, "node sets differ");
            remap[i] = it->second;
        }
        for (const auto& e : other.edges) {
            const auto it = acc.find(std::minmax(remap[e.i], remap[e.j]));
            if (it == acc.end() || it->second.second != g) continue;
            it->second.first += e.weight;
            it->second.second = g + 1;
        }
    }

    PatchGraph fused;
    fused.node_ids = base.node_ids;
    fused.coords = base.coords;
    for (const auto& [key, value] : acc) {
        if (value.second != graphs.size()) continue;
        fused.edges.push_back({key.first, key.second, value.first / static_cast<double>(graphs.size())});
    }
    return fused;
}

void save_edge_list(const PatchGraph& graph, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.precision(17);
    out << "i,j,weight\n";
    for (const auto& e : graph.edges) out << graph.node_ids[e.i] << ',' << graph.node_ids[e.j] << ',' << e.weight << '\n';
}

}  // namespace plexquery
