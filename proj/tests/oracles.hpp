#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance suite. Each one is written from the definition, not from the
// library code, and favours clarity over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "plexquery/community.hpp"
#include "plexquery/encoder.hpp"
#include "plexquery/graph.hpp"

namespace oracle {

using plexquery::Edge;
using plexquery::PatchGraph;

inline PatchGraph make_graph(std::size_t n, std::vector<Edge> edges) {
    PatchGraph g;
    for (std::size_t i = 0; i < n; ++i) {
        g.node_ids.push_back(static_cast<std::int64_t>(i));
        g.coords.push_back({static_cast<double>(i), 0.0});
    }
    for (auto& e : edges) {
        if (e.i > e.j) std::swap(e.i, e.j);
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
    g.edges = std::move(edges);
    return g;
}

/// Two unit triangles {0,1,2} and {3,4,5}, optionally joined by edge 2-3.
inline PatchGraph triangles(bool bridge) {
    std::vector<Edge> e{{0, 1, 1}, {0, 2, 1}, {1, 2, 1}, {3, 4, 1}, {3, 5, 1}, {4, 5, 1}};
    if (bridge) e.push_back({2, 3, 1});
    return make_graph(6, e);
}

/// Random connected weighted graph: a random spanning tree plus extra edges.
inline PatchGraph random_connected(std::size_t n, double extra_p, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> w(0.1, 2.0), u(0.0, 1.0);
    std::set<std::pair<std::size_t, std::size_t>> used;
    std::vector<Edge> edges;
    for (std::size_t v = 1; v < n; ++v) {
        const std::size_t parent = rng() % v;
        used.insert({parent, v});
        edges.push_back({parent, v, w(rng)});
    }
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            if (!used.count({a, b}) && u(rng) < extra_p) edges.push_back({a, b, w(rng)});
        }
    }
    return make_graph(n, edges);
}

/// Two cliques of sizes a and b (unit weight) joined by one bridge of weight w.
inline PatchGraph two_cliques(std::size_t a, std::size_t b, double bridge) {
    std::vector<Edge> e;
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = i + 1; j < a; ++j) e.push_back({i, j, 1.0});
    for (std::size_t i = a; i < a + b; ++i)
        for (std::size_t j = i + 1; j < a + b; ++j) e.push_back({i, j, 1.0});
    e.push_back({a - 1, a, bridge});
    return make_graph(a + b, e);
}

inline double entropy_bits(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) return 0.0;
    double h = 0.0;
    for (double w : weights) {
        if (w > 0.0) h -= (w / total) * std::log2(w / total);
    }
    return h;
}

/// Map equation in its entropy form: L = q H(Q) + sum_i p_i H(P_i), with the
/// flow terms summed edge by edge from the adjacency.
inline double map_equation(const PatchGraph& g, const std::vector<int>& modules) {
    std::map<int, std::vector<std::size_t>> members;
    int next = 1 << 20;
    std::vector<int> m = modules;
    for (auto& x : m) {
        if (x < 0) x = next++;
    }
    for (std::size_t v = 0; v < m.size(); ++v) members[m[v]].push_back(v);
    double two_w = 0.0;
    std::vector<double> strength(m.size(), 0.0);
    for (const auto& e : g.edges) {
        strength[e.i] += e.weight;
        strength[e.j] += e.weight;
        two_w += 2.0 * e.weight;
    }
    std::map<int, double> exit;
    for (const auto& e : g.edges) {
        if (m[e.i] != m[e.j]) {
            exit[m[e.i]] += e.weight / two_w;
            exit[m[e.j]] += e.weight / two_w;
        }
    }
    std::vector<double> qs;
    double q = 0.0;
    for (const auto& [id, list] : members) {
        qs.push_back(exit[id]);
        q += exit[id];
    }
    double L = q * entropy_bits(qs);
    for (const auto& [id, list] : members) {
        std::vector<double> terms{exit[id]};
        double p_circ = exit[id];
        for (auto v : list) {
            terms.push_back(strength[v] / two_w);
            p_circ += strength[v] / two_w;
        }
        L += p_circ * entropy_bits(terms);
    }
    return L;
}

/// Minimum of the oracle map equation over all set partitions (recursive
/// assignment of each node to an existing block or a new one).
inline std::pair<double, std::vector<int>> best_partition(const PatchGraph& g) {
    const std::size_t n = g.node_count();
    std::vector<int> cur(n, 0), best;
    double best_l = INFINITY;
    std::function<void(std::size_t, int)> rec = [&](std::size_t v, int blocks) {
        if (v == n) {
            const double l = map_equation(g, cur);
            if (l < best_l - 1e-12) {
                best_l = l;
                best = cur;
            }
            return;
        }
        for (int b = 0; b <= blocks; ++b) {
            cur[v] = b;
            rec(v + 1, std::max(blocks, b + 1));
        }
    };
    rec(0, 0);
    return {best_l, best};
}

/// True when two labelings describe the same grouping.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
            if ((a[i] == a[j]) != (b[i] == b[j])) return false;
    return true;
}

/// Central finite-difference derivative of f at x along coordinate `i`.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                 std::size_t i, double h) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double down = f(x);
    return (up - down) / (2.0 * h);
}

/// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

inline double euclid(const double* a, const double* b, std::size_t dim) {
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
}

/// Batch-hard triplet loss by enumerating every (anchor, positive, negative)
/// triple: the hardest triple per anchor is the one with the largest hinge.
inline double triplet_loss(const std::vector<double>& f, std::size_t dim, const std::vector<int>& labels,
                           double margin) {
    const std::size_t n = labels.size();
    double total = 0.0;
    std::size_t anchors = 0;
    for (std::size_t a = 0; a < n; ++a) {
        if (labels[a] < 0) continue;
        bool any = false;
        double worst = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            if (p == a || labels[p] != labels[a]) continue;
            for (std::size_t q = 0; q < n; ++q) {
                if (labels[q] < 0 || labels[q] == labels[a]) continue;
                const double v = euclid(&f[a * dim], &f[p * dim], dim) - euclid(&f[a * dim], &f[q * dim], dim) + margin;
                worst = any ? std::max(worst, v) : v;
                any = true;
            }
        }
        if (!any) continue;
        total += std::max(0.0, worst);
        ++anchors;
    }
    return anchors ? total / static_cast<double>(anchors) : NAN;
}

/// kNN graph from the full proximity matrix, sorted per row.
inline std::set<std::pair<std::size_t, std::size_t>> knn_edges(const plexquery::EmbeddingSet& emb,
                                                               const std::vector<plexquery::Point>& pos,
                                                               std::size_t k, double sigma,
                                                               std::map<std::pair<std::size_t, std::size_t>, double>* w = nullptr) {
    const std::size_t n = emb.size();
    std::vector<std::vector<double>> s(n, std::vector<double>(n, -1.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double dot = 0.0, ni = 0.0, nj = 0.0;
            for (std::size_t d = 0; d < emb.dim; ++d) {
                dot += emb.row(i)[d] * emb.row(j)[d];
                ni += emb.row(i)[d] * emb.row(i)[d];
                nj += emb.row(j)[d] * emb.row(j)[d];
            }
            const double c = dot / std::sqrt(ni * nj);
            if (c <= 0.0) continue;
            s[i][j] = c * std::exp(-std::hypot(pos[i].x - pos[j].x, pos[i].y - pos[j].y) / sigma);
        }
    }
    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> order;
        for (std::size_t j = 0; j < n; ++j) {
            if (s[i][j] > 0.0) order.push_back(j);
        }
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[i][a] > s[i][b]; });
        for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
            const auto key = std::minmax(i, order[r]);
            edges.insert(key);
            if (w) (*w)[key] = s[key.first][key.second];
        }
    }
    return edges;
}

}  // namespace oracle
