#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "plexquery/graph.hpp"
#include "test_util.hpp"

using namespace plexquery;

namespace {

EmbeddingSet random_embeddings(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
    EmbeddingSet e;
    e.panel = "p";
    e.dim = dim;
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) e.cell_ids.push_back(static_cast<std::int64_t>(100 + i));
    e.features.resize(n * dim);
    for (auto& v : e.features) v = g(rng);
    return e;
}

std::vector<Point> random_points(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 200.0);
    std::vector<Point> p(n);
    for (auto& x : p) x = {u(rng), u(rng)};
    return p;
}

std::set<std::pair<std::size_t, std::size_t>> edge_set(const PatchGraph& g) {
    std::set<std::pair<std::size_t, std::size_t>> s;
    for (const auto& e : g.edges) s.insert({e.i, e.j});
    return s;
}

}  // namespace

TEST(Proximity, Examples) {
    const std::vector<double> a{1, 0}, b{1, 0}, c{0, 1}, d{-1, 0};
    EXPECT_DOUBLE_EQ(*proximity(a, b, {0, 0}, {0, 0}, 10), 1.0);
    EXPECT_NEAR(*proximity(a, b, {0, 0}, {3, 4}, 10), std::exp(-0.5), 1e-15);
    const std::vector<double> e{1, 1};
    EXPECT_NEAR(*proximity(a, e, {0, 0}, {10, 0}, 5), std::sqrt(0.5) * std::exp(-2.0), 1e-15);
    EXPECT_FALSE(proximity(a, c, {0, 0}, {0, 0}, 10).has_value());
    EXPECT_FALSE(proximity(a, d, {0, 0}, {1, 0}, 10).has_value());
    EXPECT_ERROR_CODE(proximity(a, b, {0, 0}, {0, 0}, 0.0), InvalidArgument);
    EXPECT_ERROR_CODE(proximity(a, std::vector<double>{1, 0, 0}, {0, 0}, {0, 0}, 1.0), ShapeMismatch);
}

TEST(Proximity, SymmetricAndBounded) {
    std::mt19937_64 rng(3);
    const auto e = random_embeddings(30, 5, rng);
    const auto p = random_points(30, rng);
    for (std::size_t i = 0; i < 30; ++i) {
        for (std::size_t j = 0; j < 30; ++j) {
            const auto ab = proximity(e.row(i), e.row(j), p[i], p[j], 50);
            const auto ba = proximity(e.row(j), e.row(i), p[j], p[i], 50);
            ASSERT_EQ(ab.has_value(), ba.has_value());
            if (!ab) continue;
            EXPECT_DOUBLE_EQ(*ab, *ba);
            EXPECT_GT(*ab, 0.0);
            EXPECT_LE(*ab, 1.0 + 1e-12);
        }
    }
}

TEST(Knn, MatchesBruteForceOracle) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        std::mt19937_64 rng(seed);
        const std::size_t n = 10 + seed * 7, k = 1 + seed % 5;
        const auto e = random_embeddings(n, 4, rng);
        const auto p = random_points(n, rng);
        std::map<std::pair<std::size_t, std::size_t>, double> w;
        const auto want = oracle::knn_edges(e, p, k, 40.0, &w);
        const auto g = build_knn_graph(e, p, {k, 40.0});
        EXPECT_EQ(edge_set(g), want) << "seed " << seed;
        for (const auto& edge : g.edges) EXPECT_NEAR(edge.weight, (w[{edge.i, edge.j}]), 1e-12);
        EXPECT_EQ(g.node_ids, e.cell_ids);
    }
}

TEST(Knn, StructuralInvariants) {
    std::mt19937_64 rng(21);
    const auto e = random_embeddings(60, 6, rng);
    const auto p = random_points(60, rng);
    const auto g = build_knn_graph(e, p, {5, 30.0});
    for (std::size_t a = 0; a < g.edges.size(); ++a) {
        EXPECT_LT(g.edges[a].i, g.edges[a].j);
        EXPECT_GT(g.edges[a].weight, 0.0);
        if (a > 0) {
            const auto& prev = g.edges[a - 1];
            EXPECT_TRUE(prev.i < g.edges[a].i || (prev.i == g.edges[a].i && prev.j < g.edges[a].j));
        }
    }
    // Every node with a positive neighbor has degree >= min(k, candidates).
    const auto adj = g.adjacency();
    for (std::size_t v = 0; v < 60; ++v) EXPECT_GE(adj[v].size(), 1u);
    // k >= n - 1 keeps every positive pair.
    const auto full = build_knn_graph(e, p, {100, 30.0});
    std::size_t positive = 0;
    for (std::size_t i = 0; i < 60; ++i)
        for (std::size_t j = i + 1; j < 60; ++j) positive += proximity(e.row(i), e.row(j), p[i], p[j], 30.0) ? 1 : 0;
    EXPECT_EQ(full.edges.size(), positive);
}

TEST(Knn, IsolatedNodeAndErrors) {
    EmbeddingSet e{"p", 2, {1, 2, 3}, {1, 0, 1, 0.1, -1, 0}};
    const std::vector<Point> p{{0, 0}, {1, 0}, {2, 0}};
    const auto g = build_knn_graph(e, p, {2, 10.0});
    ASSERT_EQ(g.edges.size(), 1u);
    EXPECT_EQ(g.strengths()[2], 0.0);
    EXPECT_ERROR_CODE(build_knn_graph(e, p, {0, 10.0}), InvalidArgument);
    EXPECT_ERROR_CODE(build_knn_graph(e, std::vector<Point>{{0, 0}}, {2, 10.0}), ShapeMismatch);
}

TEST(Fusion, KeepsCommonEdgesWithMeanWeight) {
    const auto a = oracle::make_graph(4, {{0, 1, 0.2}, {1, 2, 0.4}, {2, 3, 1.0}});
    const auto b = oracle::make_graph(4, {{0, 1, 0.6}, {2, 3, 0.5}, {0, 3, 0.9}});
    const std::vector<PatchGraph> both{a, b};
    const auto f = fuse_graphs(both);
    ASSERT_EQ(f.edges.size(), 2u);
    EXPECT_EQ(f.edges[0].i, 0u);
    EXPECT_EQ(f.edges[0].j, 1u);
    EXPECT_NEAR(f.edges[0].weight, 0.4, 1e-15);
    EXPECT_NEAR(f.edges[1].weight, 0.75, 1e-15);
}

TEST(Fusion, SetAlgebra) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = oracle::random_connected(12, 0.3, rng);
        const auto b = oracle::random_connected(12, 0.3, rng);
        const auto c = oracle::random_connected(12, 0.3, rng);
        // Identity.
        const std::vector<PatchGraph> single{a};
        EXPECT_EQ(edge_set(fuse_graphs(single)), edge_set(a));
        const std::vector<PatchGraph> self{a, a};
        const auto aa = fuse_graphs(self);
        for (std::size_t i = 0; i < a.edges.size(); ++i) EXPECT_DOUBLE_EQ(aa.edges[i].weight, a.edges[i].weight);
        // Intersection, commutative.
        const std::vector<PatchGraph> ab{a, b}, ba{b, a}, abc{a, b, c};
        std::set<std::pair<std::size_t, std::size_t>> inter;
        for (const auto& key : edge_set(a))
            if (edge_set(b).count(key)) inter.insert(key);
        EXPECT_EQ(edge_set(fuse_graphs(ab)), inter);
        EXPECT_EQ(edge_set(fuse_graphs(ba)), inter);
        const auto f3 = fuse_graphs(abc);
        for (const auto& key : edge_set(f3)) EXPECT_TRUE(inter.count(key) && edge_set(c).count(key));
    }
}

TEST(Fusion, AlignsByCellIdAndRejectsMismatch) {
    auto a = oracle::make_graph(3, {{0, 1, 1.0}, {1, 2, 1.0}});
    // Same cells listed in reverse order: local edge (1,2) in b is cells (1,0).
    PatchGraph b;
    b.node_ids = {2, 1, 0};
    b.coords = {{2, 0}, {1, 0}, {0, 0}};
    b.edges = {{1, 2, 3.0}};
    const std::vector<PatchGraph> ab{a, b};
    const auto f = fuse_graphs(ab);
    ASSERT_EQ(f.edges.size(), 1u);
    EXPECT_EQ(f.edges[0].i, 0u);
    EXPECT_EQ(f.edges[0].j, 1u);
    EXPECT_DOUBLE_EQ(f.edges[0].weight, 2.0);

    auto c = a;
    c.node_ids[2] = 99;
    const std::vector<PatchGraph> ac{a, c};
    EXPECT_ERROR_CODE(fuse_graphs(ac), NodeSetMismatch);
    EXPECT_ERROR_CODE(fuse_graphs(std::span<const PatchGraph>{}), InvalidArgument);
}

TEST(EdgeList, ExportsCellIdsAtFullPrecision) {
    testutil::TempDir dir;
    auto g = oracle::make_graph(3, {{0, 2, 0.1}, {1, 2, 1.0 / 3.0}});
    g.node_ids = {10, 20, 30};
    save_edge_list(g, dir / "sub" / "edges.csv");
    std::istringstream in(testutil::slurp(dir / "sub" / "edges.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "i,j,weight");
    std::getline(in, line);
    EXPECT_EQ(line.substr(0, 6), "10,30,");
    EXPECT_EQ(std::stod(line.substr(6)), 0.1);
    std::getline(in, line);
    EXPECT_EQ(std::stod(line.substr(6)), 1.0 / 3.0);
}
