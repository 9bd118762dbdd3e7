#include "plexquery/community.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "plexquery/error.hpp"

namespace plexquery {

namespace {

constexpr double kMinImprovement = 1e-10;

double plogp(double x) { return x > 0.0 ? x * std::log2(x) : 0.0; }

/// One level of the search: leaf nodes or aggregated modules. Weights and
/// flows are in flow units (edge weight / 2W), self-loops dropped.
struct FlowLevel {
    std::vector<double> flow;
    std::vector<double> out;
    std::vector<std::vector<std::pair<std::size_t, double>>> adj;

    std::size_t size() const { return flow.size(); }
};

FlowLevel leaf_level(const PatchGraph& graph, double two_w) {
    FlowLevel level;
    const std::size_t n = graph.node_count();
    level.flow.assign(n, 0.0);
    level.out.assign(n, 0.0);
    level.adj = graph.adjacency();
    for (std::size_t v = 0; v < n; ++v) {
        for (auto& [u, w] : level.adj[v]) {
            w /= two_w;
            level.out[v] += w;
        }
        level.flow[v] = level.out[v];
    }
    return level;
}

FlowLevel aggregate(const FlowLevel& level, const std::vector<std::size_t>& module_of, std::size_t modules) {
    FlowLevel next;
    next.flow.assign(modules, 0.0);
    next.out.assign(modules, 0.0);
    next.adj.resize(modules);
    std::vector<std::map<std::size_t, double>> links(modules);
    for (std::size_t v = 0; v < level.size(); ++v) {
        const std::size_t m = module_of[v];
        next.flow[m] += level.flow[v];
        for (const auto& [u, w] : level.adj[v]) {
            if (module_of[u] != m) links[m][module_of[u]] += w;
        }
    }
    for (std::size_t m = 0; m < modules; ++m) {
        for (const auto& [u, w] : links[m]) {
            next.adj[m].emplace_back(u, w);
            next.out[m] += w;
        }
    }
    return next;
}

/// Greedy local moves on one level; `module_of` is the initial assignment and
/// is updated in place. Returns true if any node moved.
class ModuleMover {
public:
    ModuleMover(const FlowLevel& level, std::vector<std::size_t>& module_of)
        : level_(level), module_of_(module_of) {}

    bool run(std::mt19937_64& rng) {
        const std::size_t n = level_.size();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> weight_to(n, 0.0);
        std::vector<std::size_t> touched;
        bool moved_any = false;
        for (int pass = 0; pass < 200; ++pass) {
            recompute();
            std::shuffle(order.begin(), order.end(), rng);
            std::size_t moves = 0;
            for (std::size_t v : order) {
                const std::size_t from = module_of_[v];
                touched.clear();
                for (const auto& [u, w] : level_.adj[v]) {
                    const std::size_t m = module_of_[u];
                    if (weight_to[m] == 0.0) touched.push_back(m);
                    weight_to[m] += w;
                }
                std::sort(touched.begin(), touched.end());
                const double to_from = weight_to[from];
                const double exit_from = std::max(0.0, exit_[from] - level_.out[v] + 2.0 * to_from);
                const double flow_from = std::max(0.0, flow_[from] - level_.flow[v]);

                std::size_t best = from;
                double best_delta = -kMinImprovement;
                double best_exit_to = 0.0;
                for (std::size_t m : touched) {
                    if (m == from) continue;
                    const double exit_to = std::max(0.0, exit_[m] + level_.out[v] - 2.0 * weight_to[m]);
                    const double flow_to = flow_[m] + level_.flow[v];
                    const double new_sum_exit = sum_exit_ - exit_[from] - exit_[m] + exit_from + exit_to;
                    const double delta = plogp(new_sum_exit) - plogp(sum_exit_) -
                                         2.0 * (plogp(exit_from) + plogp(exit_to) - plogp(exit_[from]) -
                                                plogp(exit_[m])) +
                                         plogp(exit_from + flow_from) + plogp(exit_to + flow_to) -
                                         plogp(exit_[from] + flow_[from]) - plogp(exit_[m] + flow_[m]);
                    if (delta < best_delta) {
                        best_delta = delta;
                        best = m;
                        best_exit_to = exit_to;
                    }
                }
                for (std::size_t m : touched) weight_to[m] = 0.0;
                if (best == from) continue;

                sum_exit_ += exit_from + best_exit_to - exit_[from] - exit_[best];
                exit_[from] = exit_from;
                exit_[best] = best_exit_to;
                flow_[from] = flow_from;
                flow_[best] += level_.flow[v];
                if (--members_[from] == 0) {
                    exit_[from] = 0.0;
                    flow_[from] = 0.0;
                }
                ++members_[best];
                module_of_[v] = best;
                ++moves;
            }
            if (moves == 0) break;
            moved_any = true;
        }
        return moved_any;
    }

private:
    void recompute() {
        const std::size_t n = level_.size();
        exit_.assign(n, 0.0);
        flow_.assign(n, 0.0);
        members_.assign(n, 0);
        for (std::size_t v = 0; v < n; ++v) {
            const std::size_t m = module_of_[v];
            flow_[m] += level_.flow[v];
            ++members_[m];
            for (const auto& [u, w] : level_.adj[v]) {
                if (module_of_[u] != m) exit_[m] += w;
            }
        }
        sum_exit_ = std::accumulate(exit_.begin(), exit_.end(), 0.0);
    }

    const FlowLevel& level_;
    std::vector<std::size_t>& module_of_;
    std::vector<double> exit_;
    std::vector<double> flow_;
    std::vector<std::size_t> members_;
    double sum_exit_ = 0.0;
};

/// Renumbers module ids to 0..count-1 in order of first appearance.
std::size_t compact(std::vector<std::size_t>& module_of) {
    std::map<std::size_t, std::size_t> ids;
    for (auto& m : module_of) {
        const auto [it, inserted] = ids.emplace(m, ids.size());
        m = it->second;
    }
    return ids.size();
}

/// Coarse search from `leaf_modules` (moves, then aggregation until stable).
void search_levels(const FlowLevel& leaves, std::vector<std::size_t>& leaf_modules, std::mt19937_64& rng) {
    std::vector<std::size_t> level_modules = leaf_modules;
    ModuleMover(leaves, level_modules).run(rng);
    leaf_modules = level_modules;
    std::size_t count = compact(leaf_modules);
    std::vector<std::size_t> current = leaf_modules;
    FlowLevel level = aggregate(leaves, current, count);
    while (level.size() > 1) {
        std::vector<std::size_t> super(level.size());
        std::iota(super.begin(), super.end(), 0);
        if (!ModuleMover(level, super).run(rng)) break;
        const std::size_t next_count = compact(super);
        for (auto& m : leaf_modules) m = super[m];
        level = aggregate(level, super, next_count);
    }
    compact(leaf_modules);
}

std::vector<int> to_int(const std::vector<std::size_t>& modules) {
    return {modules.begin(), modules.end()};
}

}  // namespace

std::size_t CommunityPartition::outlier_count() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kOutlier));
}

std::vector<std::size_t> CommunityPartition::community_sizes() const {
    std::vector<std::size_t> sizes(community_count, 0);
    for (int l : labels) {
        if (l >= 0) ++sizes[static_cast<std::size_t>(l)];
    }
    return sizes;
}

double map_equation(const PatchGraph& graph, std::span<const int> modules) {
    const std::size_t n = graph.node_count();
    if (n == 0) throw Error(ErrorCode::EmptyGraph, "graph has no nodes");
    if (modules.size() != n) throw Error(ErrorCode::ShapeMismatch, "partition length differs from node count");
    const double two_w = 2.0 * graph.total_weight();
    if (!(two_w > 0.0)) throw Error(ErrorCode::IsolatedOnlyGraph, "graph has no edge weight");

    // Singleton ids for negative labels are placed after the largest real id.
    int next = 0;
    for (int m : modules) next = std::max(next, m + 1);
    std::vector<std::size_t> module_of(n);
    for (std::size_t v = 0; v < n; ++v) module_of[v] = static_cast<std::size_t>(modules[v] >= 0 ? modules[v] : next++);
    const auto count = static_cast<std::size_t>(next);

    const std::vector<double> strength = graph.strengths();
    std::vector<double> exit(count, 0.0);
    std::vector<double> flow(count, 0.0);
    double node_terms = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
        const double p = strength[v] / two_w;
        flow[module_of[v]] += p;
        node_terms += plogp(p);
    }
    for (const auto& e : graph.edges) {
        if (module_of[e.i] == module_of[e.j]) continue;
        exit[module_of[e.i]] += e.weight / two_w;
        exit[module_of[e.j]] += e.weight / two_w;
    }
    double total_exit = 0.0;
    double exit_terms = 0.0;
    double module_terms = 0.0;
    for (std::size_t m = 0; m < count; ++m) {
        total_exit += exit[m];
        exit_terms += plogp(exit[m]);
        module_terms += plogp(exit[m] + flow[m]);
    }
    return plogp(total_exit) - 2.0 * exit_terms - node_terms + module_terms;
}

CommunityPartition relabel_partition(const PatchGraph& graph, std::span<const int> modules, std::size_t min_size,
                                     double code_length) {
    const std::size_t n = graph.node_count();
    const std::vector<double> strength = graph.strengths();
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t v = 0; v < n; ++v) {
        if (modules[v] < 0 || strength[v] == 0.0) continue;
        groups[modules[v]].push_back(v);
    }
    std::vector<const std::vector<std::size_t>*> kept;
    for (const auto& [id, members] : groups) {
        if (members.size() >= std::max<std::size_t>(1, min_size)) kept.push_back(&members);
    }
    std::sort(kept.begin(), kept.end(), [](const auto* a, const auto* b) {
        return a->size() != b->size() ? a->size() > b->size() : a->front() < b->front();
    });
    CommunityPartition out;
    out.labels.assign(n, kOutlier);
    for (std::size_t k = 0; k < kept.size(); ++k) {
        for (std::size_t v : *kept[k]) out.labels[v] = static_cast<int>(k);
    }
    out.community_count = kept.size();
    out.code_length = code_length;
    return out;
}

CommunityPartition infomap(const PatchGraph& graph, const InfomapOptions& options) {
    const std::size_t n = graph.node_count();
    if (n == 0) throw Error(ErrorCode::EmptyGraph, "graph has no nodes");
    const double two_w = 2.0 * graph.total_weight();
    if (!(two_w > 0.0)) {
        CommunityPartition all_outliers;
        all_outliers.labels.assign(n, kOutlier);
        return all_outliers;
    }

    const FlowLevel leaves = leaf_level(graph, two_w);
    const std::vector<int> one_module(n, 0);
    std::vector<int> best_modules = one_module;
    double best_length = map_equation(graph, one_module);

    for (std::size_t trial = 0; trial < std::max<std::size_t>(1, options.trials); ++trial) {
        std::mt19937_64 rng(options.seed * 0x9E3779B97F4A7C15ULL + trial);
        std::vector<std::size_t> modules(n);
        std::iota(modules.begin(), modules.end(), 0);
        double length = std::numeric_limits<double>::infinity();
        for (int round = 0; round < 10; ++round) {
            std::vector<std::size_t> candidate = modules;
            search_levels(leaves, candidate, rng);
            const double candidate_length = map_equation(graph, to_int(candidate));
            if (!(candidate_length < length - kMinImprovement)) break;
            length = candidate_length;
            modules = std::move(candidate);
        }
        if (length < best_length - kMinImprovement) {
            best_length = length;
            best_modules = to_int(modules);
        }
    }
    return relabel_partition(graph, best_modules, options.min_size, best_length);
}

BrutePartition brute_force_partition(const PatchGraph& graph) {
    const std::size_t n = graph.node_count();
    if (n == 0) throw Error(ErrorCode::EmptyGraph, "graph has no nodes");
    if (n > 10) throw Error(ErrorCode::TooLarge, "exhaustive search is limited to 10 nodes");
    BrutePartition best;
    best.modules.assign(n, 0);
    if (!(graph.total_weight() > 0.0)) return best;

    // Restricted growth strings enumerate each set partition exactly once.
    std::vector<int> rgs(n, 0);
    std::vector<int> prefix_max(n, 0);
    best.code_length = std::numeric_limits<double>::infinity();
    while (true) {
        const double length = map_equation(graph, rgs);
        if (length < best.code_length) {
            best.code_length = length;
            best.modules = rgs;
        }
        std::size_t i = n - 1;
        while (i > 0 && rgs[i] > prefix_max[i - 1]) --i;
        if (i == 0) break;
        ++rgs[i];
        prefix_max[i] = std::max(prefix_max[i - 1], rgs[i]);
        for (std::size_t j = i + 1; j < n; ++j) {
            rgs[j] = 0;
            prefix_max[j] = prefix_max[j - 1];
        }
    }
    return best;
}

void save_partition(const PatchGraph& graph, const CommunityPartition& partition, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << "cell_id,community\n";
    for (std::size_t v = 0; v < graph.node_count(); ++v) out << graph.node_ids[v] << ',' << partition.labels[v] << '\n';
}

}  // namespace plexquery
