#include "plexquery/query.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstdint>
#include <numeric>

#include "plexquery/error.hpp"
#include "plexquery/parallel.hpp"

namespace plexquery {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = std::sqrt(dot(a, a));
    const double nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

std::string panel_key(std::vector<std::string> names) {
    std::sort(names.begin(), names.end());
    std::string key;
    for (const auto& n : names) key += (key.empty() ? "" : ",") + n;
    return key;
}

/// Members of `label` ordered by cosine of their profile (over `columns`) to
/// the members' mean profile; ties by cell id.
RetrievalResult rank_community(const SearchIndex& index, const CommunityPartition& partition, int label,
                               const std::vector<std::size_t>& columns) {
    std::vector<std::size_t> members;
    for (std::size_t r = 0; r < partition.labels.size(); ++r) {
        if (partition.labels[r] == label) members.push_back(r);
    }
    std::vector<double> centroid(columns.size(), 0.0);
    for (std::size_t r : members) {
        const auto row = index.intensities(r);
        for (std::size_t c = 0; c < columns.size(); ++c) centroid[c] += row[columns[c]];
    }
    for (auto& v : centroid) v /= static_cast<double>(members.size());

    std::vector<std::pair<double, std::int64_t>> scored;
    scored.reserve(members.size());
    std::vector<double> profile(columns.size());
    for (std::size_t r : members) {
        const auto row = index.intensities(r);
        for (std::size_t c = 0; c < columns.size(); ++c) profile[c] = row[columns[c]];
        scored.emplace_back(cosine(profile, centroid), index.cells()[r].cell_id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    RetrievalResult out;
    for (const auto& [score, id] : scored) {
        out.cell_ids.push_back(id);
        out.scores.push_back(score);
    }
    return out;
}

std::vector<std::size_t> marker_columns(const SearchIndex& index, const std::vector<std::string>& panels) {
    std::vector<std::size_t> cols;
    for (const auto& p : panels) {
        for (const auto& m : index.panel(p).panel.markers) cols.push_back(index.marker_column(m));
    }
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    return cols;
}

}  // namespace

std::vector<CellRecord> align_panels(std::vector<PanelArtifacts>& panels) {
    if (panels.empty()) return {};
    std::map<std::int64_t, std::pair<std::size_t, Point>> common;  // id -> (panels seen, coords)
    for (const auto& a : panels) {
        if (a.embeddings.size() != a.graph.node_count() || a.partition.labels.size() != a.graph.node_count()) {
            throw Error(ErrorCode::ShapeMismatch, "panel '" + a.panel.name + "' artifacts disagree on the cell count");
        }
        for (std::size_t i = 0; i < a.graph.node_count(); ++i) {
            auto& entry = common[a.graph.node_ids[i]];
            ++entry.first;
            entry.second = a.graph.coords[i];
        }
    }
    std::vector<CellRecord> cells;
    for (const auto& [id, entry] : common) {
        if (entry.first == panels.size()) cells.push_back({id, entry.second.x, entry.second.y});
    }
    std::unordered_map<std::int64_t, std::size_t> new_row;
    for (std::size_t r = 0; r < cells.size(); ++r) new_row.emplace(cells[r].cell_id, r);

    for (auto& a : panels) {
        const std::size_t n = a.graph.node_count();
        std::vector<std::size_t> target(n, SIZE_MAX);
        for (std::size_t i = 0; i < n; ++i) {
            const auto it = new_row.find(a.graph.node_ids[i]);
            if (it != new_row.end()) target[i] = it->second;
        }
        EmbeddingSet emb;
        emb.panel = a.embeddings.panel;
        emb.dim = a.embeddings.dim;
        emb.cell_ids.resize(cells.size());
        emb.features.resize(cells.size() * emb.dim);
        PatchGraph graph;
        graph.node_ids.resize(cells.size());
        graph.coords.resize(cells.size());
        std::vector<int> labels(cells.size());
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t t = target[i];
            if (t == SIZE_MAX) continue;
            if (a.embeddings.cell_ids[i] != a.graph.node_ids[i]) {
                throw Error(ErrorCode::NodeSetMismatch, "panel '" + a.panel.name + "' rows are not aligned");
            }
            emb.cell_ids[t] = a.graph.node_ids[i];
            std::copy_n(a.embeddings.features.begin() + static_cast<std::ptrdiff_t>(i * emb.dim), emb.dim,
                        emb.features.begin() + static_cast<std::ptrdiff_t>(t * emb.dim));
            graph.node_ids[t] = a.graph.node_ids[i];
            graph.coords[t] = a.graph.coords[i];
            labels[t] = a.partition.labels[i];
        }
        for (const auto& e : a.graph.edges) {
            const std::size_t ti = target[e.i], tj = target[e.j];
            if (ti == SIZE_MAX || tj == SIZE_MAX) continue;
            graph.edges.push_back({std::min(ti, tj), std::max(ti, tj), e.weight});
        }
        std::sort(graph.edges.begin(), graph.edges.end(),
                  [](const Edge& x, const Edge& y) { return x.i != y.i ? x.i < y.i : x.j < y.j; });
        a.embeddings = std::move(emb);
        a.graph = std::move(graph);
        a.partition.labels = std::move(labels);
    }
    return cells;
}

double canonical_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::strtod(buf, nullptr);
}

SearchIndex SearchIndex::from_table(std::vector<CellRecord> cells, std::vector<std::string> markers,
                                    std::vector<double> intensities, std::vector<PanelIndex> panels,
                                    const IndexOptions& options) {
    if (intensities.size() != cells.size() * markers.size()) {
        throw Error(ErrorCode::ShapeMismatch, "intensity table does not match cells x markers");
    }
    SearchIndex index;
    index.cells_ = std::move(cells);
    index.markers_ = std::move(markers);
    index.intensities_ = std::move(intensities);
    for (auto& v : index.intensities_) v = canonical_value(v);
    index.panels_ = std::move(panels);
    index.options_ = options;
    for (std::size_t r = 0; r < index.cells_.size(); ++r) {
        if (!index.row_of_.emplace(index.cells_[r].cell_id, r).second) {
            throw Error(ErrorCode::DuplicateId, "cell " + std::to_string(index.cells_[r].cell_id));
        }
    }
    for (const auto& p : index.panels_) {
        if (p.partition.labels.size() != index.cells_.size()) {
            throw Error(ErrorCode::ShapeMismatch, "panel '" + p.panel.name + "' partition does not cover the cells");
        }
        for (const auto& m : p.panel.markers) index.marker_column(m);
    }
    return index;
}

SearchIndex SearchIndex::build(std::vector<CellRecord> cells, std::vector<std::string> markers,
                               std::vector<double> intensities, std::vector<PanelArtifacts> panels,
                               const IndexOptions& options) {
    std::vector<PanelIndex> built;
    for (auto& a : panels) {
        if (a.embeddings.size() != cells.size() || a.graph.node_count() != cells.size()) {
            throw Error(ErrorCode::NodeSetMismatch, "panel '" + a.panel.name + "' does not cover the index cells");
        }
        for (std::size_t r = 0; r < cells.size(); ++r) {
            if (a.embeddings.cell_ids[r] != cells[r].cell_id || a.graph.node_ids[r] != cells[r].cell_id) {
                throw Error(ErrorCode::NodeSetMismatch, "panel '" + a.panel.name + "' rows are not aligned");
            }
        }
        PanelIndex p;
        p.panel = a.panel;
        p.patch_size = a.patch_size;
        p.has_embeddings = true;
        p.has_graph = true;
        p.pca = pca_fit(a.embeddings, options.pca_dim);
        p.reduced = pca_project(p.pca, a.embeddings.features);
        const std::size_t r = p.pca.rank();
        p.reduced_norms.resize(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const std::span<const double> v(p.reduced.data() + i * r, r);
            p.reduced_norms[i] = std::sqrt(dot(v, v));
        }
        p.graph = std::move(a.graph);
        p.partition = std::move(a.partition);
        built.push_back(std::move(p));
    }
    return from_table(std::move(cells), std::move(markers), std::move(intensities), std::move(built), options);
}

std::size_t SearchIndex::row(std::int64_t cell_id) const {
    const auto it = row_of_.find(cell_id);
    if (it == row_of_.end()) throw Error(ErrorCode::UnknownCell, "cell " + std::to_string(cell_id));
    return it->second;
}

const PanelIndex& SearchIndex::panel(const std::string& name) const {
    for (const auto& p : panels_) {
        if (p.panel.name == name) return p;
    }
    throw Error(ErrorCode::UnknownPanelSet, "unknown panel '" + name + "'");
}

std::size_t SearchIndex::marker_column(const std::string& marker) const {
    const auto it = std::find(markers_.begin(), markers_.end(), marker);
    if (it == markers_.end()) throw Error(ErrorCode::SchemaError, "unknown marker '" + marker + "'");
    return static_cast<std::size_t>(it - markers_.begin());
}

std::shared_ptr<const FusedPartition> SearchIndex::fused(std::vector<std::string> panel_names) const {
    std::sort(panel_names.begin(), panel_names.end());
    panel_names.erase(std::unique(panel_names.begin(), panel_names.end()), panel_names.end());
    if (panel_names.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "fusion needs at least two distinct panels");
    }
    const std::string key = panel_key(panel_names);
    {
        std::lock_guard lock(cache_->mutex);
        const auto it = cache_->entries.find(key);
        if (it != cache_->entries.end()) return it->second;
    }
    std::vector<PatchGraph> graphs;
    for (const auto& name : panel_names) {
        const PanelIndex& p = panel(name);
        if (!p.has_graph) {
            throw Error(ErrorCode::CapabilityMissing, "panel '" + name + "' has no graph in this index");
        }
        graphs.push_back(p.graph);
    }
    auto entry = std::make_shared<FusedPartition>();
    entry->panels = panel_names;
    entry->graph = fuse_graphs(graphs);
    entry->partition = infomap(entry->graph, {options_.min_size, options_.seed, InfomapOptions{}.trials});

    std::lock_guard lock(cache_->mutex);
    const auto [it, inserted] = cache_->entries.emplace(key, std::move(entry));
    return it->second;
}

RetrievalResult topn_cosine(const SearchIndex& index, const std::string& panel, std::int64_t query_cell,
                            std::size_t n) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "n must be >= 1");
    const PanelIndex& p = index.panel(panel);
    const std::size_t q = index.row(query_cell);
    if (!p.has_embeddings) {
        throw Error(ErrorCode::CapabilityMissing, "panel '" + panel + "' has no embeddings in this index");
    }
    const std::size_t r = p.pca.rank();
    const std::span<const double> qv(p.reduced.data() + q * r, r);
    std::vector<std::pair<double, std::int64_t>> scored(index.size());
    parallel_for(index.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const std::span<const double> v(p.reduced.data() + i * r, r);
            const double denom = p.reduced_norms[q] * p.reduced_norms[i];
            scored[i] = {denom > 0.0 ? dot(qv, v) / denom : 0.0, index.cells()[i].cell_id};
        }
    });
    scored.erase(scored.begin() + static_cast<std::ptrdiff_t>(q));
    const std::size_t keep = std::min(n, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                      [](const auto& a, const auto& b) {
                          return a.first != b.first ? a.first > b.first : a.second < b.second;
                      });
    RetrievalResult out;
    out.mode = "topn";
    out.panels = {panel};
    for (std::size_t i = 0; i < keep; ++i) {
        out.cell_ids.push_back(scored[i].second);
        out.scores.push_back(scored[i].first);
    }
    return out;
}

RetrievalResult community_retrieve(const SearchIndex& index, const std::string& panel, std::int64_t query_cell) {
    const PanelIndex& p = index.panel(panel);
    const std::size_t q = index.row(query_cell);
    const int label = p.partition.labels[q];
    if (label < 0) {
        throw Error(ErrorCode::OutlierQuery, "cell " + std::to_string(query_cell) + " is unclustered in '" + panel + "'");
    }
    RetrievalResult out = rank_community(index, p.partition, label, marker_columns(index, {panel}));
    out.mode = "community";
    out.panels = {panel};
    return out;
}

RetrievalResult fused_retrieve(const SearchIndex& index, const std::vector<std::string>& panels,
                               std::int64_t query_cell) {
    const auto fused = index.fused(panels);
    const std::size_t q = index.row(query_cell);
    const int label = fused->partition.labels[q];
    if (label < 0) {
        throw Error(ErrorCode::OutlierQuery, "cell " + std::to_string(query_cell) + " is unclustered in the fused map");
    }
    RetrievalResult out = rank_community(index, fused->partition, label, marker_columns(index, fused->panels));
    out.mode = "fused";
    out.panels = fused->panels;
    return out;
}

QuickSearchResult quick_search(const SearchIndex& index, std::int64_t query_cell,
                               const std::vector<std::string>& features, std::size_t n) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "n must be >= 1");
    const std::size_t q = index.row(query_cell);
    const std::size_t cells = index.size();

    QuickSearchResult out;
    std::vector<std::vector<double>> columns;
    for (const auto& f : features) {
        const std::size_t c = index.marker_column(f);
        std::vector<double> col(cells);
        for (std::size_t i = 0; i < cells; ++i) col[i] = index.intensities(i)[c];
        const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(cells);
        double var = 0.0;
        for (double v : col) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / static_cast<double>(cells));
        if (!(sd > 0.0)) {
            warn("feature '" + f + "' has zero variance and is ignored");
            continue;
        }
        for (auto& v : col) v = (v - mean) / sd;
        columns.push_back(std::move(col));
        out.features_used.push_back(f);
    }
    if (columns.empty()) throw Error(ErrorCode::NoUsableFeatures, "no selected feature varies across cells");

    const std::size_t f = columns.size();
    std::vector<double> z(cells * f);
    for (std::size_t i = 0; i < cells; ++i) {
        for (std::size_t c = 0; c < f; ++c) z[i * f + c] = columns[c][i];
    }
    auto vec = [&](std::size_t i) { return std::span<const double>(z.data() + i * f, f); };

    struct Scored {
        double score;
        double distance;
        std::int64_t id;
        std::size_t row;
    };
    std::vector<Scored> scored;
    scored.reserve(cells);
    for (std::size_t i = 0; i < cells; ++i) {
        if (i == q) continue;
        double d2 = 0.0;
        for (std::size_t c = 0; c < f; ++c) d2 += (z[i * f + c] - z[q * f + c]) * (z[i * f + c] - z[q * f + c]);
        scored.push_back({cosine(vec(q), vec(i)), std::sqrt(d2), index.cells()[i].cell_id, i});
    }
    const std::size_t keep = std::min(n, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                      [](const Scored& a, const Scored& b) {
                          if (a.score != b.score) return a.score > b.score;
                          if (a.distance != b.distance) return a.distance < b.distance;
                          return a.id < b.id;
                      });
    out.result.mode = "quick";
    for (std::size_t i = 0; i < keep; ++i) {
        out.result.cell_ids.push_back(scored[i].id);
        out.result.scores.push_back(scored[i].score);
    }
    out.similarity.assign(keep * keep, 0.0);
    for (std::size_t a = 0; a < keep; ++a) {
        out.similarity[a * keep + a] = 1.0;
        for (std::size_t b = a + 1; b < keep; ++b) {
            const double s = cosine(vec(scored[a].row), vec(scored[b].row));
            out.similarity[a * keep + b] = s;
            out.similarity[b * keep + a] = s;
        }
    }
    return out;
}

std::vector<MarkerProfile> expression_profile(const SearchIndex& index, std::span<const std::int64_t> cells) {
    if (cells.empty()) throw Error(ErrorCode::EmptySet, "expression profile of an empty cell set");
    std::vector<std::size_t> rows;
    rows.reserve(cells.size());
    for (auto id : cells) rows.push_back(index.row(id));
    std::vector<MarkerProfile> out;
    const auto count = static_cast<double>(rows.size());
    for (std::size_t m = 0; m < index.markers().size(); ++m) {
        double sum = 0.0;
        for (std::size_t r : rows) sum += index.intensities(r)[m];
        const double mean = sum / count;
        double var = 0.0;
        for (std::size_t r : rows) {
            const double d = index.intensities(r)[m] - mean;
            var += d * d;
        }
        out.push_back({index.markers()[m], mean, std::sqrt(var / count)});
    }
    return out;
}

std::vector<std::int64_t> representative_patches(const SearchIndex& index, const std::string& panel, int community,
                                                 std::size_t count) {
    const PanelIndex& p = index.panel(panel);
    if (community < 0 || static_cast<std::size_t>(community) >= p.partition.community_count) {
        throw Error(ErrorCode::UnknownCommunity, "community " + std::to_string(community) + " in '" + panel + "'");
    }
    if (!p.has_embeddings) {
        throw Error(ErrorCode::CapabilityMissing, "panel '" + panel + "' has no embeddings in this index");
    }
    const std::size_t r = p.pca.rank();
    std::vector<std::size_t> members;
    std::vector<double> centroid(r, 0.0);
    for (std::size_t i = 0; i < p.partition.labels.size(); ++i) {
        if (p.partition.labels[i] != community) continue;
        members.push_back(i);
        for (std::size_t k = 0; k < r; ++k) centroid[k] += p.reduced[i * r + k];
    }
    for (auto& v : centroid) v /= static_cast<double>(members.size());
    std::vector<std::pair<double, std::int64_t>> scored;
    for (std::size_t i : members) {
        scored.emplace_back(cosine({p.reduced.data() + i * r, r}, centroid), index.cells()[i].cell_id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::int64_t> out;
    for (std::size_t i = 0; i < std::min(count, scored.size()); ++i) out.push_back(scored[i].second);
    return out;
}

}  // namespace plexquery
