#include "plexquery/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "plexquery/error.hpp"
#include "plexquery/parallel.hpp"

namespace plexquery {

double topk_accuracy(const SearchIndex& index, const std::string& panel,
                     const std::map<std::int64_t, std::string>& type_labels, std::size_t k,
                     std::span<const std::int64_t> queries) {
    if (queries.empty()) throw Error(ErrorCode::EmptySet, "no query cells");
    for (auto q : queries) {
        if (!type_labels.count(q)) throw Error(ErrorCode::MissingLabels, "query cell " + std::to_string(q) + " has no type");
    }
    std::vector<char> hit(queries.size(), 0);
    parallel_for(queries.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const std::string& want = type_labels.at(queries[i]);
            const auto result = topn_cosine(index, panel, queries[i], k);
            for (auto id : result.cell_ids) {
                const auto it = type_labels.find(id);
                if (it != type_labels.end() && it->second == want) {
                    hit[i] = 1;
                    break;
                }
            }
        }
    });
    const auto hits = static_cast<double>(std::count(hit.begin(), hit.end(), 1));
    return hits / static_cast<double>(queries.size());
}

ConfusionReport confusion_iou(const CommunityPartition& partition, std::span<const CellRecord> cells,
                              const LabelRaster& labels) {
    if (partition.labels.size() != cells.size()) {
        throw Error(ErrorCode::ShapeMismatch, "partition does not match the cell list");
    }
    std::vector<std::uint16_t> truth(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const int x = cells[i].px(), y = cells[i].py();
        if (x < 0 || y < 0 || x >= labels.width || y >= labels.height) {
            throw Error(ErrorCode::OutOfBounds, "cell " + std::to_string(cells[i].cell_id) + " outside the label raster");
        }
        truth[i] = labels.at(x, y);
    }

    ConfusionReport out;
    for (auto r : truth) {
        if (r != 0) out.regions.push_back(r);
    }
    std::sort(out.regions.begin(), out.regions.end());
    out.regions.erase(std::unique(out.regions.begin(), out.regions.end()), out.regions.end());
    if (out.regions.empty()) throw Error(ErrorCode::NoLabeledCells, "no cell lies on a labeled region");
    const std::size_t R = out.regions.size();
    auto row_of = [&](std::uint16_t region) {
        return static_cast<std::size_t>(std::lower_bound(out.regions.begin(), out.regions.end(), region) -
                                        out.regions.begin());
    };

    // Majority region per community; R means "unassigned".
    std::vector<std::vector<std::size_t>> votes(partition.community_count, std::vector<std::size_t>(R, 0));
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const int c = partition.labels[i];
        if (c >= 0 && truth[i] != 0) ++votes[static_cast<std::size_t>(c)][row_of(truth[i])];
    }
    std::vector<std::size_t> mapped(partition.community_count, R);
    for (std::size_t c = 0; c < votes.size(); ++c) {
        std::size_t best = 0;
        for (std::size_t r = 0; r < R; ++r) {
            if (votes[c][r] > best) {
                best = votes[c][r];
                mapped[c] = r;
            }
        }
    }

    out.matrix.assign(R * (R + 1), 0);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (truth[i] == 0) continue;
        const int c = partition.labels[i];
        const std::size_t pred = c >= 0 ? mapped[static_cast<std::size_t>(c)] : R;
        ++out.matrix[row_of(truth[i]) * (R + 1) + pred];
        ++out.cells;
    }

    double sum = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
        std::size_t row_total = 0, col_total = 0;
        for (std::size_t c = 0; c <= R; ++c) row_total += out.at(r, c);
        for (std::size_t q = 0; q < R; ++q) col_total += out.at(q, r);
        const std::size_t tp = out.at(r, r);
        const std::size_t denom = row_total + col_total - tp;  // TP + FN + FP
        const double iou = denom ? static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
        out.iou.push_back(iou);
        out.tpr.push_back(static_cast<double>(tp) / static_cast<double>(row_total));
        sum += iou;
        const auto it = labels.legend.find(out.regions[r]);
        out.region_names.push_back(it != labels.legend.end() ? it->second : "region_" + std::to_string(out.regions[r]));
    }
    out.mean_iou = sum / static_cast<double>(R);
    return out;
}

std::vector<CodeLengthEntry> codelength_compare(const SearchIndex& index,
                                                const std::vector<std::vector<std::string>>& panel_sets) {
    std::vector<CodeLengthEntry> out;
    for (auto set : panel_sets) {
        std::sort(set.begin(), set.end());
        set.erase(std::unique(set.begin(), set.end()), set.end());
        if (set.empty()) throw Error(ErrorCode::InvalidArgument, "empty panel set");
        CodeLengthEntry e;
        if (set.size() == 1) {
            const auto& p = index.panel(set.front()).partition;
            e.communities = p.community_count;
            e.code_length = p.code_length;
        } else {
            const auto fused = index.fused(set);
            e.communities = fused->partition.community_count;
            e.code_length = fused->partition.code_length;
        }
        e.panels = std::move(set);
        out.push_back(std::move(e));
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.code_length != b.code_length ? a.code_length < b.code_length : a.panels < b.panels;
    });
    return out;
}

nlohmann::json to_json(const EvalReport& report) {
    nlohmann::json j;
    j["topk"] = nlohmann::json::array();
    for (const auto& t : report.topk) {
        j["topk"].push_back({{"panel", t.panel}, {"k", t.k}, {"queries", t.queries}, {"accuracy", t.accuracy}});
    }
    j["confusion"] = nlohmann::json::array();
    for (const auto& c : report.confusion) {
        const std::size_t R = c.regions.size();
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < R; ++r) {
            rows.push_back(std::vector<std::size_t>(c.matrix.begin() + static_cast<std::ptrdiff_t>(r * (R + 1)),
                                                    c.matrix.begin() + static_cast<std::ptrdiff_t>((r + 1) * (R + 1))));
        }
        j["confusion"].push_back({{"name", c.name},
                                  {"regions", c.regions},
                                  {"region_names", c.region_names},
                                  {"matrix", rows},
                                  {"iou", c.iou},
                                  {"tpr", c.tpr},
                                  {"mean_iou", c.mean_iou},
                                  {"cells", c.cells}});
    }
    j["code_lengths"] = nlohmann::json::array();
    for (const auto& e : report.code_lengths) {
        j["code_lengths"].push_back(
            {{"panels", e.panels}, {"communities", e.communities}, {"code_length", e.code_length}});
    }
    return j;
}

std::string format_report(const EvalReport& report) {
    std::ostringstream out;
    char buf[256];
    if (!report.topk.empty()) {
        out << "Top-k accuracy\n";
        for (const auto& t : report.topk) {
            std::snprintf(buf, sizeof buf, "  %-16s top-%-3zu %.4f  (%zu queries)\n", t.panel.c_str(), t.k, t.accuracy,
                          t.queries);
            out << buf;
        }
    }
    for (const auto& c : report.confusion) {
        out << "Confusion: " << c.name << " (" << c.cells << " cells)\n";
        std::snprintf(buf, sizeof buf, "  %-14s", "truth\\pred");
        out << buf;
        for (const auto& n : c.region_names) {
            std::snprintf(buf, sizeof buf, " %8.8s", n.c_str());
            out << buf;
        }
        out << "   unassig      IoU      TPR\n";
        const std::size_t R = c.regions.size();
        for (std::size_t r = 0; r < R; ++r) {
            std::snprintf(buf, sizeof buf, "  %-14.14s", c.region_names[r].c_str());
            out << buf;
            for (std::size_t q = 0; q <= R; ++q) {
                std::snprintf(buf, sizeof buf, " %8zu", c.at(r, q));
                out << buf;
            }
            std::snprintf(buf, sizeof buf, "   %.4f   %.4f\n", c.iou[r], c.tpr[r]);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "  mean IoU %.4f\n", c.mean_iou);
        out << buf;
    }
    if (!report.code_lengths.empty()) {
        out << "Code length (bits, ascending)\n";
        for (const auto& e : report.code_lengths) {
            std::string name;
            for (const auto& p : e.panels) name += (name.empty() ? "" : "+") + p;
            std::snprintf(buf, sizeof buf, "  %-24s %.6f  (%zu communities)\n", name.c_str(), e.code_length,
                          e.communities);
            out << buf;
        }
    }
    return out.str();
}

}  // namespace plexquery
