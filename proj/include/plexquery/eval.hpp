#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plexquery/community.hpp"
#include "plexquery/ingest.hpp"
#include "plexquery/query.hpp"

namespace plexquery {

/// Fraction of queries whose top-k neighbours include a cell of the same type.
/// Throws MissingLabels when a query cell has no type.
double topk_accuracy(const SearchIndex& index, const std::string& panel,
                     const std::map<std::int64_t, std::string>& type_labels, std::size_t k,
                     std::span<const std::int64_t> queries);

struct TopkEntry {
    std::string panel;
    std::size_t k = 0;
    std::size_t queries = 0;
    double accuracy = 0.0;
};

struct ConfusionReport {
    std::string name;                    // panel or fused panel set
    std::vector<std::uint16_t> regions;  // rows, ascending region id
    std::vector<std::string> region_names;
    /// regions x (regions + 1); the last column counts cells left unassigned
    /// (outliers and communities without labeled members).
    std::vector<std::size_t> matrix;
    std::vector<double> iou;
    std::vector<double> tpr;
    double mean_iou = 0.0;
    std::size_t cells = 0;

    std::size_t at(std::size_t row, std::size_t col) const { return matrix[row * (regions.size() + 1) + col]; }
};

/// Majority-vote community -> region mapping (ties to the lower region id),
/// then a per-cell confusion matrix. Cells on region 0 are ignored.
ConfusionReport confusion_iou(const CommunityPartition& partition, std::span<const CellRecord> cells,
                              const LabelRaster& labels);

struct CodeLengthEntry {
    std::vector<std::string> panels;
    std::size_t communities = 0;
    double code_length = 0.0;
};

/// Code length of each single panel or fused set, ascending.
std::vector<CodeLengthEntry> codelength_compare(const SearchIndex& index,
                                                const std::vector<std::vector<std::string>>& panel_sets);

struct EvalReport {
    std::vector<TopkEntry> topk;
    std::vector<ConfusionReport> confusion;
    std::vector<CodeLengthEntry> code_lengths;
};

nlohmann::json to_json(const EvalReport& report);
std::string format_report(const EvalReport& report);

}  // namespace plexquery
