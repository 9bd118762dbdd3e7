#include "plexquery/persistence.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "plexquery/container.hpp"
#include "plexquery/error.hpp"

namespace plexquery {

namespace {

std::vector<std::string> expected_header(const std::vector<std::string>& panels, const std::vector<std::string>& markers) {
    std::vector<std::string> h{"cell_id", "x", "y"};
    for (const auto& p : panels) h.push_back(p + "_community");
    for (const auto& m : markers) h.push_back(m + "_mean");
    return h;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

template <typename T>
T parse_number(const std::string& s, std::size_t line) {
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": bad number '" + s + "'");
    }
    return v;
}

void put_real(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    out += buf;
}

}  // namespace

std::size_t export_index(const SearchIndex& index, const std::filesystem::path& path) {
    std::vector<std::string> panels;
    for (const auto& p : index.panels()) panels.push_back(p.panel.name);
    std::string text;
    const auto header = expected_header(panels, index.markers());
    for (std::size_t i = 0; i < header.size(); ++i) text += (i ? "," : "") + header[i];
    text += '\n';
    for (std::size_t r = 0; r < index.size(); ++r) {
        const auto& cell = index.cells()[r];
        text += std::to_string(cell.cell_id);
        text += ',';
        put_real(text, cell.x);
        text += ',';
        put_real(text, cell.y);
        for (const auto& p : index.panels()) text += "," + std::to_string(p.partition.labels[r]);
        for (double v : index.intensities(r)) {
            text += ',';
            put_real(text, v);
        }
        text += '\n';
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    f << text;
    if (!f) throw Error(ErrorCode::IoError, "write failed for " + path.string());
    return index.size();
}

SearchIndex load_index(const std::filesystem::path& path, const Manifest& manifest,
                       const std::vector<PanelDefinition>& panels, const IndexOptions& options) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorCode::MissingFile, path.string());
    const auto markers = manifest.marker_names();
    std::vector<std::string> panel_names;
    for (const auto& p : panels) {
        validate_panel(p, manifest);
        panel_names.push_back(p.name);
    }
    const auto header = expected_header(panel_names, markers);

    std::string line;
    if (!std::getline(f, line)) throw Error(ErrorCode::SchemaError, "empty index file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (split(line) != header) throw Error(ErrorCode::SchemaError, "unexpected index header: " + line);

    std::vector<CellRecord> cells;
    std::vector<double> intensities;
    std::vector<std::vector<int>> labels(panels.size());
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split(line);
        if (fields.size() != header.size()) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                                   std::to_string(header.size()) + " fields");
        }
        CellRecord c;
        c.cell_id = parse_number<std::int64_t>(fields[0], line_no);
        c.x = parse_number<double>(fields[1], line_no);
        c.y = parse_number<double>(fields[2], line_no);
        cells.push_back(c);
        for (std::size_t p = 0; p < panels.size(); ++p) {
            const int label = parse_number<int>(fields[3 + p], line_no);
            if (label < -1) throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad community");
            labels[p].push_back(label < 0 ? kOutlier : label);
        }
        for (std::size_t m = 0; m < markers.size(); ++m) {
            intensities.push_back(parse_number<double>(fields[3 + panels.size() + m], line_no));
        }
    }

    std::vector<PanelIndex> built;
    for (std::size_t p = 0; p < panels.size(); ++p) {
        PanelIndex pi;
        pi.panel = panels[p];
        pi.partition.labels = std::move(labels[p]);
        int top = -1;
        for (int l : pi.partition.labels) top = std::max(top, l);
        pi.partition.community_count = static_cast<std::size_t>(top + 1);
        built.push_back(std::move(pi));
    }
    return SearchIndex::from_table(std::move(cells), markers, std::move(intensities), std::move(built), options);
}

void save_panel_snapshot(const PanelArtifacts& a, const std::filesystem::path& path) {
    const std::size_t n = a.embeddings.size();
    if (a.graph.node_count() != n || a.partition.labels.size() != n) {
        throw Error(ErrorCode::ShapeMismatch, "panel artifacts disagree on the cell count");
    }
    Container c;
    c.kind = ContainerKind::PanelSnapshot;
    std::vector<double> ids, coords, labels, edges;
    for (std::size_t i = 0; i < n; ++i) {
        if (a.embeddings.cell_ids[i] != a.graph.node_ids[i]) {
            throw Error(ErrorCode::NodeSetMismatch, "embedding and graph rows are not aligned");
        }
        ids.push_back(static_cast<double>(a.embeddings.cell_ids[i]));
        coords.push_back(a.graph.coords[i].x);
        coords.push_back(a.graph.coords[i].y);
        labels.push_back(a.partition.labels[i]);
    }
    for (const auto& e : a.graph.edges) {
        edges.push_back(static_cast<double>(e.i));
        edges.push_back(static_cast<double>(e.j));
        edges.push_back(e.weight);
    }
    c.put("cell_ids", n, 1, std::move(ids));
    c.put("coords", n, 2, std::move(coords));
    c.put("features", n, a.embeddings.dim, a.embeddings.features);
    c.put("edges", a.graph.edges.size(), 3, std::move(edges));
    c.put("labels", n, 1, std::move(labels));
    c.put("partition", 1, 2,
          {static_cast<double>(a.partition.community_count), a.partition.code_length});
    write_container(c, path);

    nlohmann::json meta{{"panel", a.panel.name}, {"markers", a.panel.markers}, {"patch_size", a.patch_size}};
    std::ofstream side(path.string() + ".json");
    if (!side) throw Error(ErrorCode::IoError, "cannot write " + path.string() + ".json");
    side << meta.dump(2) << '\n';
}

PanelArtifacts load_panel_snapshot(const std::filesystem::path& path) {
    const std::filesystem::path side_path = path.string() + ".json";
    std::ifstream side(side_path);
    if (!side) throw Error(ErrorCode::MissingFile, side_path.string());
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(side);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, side_path.string() + ": " + e.what());
    }
    PanelArtifacts a;
    try {
        a.panel.name = meta.at("panel").get<std::string>();
        a.panel.markers = meta.at("markers").get<std::vector<std::string>>();
        a.patch_size = meta.at("patch_size").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, side_path.string() + ": " + e.what());
    }

    const Container c = read_container(path, ContainerKind::PanelSnapshot);
    const Matrix& ids = c.get("cell_ids", 0, 1);
    const std::size_t n = ids.rows;
    const Matrix& coords = c.get("coords", n, 2);
    const Matrix& features = c.get("features", n, 0);
    const Matrix& edges = c.get("edges", 0, 3);
    const Matrix& labels = c.get("labels", n, 1);
    const Matrix& part = c.get("partition", 1, 2);

    a.embeddings.panel = a.panel.name;
    a.embeddings.dim = features.cols;
    a.embeddings.features = features.data;
    for (std::size_t i = 0; i < n; ++i) {
        const auto id = static_cast<std::int64_t>(ids.data[i]);
        a.embeddings.cell_ids.push_back(id);
        a.graph.node_ids.push_back(id);
        a.graph.coords.push_back({coords.data[2 * i], coords.data[2 * i + 1]});
        a.partition.labels.push_back(static_cast<int>(labels.data[i]));
    }
    for (std::size_t e = 0; e < edges.rows; ++e) {
        const auto i = static_cast<std::size_t>(edges.data[3 * e]);
        const auto j = static_cast<std::size_t>(edges.data[3 * e + 1]);
        if (i >= j || j >= n) throw Error(ErrorCode::SchemaError, "bad edge in panel snapshot");
        a.graph.edges.push_back({i, j, edges.data[3 * e + 2]});
    }
    a.partition.community_count = static_cast<std::size_t>(part.data[0]);
    a.partition.code_length = part.data[1];
    return a;
}

}  // namespace plexquery
