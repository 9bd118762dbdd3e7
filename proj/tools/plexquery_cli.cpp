#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "plexquery/community.hpp"
#include "plexquery/config.hpp"
#include "plexquery/error.hpp"
#include "plexquery/eval.hpp"
#include "plexquery/graph.hpp"
#include "plexquery/ingest.hpp"
#include "plexquery/parallel.hpp"
#include "plexquery/persistence.hpp"
#include "plexquery/pipeline.hpp"
#include "plexquery/query.hpp"
#include "plexquery/service.hpp"

using namespace plexquery;
using nlohmann::json;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool json_out = false;
    std::size_t threads = 0;
};

void add_common(CLI::App* app, Common& c, bool needs_config = true) {
    auto* opt = app->add_option("--config", c.config, "Project config JSON");
    if (needs_config) opt->required();
    app->add_option("--seed", c.seed, "Override every seed in the config");
    app->add_flag("--json", c.json_out, "Machine-readable JSON on stdout");
    app->add_option("--threads", c.threads, "Worker cap (default: PLEXQUERY_THREADS or all cores)");
}

ProjectConfig config_of(const Common& c) { return load_project_config(c.config, c.seed); }

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void emit(const Common& c, const json& j, const std::string& text) {
    if (c.json_out) {
        std::cout << j.dump() << '\n';
    } else {
        std::cout << text;
    }
}

std::string join(const std::vector<std::string>& v, const char* sep) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : sep) + s;
    return out;
}

std::string result_text(const RetrievalResult& r) {
    std::ostringstream out;
    out << r.mode << " [" << join(r.panels, ",") << "] " << r.cell_ids.size() << " cells\n";
    for (std::size_t i = 0; i < r.cell_ids.size(); ++i) {
        out << "  " << r.cell_ids[i];
        if (i < r.scores.size()) out << "  " << r.scores[i];
        out << '\n';
    }
    return out.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Query-driven multiplex tissue image search"};
    app.require_subcommand(1);

    Common common;

    // synth
    auto* synth = app.add_subcommand("synth", "Render a synthetic slide from a spec");
    std::string spec_path, synth_out;
    std::uint64_t synth_seed = 0;
    synth->add_option("--spec", spec_path, "Synthetic spec JSON")->required();
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("-o,--output", synth_out, "Output directory")->required();
    synth->add_flag("--json", common.json_out, "Machine-readable JSON on stdout");

    auto* ingest = app.add_subcommand("ingest", "Validate the image, centroids and panels");
    add_common(ingest, common);

    auto* train = app.add_subcommand("train", "Train panel encoders");
    add_common(train, common);
    std::string train_panel_name;
    train->add_option("--panel", train_panel_name, "Panel to train (default: all)");

    auto* communities = app.add_subcommand("communities", "Summarize a panel's communities");
    add_common(communities, common);
    std::string comm_panel;
    communities->add_option("--panel", comm_panel, "Panel")->required();

    auto* fuse = app.add_subcommand("fuse", "Fuse panel graphs and detect communities");
    add_common(fuse, common);
    std::string fuse_panels;
    fuse->add_option("--panels", fuse_panels, "Comma-separated panels (>= 2)")->required();

    auto* query = app.add_subcommand("query", "Retrieve cells similar to a query cell");
    add_common(query, common);
    std::int64_t query_cell = 0;
    std::string query_panels, query_mode = "topn", query_index;
    std::size_t query_n = 10;
    query->add_option("--cell", query_cell, "Query cell id")->required();
    query->add_option("--panels,--panel", query_panels, "Comma-separated panels")->required();
    query->add_option("--mode", query_mode, "topn | community | fused")
        ->check(CLI::IsMember({"topn", "community", "fused"}));
    query->add_option("-n", query_n, "Result count for topn")->check(CLI::PositiveNumber);
    query->add_option("--index", query_index, "Answer from a community index CSV instead of snapshots");

    auto* quick = app.add_subcommand("quick-search", "Model-free retrieval over marker means");
    add_common(quick, common);
    std::int64_t quick_cell = 0;
    std::string quick_features;
    std::size_t quick_n = 10;
    quick->add_option("--cell", quick_cell, "Query cell id")->required();
    quick->add_option("--features", quick_features, "Comma-separated markers (default: all)");
    quick->add_option("-n", quick_n, "Result count")->check(CLI::PositiveNumber);

    auto* eval = app.add_subcommand("eval", "Top-k, confusion/IoU and code-length report");
    add_common(eval, common);
    std::size_t eval_queries = 200;
    eval->add_option("--queries", eval_queries, "Top-k query count");

    auto* export_cmd = app.add_subcommand("export-index", "Write the community index CSV");
    add_common(export_cmd, common);
    std::string export_path;
    export_cmd->add_option("-o,--output", export_path, "CSV path (default: <output>/community_index.csv)");

    auto* serve = app.add_subcommand("serve", "HTTP API over the index");
    add_common(serve, common);
    int serve_port = 8080;
    std::string serve_host = "127.0.0.1", serve_index, serve_static;
    serve->add_option("--port", serve_port, "Port");
    serve->add_option("--host", serve_host, "Bind address");
    serve->add_option("--index", serve_index, "Serve a community index CSV instead of snapshots");
    serve->add_option("--static", serve_static, "Directory of viewer assets to serve at /");

    CLI11_PARSE(app, argc, argv);

    try {
        if (common.threads > 0) set_thread_count(common.threads);

        if (synth->parsed()) {
            std::ifstream f(spec_path);
            if (!f) throw Error(ErrorCode::MissingFile, spec_path);
            json j;
            try {
                j = json::parse(f);
            } catch (const json::exception& e) {
                throw Error(ErrorCode::SchemaError, spec_path + ": " + e.what());
            }
            const auto data = generate_synthetic(synthetic_spec_from_json(j), synth_seed);
            save_synthetic(data, synth_out);
            emit(common,
                 {{"output", synth_out}, {"cells", data.cells.size()}, {"channels", data.image.manifest.channel_count()}},
                 "wrote " + std::to_string(data.cells.size()) + " cells to " + synth_out + "\n");
            return 0;
        }

        const ProjectConfig cfg = config_of(common);

        if (ingest->parsed()) {
            const Workspace ws = load_workspace(cfg);
            json panels = json::array();
            std::string text = std::to_string(ws.image.width()) + "x" + std::to_string(ws.image.height()) + ", " +
                               std::to_string(ws.image.manifest.channel_count()) + " channels, " +
                               std::to_string(ws.cells.size()) + " cells\n";
            for (const auto& p : cfg.panels) {
                const auto patches = extract_patches(ws.image, ws.cells, p.panel, p.patch_size, cfg.scaling);
                panels.push_back({{"name", p.panel.name},
                                  {"patch_size", p.patch_size},
                                  {"cells", patches.size()},
                                  {"dropped", patches.dropped}});
                text += "  " + p.panel.name + ": " + std::to_string(patches.size()) + " patches, " +
                        std::to_string(patches.dropped) + " dropped at the border\n";
            }
            emit(common,
                 {{"width", ws.image.width()},
                  {"height", ws.image.height()},
                  {"markers", ws.image.manifest.marker_names()},
                  {"cells", ws.cells.size()},
                  {"panels", panels}},
                 text);
            return 0;
        }

        if (train->parsed()) {
            const Workspace ws = load_workspace(cfg);
            std::vector<std::string> names;
            if (train_panel_name.empty()) {
                for (const auto& p : cfg.panels) names.push_back(p.panel.name);
            } else {
                names.push_back(cfg.panel(train_panel_name).panel.name);
            }
            json out = json::array();
            std::string text;
            for (const auto& name : names) {
                const auto s = run_training(cfg, ws, name);
                json trace = json::array();
                for (const auto& r : s.log) trace.push_back(r.code_length);
                out.push_back({{"panel", s.panel},
                               {"cells", s.cells},
                               {"dropped", s.dropped},
                               {"epochs", s.log.size() - 1},
                               {"code_lengths", trace},
                               {"communities", s.log.back().communities}});
                char line[160];
                std::snprintf(line, sizeof line, "%s: %zu epochs, code length %.6f -> %.6f, %zu communities\n",
                              s.panel.c_str(), s.log.size() - 1, s.log.front().code_length,
                              s.log.back().code_length, s.log.back().communities);
                text += line;
            }
            emit(common, out, text);
            return 0;
        }

        if (communities->parsed()) {
            const auto a = load_panel_snapshot(cfg.snapshot_path(cfg.panel(comm_panel).panel.name));
            const auto sizes = a.partition.community_sizes();
            std::string text = comm_panel + ": " + std::to_string(a.partition.community_count) +
                               " communities, " + std::to_string(a.partition.outlier_count()) +
                               " outliers, code length " + std::to_string(a.partition.code_length) + "\n";
            for (std::size_t k = 0; k < sizes.size(); ++k) {
                text += "  " + std::to_string(k) + ": " + std::to_string(sizes[k]) + "\n";
            }
            emit(common,
                 {{"panel", comm_panel},
                  {"communities", a.partition.community_count},
                  {"outliers", a.partition.outlier_count()},
                  {"code_length", a.partition.code_length},
                  {"sizes", sizes}},
                 text);
            return 0;
        }

        if (fuse->parsed()) {
            const Workspace ws = load_workspace(cfg);
            const SearchIndex index = build_index(cfg, ws);
            const auto fused = index.fused(split_list(fuse_panels));
            const auto dir = cfg.output / ("fused_" + join(fused->panels, "+"));
            save_partition(fused->graph, fused->partition, dir / "partition.csv");
            save_edge_list(fused->graph, dir / "edges.csv");
            json singles = json::object();
            for (const auto& n : fused->panels) singles[n] = index.panel(n).partition.code_length;
            emit(common,
                 {{"panels", fused->panels},
                  {"edges", fused->graph.edges.size()},
                  {"communities", fused->partition.community_count},
                  {"code_length", fused->partition.code_length},
                  {"single_code_lengths", singles}},
                 join(fused->panels, "+") + ": " + std::to_string(fused->partition.community_count) +
                     " communities, code length " + std::to_string(fused->partition.code_length) + "\n");
            return 0;
        }

        if (query->parsed()) {
            const auto panels = split_list(query_panels);
            std::optional<Workspace> ws;
            const SearchIndex index = [&] {
                if (!query_index.empty()) {
                    return load_index(query_index, load_manifest(cfg.manifest), cfg.panel_definitions(), cfg.index);
                }
                ws = load_workspace(cfg);
                return build_index(cfg, *ws);
            }();
            RetrievalResult r;
            if (query_mode == "fused") {
                r = fused_retrieve(index, panels, query_cell);
            } else if (panels.size() != 1) {
                throw Error(ErrorCode::InvalidArgument, "mode '" + query_mode + "' takes exactly one panel");
            } else if (query_mode == "topn") {
                r = topn_cosine(index, panels.front(), query_cell, query_n);
            } else {
                r = community_retrieve(index, panels.front(), query_cell);
            }
            json out = to_json(r);
            out["query"] = query_cell;
            out["profile"] = to_json(expression_profile(index, r.cell_ids.empty() ? std::vector<std::int64_t>{query_cell}
                                                                                   : r.cell_ids));
            emit(common, out, result_text(r));
            return 0;
        }

        if (quick->parsed()) {
            const Workspace ws = load_workspace(cfg);
            const SearchIndex index = build_index(cfg, ws);
            auto features = split_list(quick_features);
            if (features.empty()) features = index.markers();
            const auto r = quick_search(index, quick_cell, features, quick_n);
            json out = to_json(r.result);
            out["query"] = quick_cell;
            out["features_used"] = r.features_used;
            out["similarity"] = r.similarity;
            emit(common, out, result_text(r.result));
            return 0;
        }

        if (eval->parsed()) {
            const Workspace ws = load_workspace(cfg);
            const SearchIndex index = build_index(cfg, ws);
            EvalOptions options;
            options.queries = eval_queries;
            options.seed = cfg.index.seed;
            const auto report = run_evaluation(cfg, ws, index, options);
            const json j = to_json(report);
            std::filesystem::create_directories(cfg.output);
            std::ofstream(cfg.output / "eval_report.json") << j.dump(2) << '\n';
            std::ofstream(cfg.output / "eval_report.txt") << format_report(report);
            emit(common, j, format_report(report));
            return 0;
        }

        if (export_cmd->parsed()) {
            const Workspace ws = load_workspace(cfg);
            const SearchIndex index = build_index(cfg, ws);
            const std::filesystem::path path =
                export_path.empty() ? cfg.output / "community_index.csv" : std::filesystem::path(export_path);
            const std::size_t rows = export_index(index, path);
            emit(common, {{"path", path.string()}, {"rows", rows}},
                 "wrote " + std::to_string(rows) + " rows to " + path.string() + "\n");
            return 0;
        }

        if (serve->parsed()) {
            const Workspace ws = load_workspace(cfg);
            SearchIndex index = serve_index.empty()
                                    ? build_index(cfg, ws)
                                    : load_index(serve_index, ws.image.manifest, cfg.panel_definitions(), cfg.index);
            const Service service(ws.image.manifest, std::move(index), ws.image, cfg.scaling);
            HttpServer server(service, serve_static.empty() ? std::nullopt : std::optional<std::string>(serve_static));
            std::cerr << "serving on http://" << serve_host << ":" << serve_port << "\n";
            server.listen(serve_host, serve_port);
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}}.dump() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
        return 3;
    }
    return 0;
}
