#include "plexquery/service.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "plexquery/png.hpp"

namespace plexquery {

namespace {

ApiResponse json_response(const nlohmann::json& j) { return {200, "application/json", j.dump()}; }

ApiResponse bad_request(const std::string& message) { return api_error(422, "bad_request", message); }

/// Query parameter parsing; missing or malformed values throw InvalidArgument.
long long int_param(const std::map<std::string, std::string>& params, const std::string& name,
                    std::optional<long long> fallback = {}) {
    const auto it = params.find(name);
    if (it == params.end() || it->second.empty()) {
        if (fallback) return *fallback;
        throw Error(ErrorCode::InvalidArgument, "missing parameter '" + name + "'");
    }
    long long v = 0;
    const auto& s = it->second;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(ErrorCode::InvalidArgument, "parameter '" + name + "' must be an integer");
    }
    return v;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T>
T body_field(const nlohmann::json& j, const char* name) {
    if (!j.contains(name)) throw Error(ErrorCode::InvalidArgument, std::string("missing field '") + name + "'");
    try {
        return j.at(name).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::InvalidArgument, std::string("field '") + name + "' has the wrong type");
    }
}

std::size_t count_field(const nlohmann::json& j, const char* name, long long fallback) {
    const long long n = j.contains(name) ? body_field<long long>(j, name) : fallback;
    if (n < 1) throw Error(ErrorCode::InvalidArgument, std::string("'") + name + "' must be >= 1");
    return static_cast<std::size_t>(n);
}

}  // namespace

std::pair<int, std::string> api_error_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownCell:
            return {404, "unknown_cell"};
        case ErrorCode::OutlierQuery:
            return {409, "outlier_query"};
        case ErrorCode::CapabilityMissing:
            return {501, "capability_missing"};
        case ErrorCode::InvalidArgument:
        case ErrorCode::UnknownPanelSet:
        case ErrorCode::UnknownCommunity:
        case ErrorCode::NoUsableFeatures:
        case ErrorCode::SchemaError:
        case ErrorCode::ParseError:
        case ErrorCode::EmptySet:
        case ErrorCode::OutOfBounds:
            return {422, "bad_request"};
        default:
            return {500, "internal"};
    }
}

ApiResponse api_error(int status, const std::string& code, const std::string& message) {
    return {status, "application/json", nlohmann::json{{"code", code}, {"message", message}}.dump()};
}

nlohmann::json to_json(const RetrievalResult& r) {
    return {{"mode", r.mode}, {"panels", r.panels}, {"cell_ids", r.cell_ids}, {"scores", r.scores}};
}

nlohmann::json to_json(const std::vector<MarkerProfile>& profile) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& m : profile) out.push_back({{"marker", m.marker}, {"mean", m.mean}, {"std", m.std}});
    return out;
}

Service::Service(Manifest manifest, SearchIndex index, std::optional<MultiplexImage> image, ScalingOptions scaling)
    : manifest_(std::move(manifest)), index_(std::move(index)), image_(std::move(image)) {
    if (image_) scales_ = channel_scales(*image_, scaling);
}

ApiResponse Service::handle(const std::string& method, const std::string& path,
                            const std::map<std::string, std::string>& params, const std::string& body) const {
    try {
        if (method == "GET") {
            if (path == "/api/manifest") return manifest();
            if (path == "/api/panels") return panels();
            if (path == "/api/tile") return tile(params);
            if (path == "/api/communities") return communities(params);
            if (path == "/api/patch") return patch(params);
        } else if (method == "POST" && (path == "/api/query" || path == "/api/quick-search")) {
            nlohmann::json request;
            try {
                request = nlohmann::json::parse(body);
            } catch (const nlohmann::json::exception&) {
                return bad_request("request body is not valid JSON");
            }
            if (!request.is_object()) return bad_request("request body must be a JSON object");
            return path == "/api/query" ? query(request) : quick_search(request);
        }
        return api_error(404, "bad_request", "no route for " + method + " " + path);
    } catch (const Error& e) {
        const auto [status, code] = api_error_for(e.code());
        return api_error(status, code, e.what());
    } catch (const std::exception& e) {
        return api_error(500, "internal", e.what());
    }
}

ApiResponse Service::manifest() const {
    return json_response({{"width", manifest_.width},
                          {"height", manifest_.height},
                          {"dtype", manifest_.dtype == PixelType::U8 ? "uint8" : "uint16"},
                          {"pixel_size_nm", manifest_.pixel_size_nm},
                          {"markers", manifest_.marker_names()},
                          {"cells", index_.size()}});
}

ApiResponse Service::panels() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : index_.panels()) {
        out.push_back({{"name", p.panel.name},
                       {"markers", p.panel.markers},
                       {"patch_size", p.patch_size},
                       {"communities", p.partition.community_count},
                       {"outliers", p.partition.outlier_count()},
                       {"code_length", p.partition.code_length},
                       {"has_embeddings", p.has_embeddings}});
    }
    return json_response(out);
}

ApiResponse Service::tile(const std::map<std::string, std::string>& params) const {
    if (!image_) throw Error(ErrorCode::CapabilityMissing, "this index was loaded without the image");
    const auto ch_it = params.find("ch");
    if (ch_it == params.end()) return bad_request("missing parameter 'ch'");
    const std::size_t channel = manifest_.channel_index(ch_it->second);
    const long long x0 = int_param(params, "x0", 0), y0 = int_param(params, "y0", 0);
    const long long w = int_param(params, "w", manifest_.width - x0), h = int_param(params, "h", manifest_.height - y0);
    const long long scale = int_param(params, "scale", 1);
    if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > manifest_.width || y0 + h > manifest_.height) {
        return bad_request("tile window lies outside the image");
    }
    if (scale < 1) return bad_request("scale must be >= 1");
    const int out_w = static_cast<int>((w + scale - 1) / scale), out_h = static_cast<int>((h + scale - 1) / scale);

    // Block means, then a linear stretch of this window's own range.
    std::vector<double> values(static_cast<std::size_t>(out_w) * static_cast<std::size_t>(out_h));
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            double sum = 0.0;
            int count = 0;
            for (long long y = y0 + oy * scale; y < std::min(y0 + h, y0 + (oy + 1) * scale); ++y) {
                for (long long x = x0 + ox * scale; x < std::min(x0 + w, x0 + (ox + 1) * scale); ++x) {
                    sum += image_->raw(channel, static_cast<int>(x), static_cast<int>(y));
                    ++count;
                }
            }
            values[static_cast<std::size_t>(oy) * static_cast<std::size_t>(out_w) + static_cast<std::size_t>(ox)] =
                sum / count;
        }
    }
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double min = *lo, range = *hi - *lo;
    Image8 img{out_w, out_h, 1, std::vector<std::uint8_t>(values.size(), 0)};
    if (range > 0.0) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (values[i] - min) / range));
        }
    }
    return {200, "image/png", encode_png(img)};
}

ApiResponse Service::communities(const std::map<std::string, std::string>& params) const {
    const auto it = params.find("panels");
    const auto names = it == params.end() ? std::vector<std::string>{} : split_list(it->second);
    if (names.empty()) return bad_request("missing parameter 'panels'");
    const CommunityPartition* partition = nullptr;
    std::shared_ptr<const FusedPartition> fused;
    std::vector<std::string> used = names;
    if (names.size() == 1) {
        partition = &index_.panel(names.front()).partition;
    } else {
        fused = index_.fused(names);
        partition = &fused->partition;
        used = fused->panels;
    }
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t r = 0; r < index_.size(); ++r) {
        const auto& c = index_.cells()[r];
        cells.push_back({{"cell_id", c.cell_id}, {"x", c.x}, {"y", c.y}, {"community", partition->labels[r]}});
    }
    return json_response({{"panels", used},
                          {"community_count", partition->community_count},
                          {"code_length", partition->code_length},
                          {"cells", cells}});
}

ApiResponse Service::query(const nlohmann::json& request) const {
    const auto cell = body_field<std::int64_t>(request, "cell_id");
    const auto panels = body_field<std::vector<std::string>>(request, "panels");
    const auto mode = request.contains("mode") ? body_field<std::string>(request, "mode") : std::string("topn");
    const std::size_t n = count_field(request, "n", 500);
    if (panels.empty()) return bad_request("'panels' must not be empty");

    RetrievalResult result;
    if (mode == "topn" || mode == "community") {
        if (panels.size() != 1) return bad_request("mode '" + mode + "' takes exactly one panel");
        result = mode == "topn" ? topn_cosine(index_, panels.front(), cell, n)
                                : community_retrieve(index_, panels.front(), cell);
    } else if (mode == "fused") {
        if (panels.size() < 2) return bad_request("mode 'fused' needs at least two panels");
        result = fused_retrieve(index_, panels, cell);
    } else {
        return bad_request("mode must be topn, community or fused");
    }
    nlohmann::json out = to_json(result);
    out["query"] = cell;
    out["profile"] = to_json(expression_profile(index_, result.cell_ids.empty()
                                                            ? std::vector<std::int64_t>{cell}
                                                            : result.cell_ids));
    return json_response(out);
}

ApiResponse Service::quick_search(const nlohmann::json& request) const {
    const auto cell = body_field<std::int64_t>(request, "cell_id");
    const auto features = body_field<std::vector<std::string>>(request, "features");
    const std::size_t n = count_field(request, "n", 500);
    const auto r = plexquery::quick_search(index_, cell, features, n);
    const std::size_t m = r.result.cell_ids.size();
    nlohmann::json sim = nlohmann::json::array();
    for (std::size_t a = 0; a < m; ++a) {
        sim.push_back(std::vector<double>(r.similarity.begin() + static_cast<std::ptrdiff_t>(a * m),
                                          r.similarity.begin() + static_cast<std::ptrdiff_t>((a + 1) * m)));
    }
    nlohmann::json out = to_json(r.result);
    out["query"] = cell;
    out["features_used"] = r.features_used;
    out["similarity"] = sim;
    return json_response(out);
}

ApiResponse Service::patch(const std::map<std::string, std::string>& params) const {
    if (!image_) throw Error(ErrorCode::CapabilityMissing, "this index was loaded without the image");
    const auto cell = index_.cells()[index_.row(int_param(params, "cell_id"))];
    const auto panel_it = params.find("panel");
    if (panel_it == params.end()) return bad_request("missing parameter 'panel'");
    const PanelIndex& panel = index_.panel(panel_it->second);
    const long long size = int_param(params, "size", panel.patch_size > 0 ? panel.patch_size : 25);
    if (size < 1 || size > 512) return bad_request("size must lie in 1..512");

    // One size x size tile per panel marker, left to right, 2 px apart.
    constexpr int gap = 2;
    const int s = static_cast<int>(size);
    const int channels = static_cast<int>(panel.panel.markers.size());
    Image8 img{channels * s + (channels - 1) * gap, s, 1, {}};
    img.pixels.assign(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height), 0);
    const int x0 = cell.px() - s / 2, y0 = cell.py() - s / 2;
    for (int c = 0; c < channels; ++c) {
        const std::size_t ch = manifest_.channel_index(panel.panel.markers[static_cast<std::size_t>(c)]);
        for (int i = 0; i < s; ++i) {
            for (int j = 0; j < s; ++j) {
                const int x = x0 + j, y = y0 + i;
                if (x < 0 || y < 0 || x >= manifest_.width || y >= manifest_.height) continue;
                const double v = std::min(1.0, image_->raw(ch, x, y) / scales_[ch]);
                img.pixels[static_cast<std::size_t>(i) * static_cast<std::size_t>(img.width) +
                           static_cast<std::size_t>(c * (s + gap) + j)] =
                    static_cast<std::uint8_t>(std::lround(255.0 * v));
            }
        }
    }
    return {200, "image/png", encode_png(img)};
}

struct HttpServer::Impl {
    const Service& service;
    httplib::Server server;
    std::thread thread;

    explicit Impl(const Service& s) : service(s) {}
};

HttpServer::HttpServer(const Service& service, std::optional<std::string> static_dir)
    : impl_(std::make_unique<Impl>(service)) {
    auto& server = impl_->server;
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> params;
        for (const auto& [k, v] : req.params) params.emplace(k, v);
        const ApiResponse r = impl_->service.handle(req.method, req.path, params, req.body);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server.Get(R"(/api/.*)", dispatch);
    server.Post(R"(/api/.*)", dispatch);
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    if (static_dir) server.set_mount_point("/", *static_dir);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
    auto& server = impl_->server;
    const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([&server] { server.listen_after_bind(); });
    server.wait_until_ready();
    return bound;
}

void HttpServer::listen(const std::string& host, int port) {
    if (!impl_->server.listen(host, port)) {
        throw Error(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
    }
}

void HttpServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace plexquery
