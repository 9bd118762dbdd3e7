#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "plexquery/error.hpp"
#include "plexquery/ingest.hpp"
#include "plexquery/query.hpp"

namespace plexquery {

struct ApiResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

/// HTTP status and wire code for a library error.
std::pair<int, std::string> api_error_for(ErrorCode code);
ApiResponse api_error(int status, const std::string& code, const std::string& message);

/// Route handlers over one immutable index snapshot. `handle` is a pure
/// function of its arguments (plus the fused-partition cache) and is safe to
/// call concurrently.
class Service {
public:
    /// The image is optional; without it /api/tile and /api/patch answer 501.
    Service(Manifest manifest, SearchIndex index, std::optional<MultiplexImage> image = {},
            ScalingOptions scaling = {});

    ApiResponse handle(const std::string& method, const std::string& path,
                       const std::map<std::string, std::string>& params, const std::string& body) const;

    const SearchIndex& index() const { return index_; }

private:
    ApiResponse manifest() const;
    ApiResponse panels() const;
    ApiResponse tile(const std::map<std::string, std::string>& params) const;
    ApiResponse communities(const std::map<std::string, std::string>& params) const;
    ApiResponse query(const nlohmann::json& request) const;
    ApiResponse quick_search(const nlohmann::json& request) const;
    ApiResponse patch(const std::map<std::string, std::string>& params) const;

    Manifest manifest_;
    SearchIndex index_;
    std::optional<MultiplexImage> image_;
    std::vector<double> scales_;
};

/// Result payloads shared by the service and the CLI's --json output.
nlohmann::json to_json(const RetrievalResult& r);
nlohmann::json to_json(const std::vector<MarkerProfile>& profile);

/// HTTP listener dispatching /api/* to a Service.
class HttpServer {
public:
    explicit HttpServer(const Service& service, std::optional<std::string> static_dir = {});
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds and starts serving on a background thread; port 0 picks a free
    /// port. Returns the bound port.
    int start(const std::string& host, int port);
    /// Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace plexquery
