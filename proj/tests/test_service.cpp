#include <gtest/gtest.h>

#include <png.h>

#include <future>
#include <thread>

#include <httplib.h>

#include "index_fixture.hpp"
#include "plexquery/service.hpp"
#include "test_util.hpp"

using namespace plexquery;
using nlohmann::json;

namespace {

Manifest toy_manifest() {
    Manifest m;
    m.width = 100;
    m.height = 40;
    for (const char* name : {"m0", "m1", "m2", "m3"}) m.channels.push_back({name, std::string(name) + ".raw"});
    return m;
}

/// raw(c, x, y) = (c + 1) * (x + 100 y)
MultiplexImage ramp_image() {
    MultiplexImage img;
    img.manifest = toy_manifest();
    for (std::size_t c = 0; c < 4; ++c) {
        std::vector<std::uint16_t> plane;
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 100; ++x) plane.push_back(static_cast<std::uint16_t>((c + 1) * (x + 100 * y)));
        img.planes.push_back(plane);
    }
    return img;
}

struct Gray {
    int width = 0, height = 0;
    std::vector<std::uint8_t> pixels;
};

Gray decode(const std::string& bytes) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    EXPECT_TRUE(png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()));
    image.format = PNG_FORMAT_GRAY;
    Gray g{static_cast<int>(image.width), static_cast<int>(image.height), {}};
    g.pixels.resize(PNG_IMAGE_SIZE(image));
    EXPECT_TRUE(png_image_finish_read(&image, nullptr, g.pixels.data(), 0, nullptr));
    return g;
}

Service make_service(bool with_image = true) {
    return Service(toy_manifest(), fixtures::toy_index(),
                   with_image ? std::optional<MultiplexImage>(ramp_image()) : std::nullopt);
}

ApiResponse post(const Service& s, const std::string& path, const json& body) {
    return s.handle("POST", path, {}, body.dump());
}

std::string error_code(const ApiResponse& r) { return json::parse(r.body).at("code"); }

}  // namespace

TEST(ErrorMapping, StatusAndWireCodes) {
    EXPECT_EQ(api_error_for(ErrorCode::UnknownCell), (std::pair<int, std::string>{404, "unknown_cell"}));
    EXPECT_EQ(api_error_for(ErrorCode::OutlierQuery), (std::pair<int, std::string>{409, "outlier_query"}));
    EXPECT_EQ(api_error_for(ErrorCode::CapabilityMissing), (std::pair<int, std::string>{501, "capability_missing"}));
    for (auto c : {ErrorCode::InvalidArgument, ErrorCode::UnknownPanelSet, ErrorCode::NoUsableFeatures,
                   ErrorCode::EmptySet, ErrorCode::UnknownCommunity})
        EXPECT_EQ(api_error_for(c).first, 422);
    EXPECT_EQ(api_error_for(ErrorCode::IoError), (std::pair<int, std::string>{500, "internal"}));
}

TEST(Service, ManifestAndPanels) {
    const auto s = make_service();
    const auto m = json::parse(s.handle("GET", "/api/manifest", {}, "").body);
    EXPECT_EQ(m.at("width"), 100);
    EXPECT_EQ(m.at("markers"), json({"m0", "m1", "m2", "m3"}));
    EXPECT_EQ(m.at("cells"), 13);
    const auto p = json::parse(s.handle("GET", "/api/panels", {}, "").body);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p[0].at("name"), "a");
    EXPECT_EQ(p[0].at("outliers"), 1);
    EXPECT_EQ(p[0].at("communities"), 2);
}

TEST(Service, QueryModesMatchLibrary) {
    const auto s = make_service();
    const auto& index = s.index();
    auto r = post(s, "/api/query", {{"cell_id", 104}, {"panels", {"a"}}, {"n", 4}});
    ASSERT_EQ(r.status, 200);
    auto j = json::parse(r.body);
    EXPECT_EQ(j.at("cell_ids").get<std::vector<std::int64_t>>(), topn_cosine(index, "a", 104, 4).cell_ids);
    EXPECT_EQ(j.at("query"), 104);
    EXPECT_EQ(j.at("profile").size(), 4u);

    j = json::parse(post(s, "/api/query", {{"cell_id", 104}, {"panels", {"b"}}, {"mode", "community"}}).body);
    EXPECT_EQ(j.at("cell_ids").get<std::vector<std::int64_t>>(), community_retrieve(index, "b", 104).cell_ids);
    const auto profile = expression_profile(index, community_retrieve(index, "b", 104).cell_ids);
    EXPECT_EQ(j.at("profile"), to_json(profile));

    j = json::parse(post(s, "/api/query", {{"cell_id", 110}, {"panels", {"b", "a"}}, {"mode", "fused"}}).body);
    EXPECT_EQ(j.at("mode"), "fused");
    EXPECT_EQ(j.at("panels"), json({"a", "b"}));
    EXPECT_EQ(j.at("cell_ids").get<std::vector<std::int64_t>>(), fused_retrieve(index, {"a", "b"}, 110).cell_ids);

    // Default n is 500, capped by the index size.
    j = json::parse(post(s, "/api/query", {{"cell_id", 104}, {"panels", {"a"}}}).body);
    EXPECT_EQ(j.at("cell_ids").size(), 12u);
}

TEST(Service, QueryErrors) {
    const auto s = make_service();
    auto r = post(s, "/api/query", {{"cell_id", 104}, {"panels", {"a"}}, {"n", 0}});
    EXPECT_EQ(r.status, 422);
    EXPECT_EQ(error_code(r), "bad_request");
    r = post(s, "/api/query", {{"cell_id", 999}, {"panels", {"a"}}});
    EXPECT_EQ(r.status, 404);
    EXPECT_EQ(error_code(r), "unknown_cell");
    r = post(s, "/api/query", {{"cell_id", 113}, {"panels", {"a"}}, {"mode", "community"}});
    EXPECT_EQ(r.status, 409);
    EXPECT_EQ(error_code(r), "outlier_query");
    EXPECT_EQ(post(s, "/api/query", {{"cell_id", 104}, {"panels", {"zz"}}}).status, 422);
    EXPECT_EQ(post(s, "/api/query", {{"cell_id", 104}, {"panels", {"a"}}, {"mode", "fused"}}).status, 422);
    EXPECT_EQ(post(s, "/api/query", {{"cell_id", 104}, {"panels", {"a", "b"}}, {"mode", "topn"}}).status, 422);
    EXPECT_EQ(post(s, "/api/query", {{"cell_id", 104}, {"panels", {"a"}}, {"mode", "psychic"}}).status, 422);
    EXPECT_EQ(post(s, "/api/query", {{"panels", {"a"}}}).status, 422);
    EXPECT_EQ(post(s, "/api/query", {{"cell_id", "x"}, {"panels", {"a"}}}).status, 422);
    EXPECT_EQ(s.handle("POST", "/api/query", {}, "{not json").status, 422);
    EXPECT_EQ(s.handle("POST", "/api/query", {}, "[1]").status, 422);
    r = s.handle("GET", "/api/nothing", {}, "");
    EXPECT_EQ(r.status, 404);
    EXPECT_EQ(s.handle("DELETE", "/api/manifest", {}, "").status, 404);
}

TEST(Service, QuickSearchAndCommunities) {
    const auto s = make_service();
    const auto r = post(s, "/api/quick-search", {{"cell_id", 103}, {"features", {"m0", "m2"}}, {"n", 3}});
    ASSERT_EQ(r.status, 200);
    const auto j = json::parse(r.body);
    const auto want = quick_search(s.index(), 103, {"m0", "m2"}, 3);
    EXPECT_EQ(j.at("cell_ids").get<std::vector<std::int64_t>>(), want.result.cell_ids);
    ASSERT_EQ(j.at("similarity").size(), 3u);
    for (std::size_t a = 0; a < 3; ++a) {
        EXPECT_EQ(j.at("similarity")[a][a], 1.0);
        for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(j.at("similarity")[a][b], j.at("similarity")[b][a]);
    }
    EXPECT_EQ(post(s, "/api/quick-search", {{"cell_id", 103}, {"features", {"m0"}}, {"n", 0}}).status, 422);

    auto c = json::parse(s.handle("GET", "/api/communities", {{"panels", "a"}}, "").body);
    EXPECT_EQ(c.at("cells").size(), 13u);
    EXPECT_EQ(c.at("cells")[12].at("community"), -1);
    c = json::parse(s.handle("GET", "/api/communities", {{"panels", "b,a"}}, "").body);
    EXPECT_EQ(c.at("panels"), json({"a", "b"}));
    EXPECT_EQ(c.at("code_length"), s.index().fused({"a", "b"})->partition.code_length);
    EXPECT_EQ(s.handle("GET", "/api/communities", {}, "").status, 422);
    EXPECT_EQ(s.handle("GET", "/api/communities", {{"panels", "a,x"}}, "").status, 422);
}

TEST(Service, TileBlockMeansAndStretch) {
    const auto s = make_service();
    const auto r = s.handle("GET", "/api/tile", {{"ch", "m0"}, {"x0", "0"}, {"y0", "0"}, {"w", "6"}, {"h", "2"}, {"scale", "2"}}, "");
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.content_type, "image/png");
    const auto g = decode(r.body);
    ASSERT_EQ(g.width, 3);
    ASSERT_EQ(g.height, 1);
    // Block means 50.5, 52.5, 54.5 stretched to 0..255.
    EXPECT_EQ(g.pixels, (std::vector<std::uint8_t>{0, 128, 255}));
    // Partial trailing block averages what it covers.
    const auto odd = decode(s.handle("GET", "/api/tile", {{"ch", "m1"}, {"w", "5"}, {"h", "1"}, {"scale", "2"}}, "").body);
    EXPECT_EQ(odd.width, 3);
    EXPECT_EQ(odd.pixels, (std::vector<std::uint8_t>{0, 146, 255}));  // means 1, 5, 8 -> 0, 4/7, 1

    EXPECT_EQ(s.handle("GET", "/api/tile", {{"ch", "m0"}, {"x0", "95"}, {"w", "10"}}, "").status, 422);
    EXPECT_EQ(s.handle("GET", "/api/tile", {{"ch", "m0"}, {"scale", "0"}}, "").status, 422);
    EXPECT_EQ(s.handle("GET", "/api/tile", {{"ch", "nope"}}, "").status, 422);
    EXPECT_EQ(s.handle("GET", "/api/tile", {{"x0", "0"}}, "").status, 422);
    EXPECT_EQ(s.handle("GET", "/api/tile", {{"ch", "m0"}, {"w", "abc"}}, "").status, 422);
    const auto blind = make_service(false);
    const auto missing = blind.handle("GET", "/api/tile", {{"ch", "m0"}}, "");
    EXPECT_EQ(missing.status, 501);
    EXPECT_EQ(error_code(missing), "capability_missing");
}

TEST(Service, PatchStripOfPanelChannels) {
    const auto s = make_service();
    // Cell 101 sits at (10, 20); panel a reads m0 and m1.
    const auto r = s.handle("GET", "/api/patch", {{"cell_id", "101"}, {"panel", "a"}, {"size", "3"}}, "");
    ASSERT_EQ(r.status, 200);
    const auto g = decode(r.body);
    ASSERT_EQ(g.width, 3 * 2 + 2);
    ASSERT_EQ(g.height, 3);
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                const double raw = (c + 1) * ((9 + j) + 100 * (19 + i));
                const auto want = static_cast<std::uint8_t>(std::lround(255.0 * raw / 65535.0));
                EXPECT_EQ(g.pixels[static_cast<std::size_t>(i * g.width + c * 5 + j)], want);
            }
        }
        EXPECT_EQ(g.pixels[3], 0);  // gap column
    }
    EXPECT_EQ(s.handle("GET", "/api/patch", {{"cell_id", "101"}, {"panel", "a"}, {"size", "0"}}, "").status, 422);
    EXPECT_EQ(s.handle("GET", "/api/patch", {{"cell_id", "101"}, {"panel", "a"}, {"size", "513"}}, "").status, 422);
    EXPECT_EQ(s.handle("GET", "/api/patch", {{"cell_id", "7"}, {"panel", "a"}}, "").status, 404);
    EXPECT_EQ(make_service(false).handle("GET", "/api/patch", {{"cell_id", "101"}, {"panel", "a"}}, "").status, 501);
    // Default size is the panel's patch size.
    EXPECT_EQ(decode(s.handle("GET", "/api/patch", {{"cell_id", "101"}, {"panel", "a"}}, "").body).height, 9);
}

TEST(Http, MatchesHandlerAndServesConcurrently) {
    const auto s = make_service();
    HttpServer server(s);
    const int port = server.start("127.0.0.1", 0);
    ASSERT_GT(port, 0);
    httplib::Client client("127.0.0.1", port);

    auto res = client.Get("/api/panels");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->body, s.handle("GET", "/api/panels", {}, "").body);
    EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");

    res = client.Get("/api/tile?ch=m2&w=6&h=2&scale=2");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->body, s.handle("GET", "/api/tile", {{"ch", "m2"}, {"w", "6"}, {"h", "2"}, {"scale", "2"}}, "").body);

    const json bad{{"cell_id", 104}, {"panels", {"a"}}, {"n", 0}};
    res = client.Post("/api/query", bad.dump(), "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 422);
    res = client.Options("/api/query");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 204);

    std::vector<std::future<bool>> jobs;
    for (int t = 0; t < 8; ++t) {
        jobs.push_back(std::async(std::launch::async, [&, t] {
            httplib::Client c("127.0.0.1", port);
            bool ok = true;
            for (int k = 0; k < 10; ++k) {
                const std::int64_t cell = 101 + (t + k) % 12;
                const json body{{"cell_id", cell}, {"panels", {"a", "b"}}, {"mode", "fused"}};
                const auto r = c.Post("/api/query", body.dump(), "application/json");
                const auto direct = post(s, "/api/query", body);
                ok = ok && r && r->status == direct.status && r->body == direct.body;
            }
            return ok;
        }));
    }
    for (auto& j : jobs) EXPECT_TRUE(j.get());
    server.stop();
}
