#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "plexquery/ingest.hpp"
#include "plexquery/parallel.hpp"
#include "test_util.hpp"

using namespace plexquery;
using testutil::TempDir;

namespace {

/// Image whose raw value encodes (channel, x, y) so every pixel is distinguishable.
MultiplexImage coded_image(int w, int h, std::size_t channels) {
    MultiplexImage img;
    img.manifest.width = w;
    img.manifest.height = h;
    img.manifest.dtype = PixelType::U16;
    for (std::size_t c = 0; c < channels; ++c) {
        img.manifest.channels.push_back({"m" + std::to_string(c), "m" + std::to_string(c) + ".raw"});
        std::vector<std::uint16_t> plane(static_cast<std::size_t>(w * h));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) plane[static_cast<std::size_t>(y * w + x)] = static_cast<std::uint16_t>(c * 10000 + y * 100 + x);
        img.planes.push_back(plane);
    }
    return img;
}

PanelDefinition all_markers(const MultiplexImage& img, const std::string& name = "p") {
    return {name, img.manifest.marker_names()};
}

}  // namespace

class Quiet : public ::testing::Test {
protected:
    void SetUp() override { set_warnings_enabled(false); }
    void TearDown() override { set_warnings_enabled(true); }
};

using ManifestTest = Quiet;
using PatchTest = Quiet;
using SyntheticTest = Quiet;

TEST_F(ManifestTest, RoundTripsFiveChannels) {
    TempDir dir;
    const auto img = coded_image(64, 64, 5);
    save_image(img, dir / "manifest.json");
    const Manifest m = load_manifest(dir / "manifest.json");
    EXPECT_EQ(m.channel_count(), 5u);
    EXPECT_EQ(m.width, 64);
    const auto back = load_image(m);
    EXPECT_EQ(back.planes, img.planes);
}

TEST_F(ManifestTest, ShortRasterIsSizeMismatch) {
    TempDir dir;
    save_image(coded_image(64, 64, 2), dir / "manifest.json");
    auto bytes = testutil::slurp(dir / "m1.raw");
    bytes.pop_back();
    testutil::spit(dir / "m1.raw", bytes);
    EXPECT_ERROR_CODE(load_manifest(dir / "manifest.json"), SizeMismatch);
}

TEST_F(ManifestTest, DuplicateMarkerIsSchemaError) {
    TempDir dir;
    testutil::spit(dir / "manifest.json",
                   R"({"width":2,"height":2,"dtype":"u8","pixel_size_nm":1,"channels":[{"name":"a","file":"a.raw"},{"name":"a","file":"b.raw"}]})");
    EXPECT_ERROR_CODE(load_manifest(dir / "manifest.json"), SchemaError);
}

TEST_F(ManifestTest, MissingFileAndBadJson) {
    TempDir dir;
    EXPECT_ERROR_CODE(load_manifest(dir / "nope.json"), MissingFile);
    testutil::spit(dir / "bad.json", "{not json");
    EXPECT_ERROR_CODE(load_manifest(dir / "bad.json"), SchemaError);
    testutil::spit(dir / "m.json", R"({"width":2,"height":2,"dtype":"u8","pixel_size_nm":1,"channels":[{"name":"a","file":"a.raw"}]})");
    EXPECT_ERROR_CODE(load_manifest(dir / "m.json"), MissingFile);
}

TEST_F(ManifestTest, U8RasterRoundTrip) {
    TempDir dir;
    MultiplexImage img;
    img.manifest = {3, 2, PixelType::U8, 250.0, {{"a", "a.raw"}}, {}};
    img.planes = {{0, 1, 2, 200, 254, 255}};
    save_image(img, dir / "manifest.json");
    EXPECT_EQ(std::filesystem::file_size(dir / "a.raw"), 6u);
    EXPECT_EQ(load_image(load_manifest(dir / "manifest.json")).planes, img.planes);
}

TEST_F(ManifestTest, PanelValidation) {
    const auto img = coded_image(8, 8, 3);
    EXPECT_NO_THROW(validate_panel({"p", {"m0", "m2"}}, img.manifest));  // warns only
    EXPECT_ERROR_CODE(validate_panel({"p", {}}, img.manifest), SchemaError);
    EXPECT_ERROR_CODE(validate_panel({"p", {"m0", "m0"}}, img.manifest), SchemaError);
    EXPECT_ERROR_CODE(validate_panel({"p", {"zz"}}, img.manifest), SchemaError);
}

TEST(Centroids, ParsesAndRejects) {
    const auto cells = parse_centroids("cell_id,x,y\n0,10,10\n1,20,20\n");
    ASSERT_EQ(cells.size(), 2u);
    EXPECT_EQ(cells[1].cell_id, 1);
    EXPECT_DOUBLE_EQ(cells[1].x, 20.0);
    EXPECT_ERROR_CODE(parse_centroids("cell_id,x,y\n0,1,1\n0,2,2\n"), DuplicateId);
    EXPECT_ERROR_CODE(parse_centroids("cell_id,x,y\n0,100,5\n", 100, 100), OutOfBounds);
    EXPECT_NO_THROW(parse_centroids("cell_id,x,y\n0,99,99\n", 100, 100));
    EXPECT_ERROR_CODE(parse_centroids("cell_id,x,y\n0,abc,5\n"), ParseError);
    EXPECT_ERROR_CODE(parse_centroids("id,x,y\n0,1,1\n"), ParseError);
}

TEST(Centroids, FileRoundTrip) {
    TempDir dir;
    const std::vector<CellRecord> cells{{3, 1.5, 2.25}, {9, 7, 8}};
    save_centroids(cells, dir / "c.csv");
    const auto back = load_centroids(dir / "c.csv");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].cell_id, 3);
    EXPECT_DOUBLE_EQ(back[0].y, 2.25);
}

TEST_F(PatchTest, CenterArithmetic) {
    const auto img = coded_image(100, 100, 1);
    const auto p = extract_patches(img, {{0, 50, 50}}, all_markers(img), 25);
    ASSERT_EQ(p.size(), 1u);
    // Top-left pixel is (38,38), bottom-right is (62,62).
    EXPECT_DOUBLE_EQ(p.at(0, 0, 0, 0), (38 * 100 + 38) / 65535.0);
    EXPECT_DOUBLE_EQ(p.at(0, 0, 24, 24), (62 * 100 + 62) / 65535.0);
}

TEST_F(PatchTest, BorderCellsAreDropped) {
    const auto img = coded_image(100, 100, 1);
    const auto p = extract_patches(img, {{0, 5, 5}, {1, 50, 50}, {2, 87, 50}, {3, 88, 50}}, all_markers(img), 25);
    EXPECT_EQ(p.size(), 2u);  // 87 + 12 = 99 fits; 88 does not
    EXPECT_EQ(p.dropped, 2u);
    EXPECT_ERROR_CODE(extract_patches(img, {{0, 5, 5}}, all_markers(img), 25), EmptyResult);
    EXPECT_ERROR_CODE(extract_patches(img, {{0, 50, 50}}, all_markers(img), 24), InvalidArgument);
}

TEST_F(PatchTest, ShapeIsCellsByChannelsBySizeSquared) {
    const auto img = coded_image(100, 100, 5);
    const auto p = extract_patches(img, {{0, 30, 30}, {1, 50, 50}, {2, 70, 40}}, all_markers(img), 25);
    EXPECT_EQ(p.pixels.size(), 3u * 5u * 25u * 25u);
}

TEST_F(PatchTest, EveryPixelMatchesTheRaster) {
    const auto img = coded_image(40, 30, 3);
    const PanelDefinition panel{"p", {"m2", "m0"}};  // reordered subset
    std::vector<CellRecord> cells;
    for (int i = 0; i < 12; ++i) cells.push_back({i, 4.0 + 3 * i, 4.0 + 2 * i});
    const int S = 7;
    const auto p = extract_patches(img, cells, panel, S);
    for (std::size_t n = 0; n < p.size(); ++n) {
        for (std::size_t c = 0; c < 2; ++c) {
            const std::size_t ch = img.manifest.channel_index(panel.markers[c]);
            for (int i = 0; i < S; ++i)
                for (int j = 0; j < S; ++j) {
                    const double want = img.raw(ch, p.cells[n].px() - S / 2 + j, p.cells[n].py() - S / 2 + i) / 65535.0;
                    ASSERT_DOUBLE_EQ(p.at(n, c, i, j), want);
                    ASSERT_GE(p.at(n, c, i, j), 0.0);
                    ASSERT_LE(p.at(n, c, i, j), 1.0);
                }
        }
    }
}

TEST_F(PatchTest, PercentileScalingClipsToOne) {
    const auto img = coded_image(20, 20, 1);
    const auto scales = channel_scales(img, {IntensityScaling::Percentile, 50.0});
    EXPECT_LT(scales[0], 65535.0);
    const auto p = extract_patches(img, {{0, 15, 15}}, all_markers(img), 5, {IntensityScaling::Percentile, 50.0});
    EXPECT_DOUBLE_EQ(p.at(0, 0, 4, 4), 1.0);
}

TEST(MeanIntensity, ClippedWindowAverage) {
    MultiplexImage img;
    img.manifest = {3, 3, PixelType::U8, 1.0, {{"a", "a.raw"}}, {}};
    img.planes = {{0, 51, 102, 153, 204, 255, 0, 0, 0}};
    const auto v = cell_mean_intensities(img, {{0, 1, 1}, {1, 0, 0}}, 3);
    EXPECT_NEAR(v[0], (0 + 51 + 102 + 153 + 204 + 255) / 9.0 / 255.0, 1e-15);
    EXPECT_NEAR(v[1], (0 + 51 + 153 + 204) / 4.0 / 255.0, 1e-15);
}

TEST(LabelRasterIo, RoundTrip) {
    TempDir dir;
    LabelRaster l{2, 2, {0, 1, 2, 1}, {{1, "L1"}, {2, "L2"}}};
    save_label_raster(l, dir / "l.raw", dir / "l.json");
    const auto back = load_label_raster(dir / "l.raw", dir / "l.json", 2, 2);
    EXPECT_EQ(back.region, l.region);
    EXPECT_EQ(back.legend, l.legend);
    EXPECT_ERROR_CODE(load_label_raster(dir / "l.raw", dir / "l.json", 3, 2), SizeMismatch);
}

namespace {

SyntheticSpec band_spec(double noise) {
    SyntheticSpec s;
    s.width = 120;
    s.height = 120;
    s.channels = {"a", "b", "c"};
    s.grid_rows = 4;
    s.cell_types = {"x", "y"};
    for (int r = 0; r < 4; ++r) s.signatures.push_back({{0.8, 0.0, 0.1 * r}, {0.0, 0.8, 0.1 * r}});
    s.noise = noise;
    s.cell_count = 200;
    s.margin = 3;
    return s;
}

}  // namespace

TEST_F(SyntheticTest, SameSeedSameBytes) {
    const auto a = generate_synthetic(band_spec(0.1), 7);
    const auto b = generate_synthetic(band_spec(0.1), 7);
    const auto c = generate_synthetic(band_spec(0.1), 8);
    EXPECT_EQ(a.image.planes, b.image.planes);
    EXPECT_EQ(a.cell_types, b.cell_types);
    EXPECT_NE(a.image.planes, c.image.planes);
}

TEST_F(SyntheticTest, RegionLabelMatchesBand) {
    auto s = band_spec(0.1);
    s.width = 400;
    s.height = 400;
    s.cell_count = 2000;
    const auto d = generate_synthetic(s, 3);
    ASSERT_EQ(d.cells.size(), 2000u);
    for (std::size_t i = 0; i < d.cells.size(); ++i) {
        const int band = static_cast<int>(d.cells[i].y) * 4 / 400 + 1;
        ASSERT_EQ(d.cell_regions[i], band);
        ASSERT_EQ(d.labels.at(d.cells[i].px(), d.cells[i].py()), band);
    }
}

TEST_F(SyntheticTest, NoiselessArgmaxFollowsTypeSignature) {
    auto s = band_spec(0.0);
    s.signatures.assign(4, {{0.9, 0.0, 0.0}, {0.0, 0.9, 0.0}});
    s.cell_count = 40;
    s.spot_sigma = 1.0;
    const auto d = generate_synthetic(s, 5);
    for (std::size_t i = 0; i < d.cells.size(); ++i) {
        // Rendered value at the centre: own amplitude plus decayed neighbours.
        const auto a = d.image.raw(0, d.cells[i].px(), d.cells[i].py());
        const auto b = d.image.raw(1, d.cells[i].px(), d.cells[i].py());
        bool crowded = false;
        for (std::size_t j = 0; j < d.cells.size(); ++j) {
            if (j != i && std::hypot(d.cells[i].x - d.cells[j].x, d.cells[i].y - d.cells[j].y) <= 3.0) crowded = true;
        }
        if (crowded) continue;
        EXPECT_EQ(a > b ? 0 : 1, d.cell_types[i]) << "cell " << i;
    }
}

TEST_F(SyntheticTest, SpecMismatchIsSpecError) {
    auto s = band_spec(0.0);
    s.signatures.pop_back();
    EXPECT_ERROR_CODE(generate_synthetic(s, 1), SpecError);
    s = band_spec(0.0);
    s.signatures[0][0].push_back(0.5);
    EXPECT_ERROR_CODE(generate_synthetic(s, 1), SpecError);
}

TEST_F(SyntheticTest, BlobsPaintOverGrid) {
    auto s = band_spec(0.0);
    s.blobs.push_back({"core", 60, 60, 10});
    s.signatures.push_back({{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}});
    const auto d = generate_synthetic(s, 2);
    EXPECT_EQ(d.labels.at(60, 60), 5);
    EXPECT_EQ(d.labels.legend.at(5), "core");
    EXPECT_EQ(d.labels.at(0, 0), 1);
}

TEST_F(SyntheticTest, SaveWritesEveryArtifact) {
    TempDir dir;
    const auto d = generate_synthetic(band_spec(0.05), 4);
    save_synthetic(d, dir.path());
    const Manifest m = load_manifest(dir / "manifest.json");
    EXPECT_EQ(load_image(m).planes, d.image.planes);
    EXPECT_EQ(load_centroids(dir / "centroids.csv").size(), d.cells.size());
    const auto types = load_cell_types(dir / "cell_types.csv");
    EXPECT_EQ(types.at(d.cells[0].cell_id), d.type_names[static_cast<std::size_t>(d.cell_types[0])]);
    const auto spec_back = synthetic_spec_from_json(synthetic_spec_to_json(band_spec(0.05)));
    EXPECT_EQ(generate_synthetic(spec_back, 4).image.planes, d.image.planes);
}
