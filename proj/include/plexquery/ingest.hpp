#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace plexquery {

enum class PixelType { U8, U16 };

std::size_t bytes_per_pixel(PixelType t);
double dtype_max(PixelType t);

struct ChannelSpec {
    std::string name;
    std::string file;  // relative to the manifest directory unless absolute
};

struct Manifest {
    int width = 0;
    int height = 0;
    PixelType dtype = PixelType::U16;
    double pixel_size_nm = 0.0;
    std::vector<ChannelSpec> channels;
    std::filesystem::path base_dir;

    std::size_t channel_count() const { return channels.size(); }
    /// Throws SchemaError for unknown markers.
    std::size_t channel_index(const std::string& marker) const;
    std::vector<std::string> marker_names() const;
    std::filesystem::path raster_path(std::size_t channel) const;
};

/// Parses and validates a manifest; every referenced raster is size-checked.
Manifest load_manifest(const std::filesystem::path& path);
Manifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json manifest_to_json(const Manifest& m);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

/// Planar raw values, one plane per manifest channel.
struct MultiplexImage {
    Manifest manifest;
    std::vector<std::vector<std::uint16_t>> planes;

    int width() const { return manifest.width; }
    int height() const { return manifest.height; }
    std::uint16_t raw(std::size_t channel, int x, int y) const {
        return planes[channel][static_cast<std::size_t>(y) * static_cast<std::size_t>(manifest.width) +
                               static_cast<std::size_t>(x)];
    }
};

MultiplexImage load_image(const Manifest& manifest);
/// Writes one raw little-endian plane per channel next to `manifest_path`.
void save_image(const MultiplexImage& image, const std::filesystem::path& manifest_path);

struct PanelDefinition {
    std::string name;
    std::vector<std::string> markers;
};

/// Throws SchemaError on empty, duplicate or unknown markers; warns when the
/// panel size lies outside 5..8.
void validate_panel(const PanelDefinition& panel, const Manifest& manifest);

struct CellRecord {
    std::int64_t cell_id = 0;
    double x = 0.0;
    double y = 0.0;

    int px() const;  // nearest pixel column
    int py() const;  // nearest pixel row
};

/// Reads a `cell_id,x,y` CSV. Bounds are checked against width x height
/// (half-open) when both are positive.
std::vector<CellRecord> load_centroids(const std::filesystem::path& path, int width = 0, int height = 0);
std::vector<CellRecord> parse_centroids(const std::string& text, int width = 0, int height = 0);
void save_centroids(const std::vector<CellRecord>& cells, const std::filesystem::path& path);

enum class IntensityScaling { DtypeMax, Percentile };

struct ScalingOptions {
    IntensityScaling mode = IntensityScaling::DtypeMax;
    double percentile = 99.5;  // used by Percentile mode only
};

/// Per-channel divisor mapping raw values into [0,1].
std::vector<double> channel_scales(const MultiplexImage& image, const ScalingOptions& options = {});

struct PatchSet {
    PanelDefinition panel;
    int patch_size = 0;
    std::vector<CellRecord> cells;
    std::vector<double> pixels;  // N x C x S x S, row-major
    std::size_t dropped = 0;

    std::size_t size() const { return cells.size(); }
    std::size_t channels() const { return panel.markers.size(); }
    std::size_t pixels_per_channel() const {
        return static_cast<std::size_t>(patch_size) * static_cast<std::size_t>(patch_size);
    }
    std::size_t patch_stride() const { return channels() * pixels_per_channel(); }
    std::span<const double> patch(std::size_t n) const {
        return {pixels.data() + n * patch_stride(), patch_stride()};
    }
    double at(std::size_t n, std::size_t c, int i, int j) const {
        return pixels[n * patch_stride() + c * pixels_per_channel() +
                      static_cast<std::size_t>(i) * static_cast<std::size_t>(patch_size) +
                      static_cast<std::size_t>(j)];
    }
};

/// Cuts one S x S window per cell, centered on the cell. Cells whose window
/// crosses the border are dropped and counted in PatchSet::dropped.
PatchSet extract_patches(const MultiplexImage& image, const std::vector<CellRecord>& cells,
                         const PanelDefinition& panel, int patch_size, const ScalingOptions& scaling = {});

/// Mean scaled intensity of every manifest channel over a centered window,
/// N x channel_count row-major. Windows are clipped at the border.
std::vector<double> cell_mean_intensities(const MultiplexImage& image, const std::vector<CellRecord>& cells,
                                          int window, const ScalingOptions& scaling = {});

struct LabelRaster {
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> region;  // 0 = background/unlabeled
    std::map<std::uint16_t, std::string> legend;

    std::uint16_t at(int x, int y) const {
        return region[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }
};

LabelRaster load_label_raster(const std::filesystem::path& raster, const std::filesystem::path& legend, int width,
                              int height);
void save_label_raster(const LabelRaster& labels, const std::filesystem::path& raster,
                       const std::filesystem::path& legend);

struct BlobRegion {
    std::string name;
    double cx = 0, cy = 0, radius = 0;
};

/// Desk-scale synthetic slide description. Regions are a rows x cols grid of
/// rectangles (row-major, ids from 1) followed by blobs painted on top.
struct SyntheticSpec {
    int width = 256;
    int height = 256;
    PixelType dtype = PixelType::U16;
    double pixel_size_nm = 330.0;
    std::vector<std::string> channels;
    int grid_rows = 1;
    int grid_cols = 1;
    std::vector<std::string> region_names;  // optional, grid regions only
    std::vector<BlobRegion> blobs;
    std::vector<std::string> cell_types;
    std::vector<double> type_weights;  // optional, defaults to uniform
    /// signatures[region][type][channel], region index 0 = first grid cell.
    std::vector<std::vector<std::vector<double>>> signatures;
    double noise = 0.0;
    int cell_count = 100;
    int margin = 0;  // cells are kept this many pixels away from the border
    double spot_sigma = 2.0;

    std::size_t region_count() const {
        return static_cast<std::size_t>(grid_rows) * static_cast<std::size_t>(grid_cols) + blobs.size();
    }
};

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);
nlohmann::json synthetic_spec_to_json(const SyntheticSpec& spec);

struct SyntheticDataset {
    MultiplexImage image;
    std::vector<CellRecord> cells;
    LabelRaster labels;
    std::vector<int> cell_types;               // index into type_names, one per cell
    std::vector<std::uint16_t> cell_regions;  // ground-truth region per cell
    std::vector<std::string> type_names;
};

/// Pure function of (spec, seed).
SyntheticDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Writes manifest.json, ch_<marker>.raw, centroids.csv, labels.raw,
/// labels.json and cell_types.csv under `dir`.
void save_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

/// Reads a `cell_id,type` CSV into a map.
std::map<std::int64_t, std::string> load_cell_types(const std::filesystem::path& path);

}  // namespace plexquery
