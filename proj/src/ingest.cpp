#include "plexquery/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "plexquery/error.hpp"
#include "plexquery/parallel.hpp"

namespace plexquery {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t bytes_per_pixel(PixelType t) { return t == PixelType::U8 ? 1 : 2; }
double dtype_max(PixelType t) { return t == PixelType::U8 ? 255.0 : 65535.0; }

namespace {

PixelType parse_dtype(const std::string& s) {
    if (s == "u8") return PixelType::U8;
    if (s == "u16") return PixelType::U16;
    throw Error(ErrorCode::SchemaError, "dtype must be u8 or u16, got '" + s + "'");
}

std::string dtype_name(PixelType t) { return t == PixelType::U8 ? "u8" : "u16"; }

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

std::vector<std::uint16_t> read_plane(const fs::path& path, PixelType dtype, std::size_t count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t bpp = bytes_per_pixel(dtype);
    if (bytes.size() != count * bpp) {
        throw Error(ErrorCode::SizeMismatch, path.string() + " has " + std::to_string(bytes.size()) +
                                                 " bytes, expected " + std::to_string(count * bpp));
    }
    std::vector<std::uint16_t> plane(count);
    for (std::size_t i = 0; i < count; ++i) {
        plane[i] = bpp == 1 ? bytes[i]
                            : static_cast<std::uint16_t>(bytes[2 * i] | (static_cast<unsigned>(bytes[2 * i + 1]) << 8));
    }
    return plane;
}

void write_plane(const fs::path& path, PixelType dtype, const std::vector<std::uint16_t>& plane) {
    const std::size_t bpp = bytes_per_pixel(dtype);
    std::string bytes(plane.size() * bpp, '\0');
    for (std::size_t i = 0; i < plane.size(); ++i) {
        if (bpp == 1) {
            bytes[i] = static_cast<char>(plane[i] & 0xFF);
        } else {
            bytes[2 * i] = static_cast<char>(plane[i] & 0xFF);
            bytes[2 * i + 1] = static_cast<char>((plane[i] >> 8) & 0xFF);
        }
    }
    write_text(path, bytes);
}

}  // namespace

std::size_t Manifest::channel_index(const std::string& marker) const {
    for (std::size_t c = 0; c < channels.size(); ++c) {
        if (channels[c].name == marker) return c;
    }
    throw Error(ErrorCode::SchemaError, "unknown marker '" + marker + "'");
}

std::vector<std::string> Manifest::marker_names() const {
    std::vector<std::string> out;
    out.reserve(channels.size());
    for (const auto& c : channels) out.push_back(c.name);
    return out;
}

fs::path Manifest::raster_path(std::size_t channel) const {
    fs::path p = channels.at(channel).file;
    return p.is_absolute() ? p : base_dir / p;
}

Manifest manifest_from_json(const json& j, const fs::path& base_dir) {
    Manifest m;
    try {
        m.width = j.at("width").get<int>();
        m.height = j.at("height").get<int>();
        m.dtype = parse_dtype(j.at("dtype").get<std::string>());
        m.pixel_size_nm = j.at("pixel_size_nm").get<double>();
        for (const auto& c : j.at("channels")) {
            m.channels.push_back({c.at("name").get<std::string>(), c.at("file").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, e.what());
    }
    m.base_dir = base_dir;
    if (m.width < 1 || m.height < 1) throw Error(ErrorCode::SchemaError, "width and height must be >= 1");
    if (m.channels.empty()) throw Error(ErrorCode::SchemaError, "manifest has no channels");
    std::set<std::string> seen;
    for (const auto& c : m.channels) {
        if (c.name.empty()) throw Error(ErrorCode::SchemaError, "empty channel name");
        if (!seen.insert(c.name).second) throw Error(ErrorCode::SchemaError, "duplicate marker '" + c.name + "'");
    }
    return m;
}

json manifest_to_json(const Manifest& m) {
    json channels = json::array();
    for (const auto& c : m.channels) channels.push_back({{"name", c.name}, {"file", c.file}});
    return {{"width", m.width},
            {"height", m.height},
            {"dtype", dtype_name(m.dtype)},
            {"pixel_size_nm", m.pixel_size_nm},
            {"channels", channels}};
}

Manifest load_manifest(const fs::path& path) {
    const std::string text = read_text(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, e.what());
    }
    Manifest m = manifest_from_json(j, path.parent_path());
    const std::uintmax_t expected = static_cast<std::uintmax_t>(m.width) * static_cast<std::uintmax_t>(m.height) *
                                    bytes_per_pixel(m.dtype);
    for (std::size_t c = 0; c < m.channels.size(); ++c) {
        const fs::path raster = m.raster_path(c);
        std::error_code ec;
        const auto size = fs::file_size(raster, ec);
        if (ec) throw Error(ErrorCode::MissingFile, raster.string());
        if (size != expected) {
            throw Error(ErrorCode::SizeMismatch, raster.string() + " has " + std::to_string(size) +
                                                     " bytes, expected " + std::to_string(expected));
        }
    }
    return m;
}

void save_manifest(const Manifest& m, const fs::path& path) { write_text(path, manifest_to_json(m).dump(2) + "\n"); }

MultiplexImage load_image(const Manifest& manifest) {
    MultiplexImage img;
    img.manifest = manifest;
    const std::size_t count = static_cast<std::size_t>(manifest.width) * static_cast<std::size_t>(manifest.height);
    for (std::size_t c = 0; c < manifest.channels.size(); ++c) {
        img.planes.push_back(read_plane(manifest.raster_path(c), manifest.dtype, count));
    }
    return img;
}

void save_image(const MultiplexImage& image, const fs::path& manifest_path) {
    Manifest m = image.manifest;
    m.base_dir = manifest_path.parent_path();
    for (std::size_t c = 0; c < m.channels.size(); ++c) write_plane(m.raster_path(c), m.dtype, image.planes[c]);
    save_manifest(m, manifest_path);
}

void validate_panel(const PanelDefinition& panel, const Manifest& manifest) {
    if (panel.name.empty()) throw Error(ErrorCode::SchemaError, "panel name is empty");
    if (panel.markers.empty()) throw Error(ErrorCode::SchemaError, "panel '" + panel.name + "' has no markers");
    std::set<std::string> seen;
    for (const auto& m : panel.markers) {
        if (!seen.insert(m).second) {
            throw Error(ErrorCode::SchemaError, "panel '" + panel.name + "' repeats marker '" + m + "'");
        }
        manifest.channel_index(m);
    }
    if (panel.markers.size() < 5 || panel.markers.size() > 8) {
        warn("panel '" + panel.name + "' has " + std::to_string(panel.markers.size()) +
             " markers; 5-8 markers per panel work best");
    }
}

int CellRecord::px() const { return static_cast<int>(std::lround(x)); }
int CellRecord::py() const { return static_cast<int>(std::lround(y)); }

std::vector<CellRecord> parse_centroids(const std::string& text, int width, int height) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "cell_id,x,y") {
        throw Error(ErrorCode::ParseError, "centroid header must be 'cell_id,x,y'");
    }
    std::vector<CellRecord> cells;
    std::set<std::int64_t> ids;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string row = trim(line);
        if (row.empty()) continue;
        std::istringstream fields(row);
        std::string a, b, c;
        if (!std::getline(fields, a, ',') || !std::getline(fields, b, ',') || !std::getline(fields, c, ',')) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected 3 fields");
        }
        CellRecord rec;
        try {
            std::size_t used = 0;
            rec.cell_id = std::stoll(a, &used);
            if (trim(a.substr(used)) != "") throw std::invalid_argument(a);
            rec.x = std::stod(b);
            rec.y = std::stod(c);
        } catch (const std::exception&) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad number");
        }
        if (rec.cell_id < 0) throw Error(ErrorCode::ParseError, "negative cell_id");
        if (!ids.insert(rec.cell_id).second) {
            throw Error(ErrorCode::DuplicateId, "cell_id " + std::to_string(rec.cell_id));
        }
        if (width > 0 && height > 0 && (rec.x < 0 || rec.x >= width || rec.y < 0 || rec.y >= height)) {
            throw Error(ErrorCode::OutOfBounds, "cell " + std::to_string(rec.cell_id) + " lies outside the image");
        }
        cells.push_back(rec);
    }
    return cells;
}

std::vector<CellRecord> load_centroids(const fs::path& path, int width, int height) {
    return parse_centroids(read_text(path), width, height);
}

void save_centroids(const std::vector<CellRecord>& cells, const fs::path& path) {
    std::ostringstream out;
    out << "cell_id,x,y\n";
    out.precision(17);
    for (const auto& c : cells) out << c.cell_id << ',' << c.x << ',' << c.y << '\n';
    write_text(path, out.str());
}

std::vector<double> channel_scales(const MultiplexImage& image, const ScalingOptions& options) {
    std::vector<double> scales(image.planes.size(), dtype_max(image.manifest.dtype));
    if (options.mode == IntensityScaling::DtypeMax) return scales;
    for (std::size_t c = 0; c < image.planes.size(); ++c) {
        std::vector<std::uint16_t> values = image.planes[c];
        if (values.empty()) continue;
        const double q = std::clamp(options.percentile, 0.0, 100.0) / 100.0;
        const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(values.size() - 1)));
        std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
        scales[c] = std::max<double>(1.0, values[k]);
    }
    return scales;
}

PatchSet extract_patches(const MultiplexImage& image, const std::vector<CellRecord>& cells,
                         const PanelDefinition& panel, int patch_size, const ScalingOptions& scaling) {
    if (patch_size < 1 || patch_size % 2 == 0) {
        throw Error(ErrorCode::InvalidArgument, "patch size must be odd, got " + std::to_string(patch_size));
    }
    validate_panel(panel, image.manifest);
    std::vector<std::size_t> channel_ids;
    for (const auto& m : panel.markers) channel_ids.push_back(image.manifest.channel_index(m));
    const std::vector<double> scales = channel_scales(image, scaling);

    PatchSet out;
    out.panel = panel;
    out.patch_size = patch_size;
    const int half = patch_size / 2;
    for (const auto& cell : cells) {
        const int cx = cell.px();
        const int cy = cell.py();
        if (cx - half < 0 || cy - half < 0 || cx + half >= image.width() || cy + half >= image.height()) {
            ++out.dropped;
            continue;
        }
        out.cells.push_back(cell);
    }
    if (out.cells.empty()) {
        throw Error(ErrorCode::EmptyResult, "all " + std::to_string(cells.size()) + " cells fall on the border");
    }

    out.pixels.resize(out.cells.size() * out.patch_stride());
    parallel_for(out.cells.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t n = begin; n < end; ++n) {
            const int x0 = out.cells[n].px() - half;
            const int y0 = out.cells[n].py() - half;
            double* dst = out.pixels.data() + n * out.patch_stride();
            for (std::size_t c = 0; c < channel_ids.size(); ++c) {
                const double inv = 1.0 / scales[channel_ids[c]];
                for (int i = 0; i < patch_size; ++i) {
                    for (int j = 0; j < patch_size; ++j) {
                        *dst++ = std::min(1.0, image.raw(channel_ids[c], x0 + j, y0 + i) * inv);
                    }
                }
            }
        }
    });
    return out;
}

std::vector<double> cell_mean_intensities(const MultiplexImage& image, const std::vector<CellRecord>& cells,
                                          int window, const ScalingOptions& scaling) {
    const std::vector<double> scales = channel_scales(image, scaling);
    const std::size_t channels = image.planes.size();
    std::vector<double> out(cells.size() * channels, 0.0);
    const int half = window / 2;
    parallel_for(cells.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t n = begin; n < end; ++n) {
            const int x0 = std::max(0, cells[n].px() - half);
            const int x1 = std::min(image.width() - 1, cells[n].px() + half);
            const int y0 = std::max(0, cells[n].py() - half);
            const int y1 = std::min(image.height() - 1, cells[n].py() + half);
            const double count = static_cast<double>((x1 - x0 + 1) * (y1 - y0 + 1));
            for (std::size_t c = 0; c < channels; ++c) {
                double sum = 0.0;
                for (int y = y0; y <= y1; ++y) {
                    for (int x = x0; x <= x1; ++x) sum += std::min(1.0, image.raw(c, x, y) / scales[c]);
                }
                out[n * channels + c] = sum / count;
            }
        }
    });
    return out;
}

LabelRaster load_label_raster(const fs::path& raster, const fs::path& legend, int width, int height) {
    LabelRaster labels;
    labels.width = width;
    labels.height = height;
    labels.region = read_plane(raster, PixelType::U16,
                               static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    json j;
    try {
        j = json::parse(read_text(legend));
        for (const auto& [key, value] : j.items()) {
            labels.legend[static_cast<std::uint16_t>(std::stoul(key))] = value.get<std::string>();
        }
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("label legend: ") + e.what());
    }
    return labels;
}

void save_label_raster(const LabelRaster& labels, const fs::path& raster, const fs::path& legend) {
    write_plane(raster, PixelType::U16, labels.region);
    json j = json::object();
    for (const auto& [id, name] : labels.legend) j[std::to_string(id)] = name;
    write_text(legend, j.dump(2) + "\n");
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
    SyntheticSpec s;
    try {
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        s.dtype = parse_dtype(j.value("dtype", std::string("u16")));
        s.pixel_size_nm = j.value("pixel_size_nm", s.pixel_size_nm);
        s.channels = j.at("channels").get<std::vector<std::string>>();
        if (j.contains("layout")) {
            const auto& l = j.at("layout");
            s.grid_rows = l.value("rows", 1);
            s.grid_cols = l.value("cols", 1);
            s.region_names = l.value("names", std::vector<std::string>{});
            if (l.contains("blobs")) {
                for (const auto& b : l.at("blobs")) {
                    s.blobs.push_back({b.value("name", std::string()), b.at("cx").get<double>(),
                                       b.at("cy").get<double>(), b.at("radius").get<double>()});
                }
            }
        }
        s.cell_types = j.at("cell_types").get<std::vector<std::string>>();
        s.type_weights = j.value("type_weights", std::vector<double>{});
        s.signatures = j.at("signatures").get<std::vector<std::vector<std::vector<double>>>>();
        s.noise = j.value("noise", 0.0);
        s.cell_count = j.value("cell_count", s.cell_count);
        s.margin = j.value("margin", 0);
        s.spot_sigma = j.value("spot_sigma", 2.0);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SpecError, e.what());
    }
    return s;
}

json synthetic_spec_to_json(const SyntheticSpec& s) {
    json blobs = json::array();
    for (const auto& b : s.blobs) blobs.push_back({{"name", b.name}, {"cx", b.cx}, {"cy", b.cy}, {"radius", b.radius}});
    json j = {{"width", s.width},
              {"height", s.height},
              {"dtype", dtype_name(s.dtype)},
              {"pixel_size_nm", s.pixel_size_nm},
              {"channels", s.channels},
              {"layout", {{"rows", s.grid_rows}, {"cols", s.grid_cols}, {"names", s.region_names}, {"blobs", blobs}}},
              {"cell_types", s.cell_types},
              {"signatures", s.signatures},
              {"noise", s.noise},
              {"cell_count", s.cell_count},
              {"margin", s.margin},
              {"spot_sigma", s.spot_sigma}};
    if (!s.type_weights.empty()) j["type_weights"] = s.type_weights;
    return j;
}

namespace {

void check_spec(const SyntheticSpec& s) {
    if (s.width < 1 || s.height < 1) throw Error(ErrorCode::SpecError, "image size must be positive");
    if (s.channels.empty()) throw Error(ErrorCode::SpecError, "no channels");
    if (s.grid_rows < 1 || s.grid_cols < 1) throw Error(ErrorCode::SpecError, "layout rows/cols must be >= 1");
    if (s.cell_types.empty()) throw Error(ErrorCode::SpecError, "no cell types");
    if (!s.type_weights.empty() && s.type_weights.size() != s.cell_types.size()) {
        throw Error(ErrorCode::SpecError, "type_weights length differs from cell_types");
    }
    if (s.signatures.size() != s.region_count()) {
        throw Error(ErrorCode::SpecError, "signatures cover " + std::to_string(s.signatures.size()) +
                                              " regions, layout has " + std::to_string(s.region_count()));
    }
    for (const auto& region : s.signatures) {
        if (region.size() != s.cell_types.size()) {
            throw Error(ErrorCode::SpecError, "signature type count differs from cell_types");
        }
        for (const auto& sig : region) {
            if (sig.size() != s.channels.size()) {
                throw Error(ErrorCode::SpecError, "signature length differs from channel count");
            }
        }
    }
    if (s.cell_count < 0 || s.noise < 0 || s.spot_sigma <= 0) throw Error(ErrorCode::SpecError, "bad scalar field");
    if (2 * s.margin >= s.width || 2 * s.margin >= s.height) throw Error(ErrorCode::SpecError, "margin too large");
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    check_spec(spec);
    SyntheticDataset out;
    out.type_names = spec.cell_types;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const auto w = static_cast<std::size_t>(spec.width);
    const auto h = static_cast<std::size_t>(spec.height);
    const std::size_t grid = static_cast<std::size_t>(spec.grid_rows) * static_cast<std::size_t>(spec.grid_cols);

    LabelRaster& labels = out.labels;
    labels.width = spec.width;
    labels.height = spec.height;
    labels.region.assign(w * h, 0);
    for (std::size_t r = 0; r < grid; ++r) {
        const auto id = static_cast<std::uint16_t>(r + 1);
        labels.legend[id] = r < spec.region_names.size() ? spec.region_names[r] : "region_" + std::to_string(id);
    }
    for (std::size_t b = 0; b < spec.blobs.size(); ++b) {
        const auto id = static_cast<std::uint16_t>(grid + b + 1);
        labels.legend[id] = spec.blobs[b].name.empty() ? "blob_" + std::to_string(b + 1) : spec.blobs[b].name;
    }
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t row = y * static_cast<std::size_t>(spec.grid_rows) / h;
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t col = x * static_cast<std::size_t>(spec.grid_cols) / w;
            std::uint16_t id = static_cast<std::uint16_t>(row * static_cast<std::size_t>(spec.grid_cols) + col + 1);
            for (std::size_t b = 0; b < spec.blobs.size(); ++b) {
                const double dx = static_cast<double>(x) - spec.blobs[b].cx;
                const double dy = static_cast<double>(y) - spec.blobs[b].cy;
                if (dx * dx + dy * dy <= spec.blobs[b].radius * spec.blobs[b].radius) {
                    id = static_cast<std::uint16_t>(grid + b + 1);
                }
            }
            labels.region[y * w + x] = id;
        }
    }

    std::uniform_int_distribution<int> xs(spec.margin, spec.width - 1 - spec.margin);
    std::uniform_int_distribution<int> ys(spec.margin, spec.height - 1 - spec.margin);
    std::vector<double> weights = spec.type_weights;
    if (weights.empty()) weights.assign(spec.cell_types.size(), 1.0);
    std::discrete_distribution<int> types(weights.begin(), weights.end());

    const std::size_t channels = spec.channels.size();
    std::vector<double> amplitude(static_cast<std::size_t>(spec.cell_count) * channels);
    for (int i = 0; i < spec.cell_count; ++i) {
        CellRecord cell{i, static_cast<double>(xs(rng)), static_cast<double>(ys(rng))};
        const int type = types(rng);
        const std::uint16_t region = labels.at(cell.px(), cell.py());
        const auto& signature = spec.signatures[region - 1u][static_cast<std::size_t>(type)];
        for (std::size_t c = 0; c < channels; ++c) {
            const double jitter = spec.noise > 0 ? spec.noise * gauss(rng) : 0.0;
            amplitude[static_cast<std::size_t>(i) * channels + c] = std::max(0.0, signature[c] + jitter);
        }
        out.cells.push_back(cell);
        out.cell_types.push_back(type);
        out.cell_regions.push_back(region);
    }

    // Gaussian spots truncated at 3 sigma, summed, then pixel noise and clipping.
    const double sigma = spec.spot_sigma;
    const int reach = static_cast<int>(std::floor(3.0 * sigma));
    std::vector<std::vector<double>> field(channels, std::vector<double>(w * h, 0.0));
    for (std::size_t i = 0; i < out.cells.size(); ++i) {
        const int cx = out.cells[i].px();
        const int cy = out.cells[i].py();
        for (int y = std::max(0, cy - reach); y <= std::min(spec.height - 1, cy + reach); ++y) {
            for (int x = std::max(0, cx - reach); x <= std::min(spec.width - 1, cx + reach); ++x) {
                const double r2 = static_cast<double>((x - cx) * (x - cx) + (y - cy) * (y - cy));
                if (r2 > 9.0 * sigma * sigma) continue;
                const double g = std::exp(-r2 / (2.0 * sigma * sigma));
                const std::size_t p = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
                for (std::size_t c = 0; c < channels; ++c) field[c][p] += amplitude[i * channels + c] * g;
            }
        }
    }

    Manifest& m = out.image.manifest;
    m.width = spec.width;
    m.height = spec.height;
    m.dtype = spec.dtype;
    m.pixel_size_nm = spec.pixel_size_nm;
    for (const auto& name : spec.channels) m.channels.push_back({name, "ch_" + name + ".raw"});
    const double vmax = dtype_max(spec.dtype);
    for (std::size_t c = 0; c < channels; ++c) {
        std::vector<std::uint16_t> plane(w * h);
        for (std::size_t p = 0; p < w * h; ++p) {
            double v = field[c][p];
            if (spec.noise > 0) v += spec.noise * gauss(rng);
            v = std::clamp(v, 0.0, 1.0);
            plane[p] = static_cast<std::uint16_t>(std::lround(v * vmax));
        }
        out.image.planes.push_back(std::move(plane));
    }
    return out;
}

void save_synthetic(const SyntheticDataset& data, const fs::path& dir) {
    fs::create_directories(dir);
    save_image(data.image, dir / "manifest.json");
    save_centroids(data.cells, dir / "centroids.csv");
    save_label_raster(data.labels, dir / "labels.raw", dir / "labels.json");
    std::ostringstream types;
    types << "cell_id,type\n";
    for (std::size_t i = 0; i < data.cells.size(); ++i) {
        types << data.cells[i].cell_id << ',' << data.type_names[static_cast<std::size_t>(data.cell_types[i])] << '\n';
    }
    write_text(dir / "cell_types.csv", types.str());
}

std::map<std::int64_t, std::string> load_cell_types(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line) || trim(line) != "cell_id,type") {
        throw Error(ErrorCode::ParseError, "cell type header must be 'cell_id,type'");
    }
    std::map<std::int64_t, std::string> out;
    while (std::getline(in, line)) {
        const std::string row = trim(line);
        if (row.empty()) continue;
        const auto comma = row.find(',');
        if (comma == std::string::npos) throw Error(ErrorCode::ParseError, "bad cell type row '" + row + "'");
        try {
            out[std::stoll(row.substr(0, comma))] = row.substr(comma + 1);
        } catch (const std::exception&) {
            throw Error(ErrorCode::ParseError, "bad cell id in '" + row + "'");
        }
    }
    return out;
}

}  // namespace plexquery
