#pragma once

// Synthetic slides shared by the unit tests and the acceptance suite.

#include <string>
#include <vector>

#include "plexquery/ingest.hpp"

namespace scenes {

/// Horizontal bands, each lifting one marker; the last marker encodes type.
inline plexquery::SyntheticSpec bands(int size, int band_count, int cells, int margin) {
    plexquery::SyntheticSpec s;
    s.width = size;
    s.height = size;
    const int channels = band_count + 1;
    for (int c = 0; c < channels; ++c) s.channels.push_back("m" + std::to_string(c));
    s.grid_rows = band_count;
    s.cell_types = {"a", "b", "c"};
    s.cell_count = cells;
    s.margin = margin;
    s.noise = 0.1;
    for (int r = 0; r < band_count; ++r) {
        std::vector<std::vector<double>> types;
        for (int k = 0; k < 3; ++k) {
            std::vector<double> sig(static_cast<std::size_t>(channels), 0.1);
            sig[static_cast<std::size_t>(r)] = 0.8;
            sig.back() = 0.2 + 0.2 * k;
            types.push_back(sig);
        }
        s.signatures.push_back(types);
    }
    return s;
}

/// One region, five cell types each marked by its own channel.
inline plexquery::SyntheticSpec one_hot_types(int size, int cells, int margin) {
    plexquery::SyntheticSpec s;
    s.width = size;
    s.height = size;
    s.channels = {"m0", "m1", "m2", "m3", "m4"};
    s.cell_types = {"a", "b", "c", "d", "e"};
    s.cell_count = cells;
    s.margin = margin;
    s.noise = 0.1;
    std::vector<std::vector<double>> types;
    for (std::size_t k = 0; k < 5; ++k) {
        std::vector<double> sig(5, 0.05);
        sig[k] = 0.9;
        types.push_back(sig);
    }
    s.signatures.push_back(types);
    return s;
}

/// 2x2 grid seen by two panels: panel a resolves rows, panel b columns.
inline plexquery::SyntheticSpec crossed(int size, int cells, int margin) {
    plexquery::SyntheticSpec s;
    s.width = size;
    s.height = size;
    for (const char* p : {"a", "b"})
        for (int i = 0; i < 5; ++i) s.channels.push_back(std::string(p) + std::to_string(i));
    s.grid_rows = 2;
    s.grid_cols = 2;
    s.region_names = {"a0b0", "a0b1", "a1b0", "a1b1"};
    s.cell_types = {"t"};
    s.cell_count = cells;
    s.margin = margin;
    s.noise = 0.1;
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 2; ++c) {
            std::vector<double> sig(10, 0.2);
            sig[r] = 0.8;
            sig[5 + c] = 0.8;
            s.signatures.push_back({sig});
        }
    }
    return s;
}

inline plexquery::PanelDefinition panel_of(const std::string& name, const std::vector<std::string>& markers) {
    return {name, markers};
}

inline plexquery::PanelDefinition crossed_panel(const std::string& p) {
    plexquery::PanelDefinition panel{p, {}};
    for (int i = 0; i < 5; ++i) panel.markers.push_back(p + std::to_string(i));
    return panel;
}

}  // namespace scenes
