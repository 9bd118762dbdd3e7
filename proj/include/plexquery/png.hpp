#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace plexquery {

/// 8-bit image, `channels` = 1 (gray) or 3 (RGB), row-major interleaved.
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;
};

/// Encodes to PNG bytes; output is deterministic for identical input.
std::string encode_png(const Image8& image);
void write_png(const Image8& image, const std::filesystem::path& path);

}  // namespace plexquery
