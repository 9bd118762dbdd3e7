#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace plexquery {

/// Versioned binary container of named little-endian f64 matrices.
///
/// Layout: "PLXQ" magic, u32 format version, u32 kind, u64 entry count, then
/// per entry: u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64.
/// Shared by encoder checkpoints and panel snapshots.
enum class ContainerKind : std::uint32_t { EncoderCheckpoint = 1, PanelSnapshot = 2 };

inline constexpr std::uint32_t kContainerVersion = 1;

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;
};

struct Container {
    ContainerKind kind = ContainerKind::EncoderCheckpoint;
    std::map<std::string, Matrix> entries;

    void put(const std::string& name, std::size_t rows, std::size_t cols, std::vector<double> data);
    /// Throws SchemaError when missing or not rows x cols (0 = any).
    const Matrix& get(const std::string& name, std::size_t rows = 0, std::size_t cols = 0) const;
};

void write_container(const Container& c, const std::filesystem::path& path);
Container read_container(const std::filesystem::path& path, ContainerKind expected);

}  // namespace plexquery
