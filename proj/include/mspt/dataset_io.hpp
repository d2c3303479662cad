#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mspt/data.hpp"

namespace mspt {

// On-disk container: a directory holding manifest.json plus one raw file per
// bag per scale of little-endian float32 values, row-major, no header.
// The manifest declares shapes; file sizes are validated against them.

inline constexpr int kDatasetFormatVersion = 1;

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

struct ValidationReport {
    std::vector<std::string> findings;
    bool ok() const { return findings.empty(); }
};

// Checks every container invariant that can be verified from the manifest and
// file metadata, without loading matrices into memory.
ValidationReport validate_manifest(const std::filesystem::path& dir);

// Raw matrix file helpers shared with the prototype cache.
void write_f32(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_f32(const std::filesystem::path& path, std::size_t expect_count,
                             const std::string& what);
void write_f64(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_f64(const std::filesystem::path& path, std::size_t expect_count,
                             const std::string& what);
void write_u32(const std::filesystem::path& path, const std::vector<std::uint32_t>& values);
std::vector<std::uint32_t> read_u32(const std::filesystem::path& path, std::size_t expect_count,
                                    const std::string& what);

nlohmann::json read_json_file(const std::filesystem::path& path, const std::string& what);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

} // namespace mspt
