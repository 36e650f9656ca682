#pragma once

// "TCLP" clip files and the tab-separated dataset manifest.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tempnet/tensor.hpp"

namespace tempnet {

inline constexpr std::uint8_t kUnlabeled = 255;

struct ClipFile {
  Tensor<float> data;  // [T,H,W,C]
  std::optional<int> label;
};

// Layout: "TCLP", u16 version (1), u8 label (0, 1 or 255), T,H,W,C as u32,
// u8 dtype (0 = f32), then the row-major payload. Little-endian throughout.
std::vector<std::uint8_t> encode_clip(const ClipFile& clip);
ClipFile decode_clip(const std::vector<std::uint8_t>& bytes);
void write_clip(const std::filesystem::path& path, const ClipFile& clip);
ClipFile read_clip(const std::filesystem::path& path);

enum class Split { Train, Val, Test };

const char* split_name(Split split);
Split parse_split(const std::string& text);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  int label = 0;
  Split split = Split::Train;
};

inline constexpr const char* kManifestName = "manifest.tsv";

// One record per line: relative-path TAB label TAB split.
std::string format_manifest(const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> parse_manifest(const std::string& text);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

std::vector<ManifestEntry> filter_split(const std::vector<ManifestEntry>& entries, Split split);

}  // namespace tempnet
