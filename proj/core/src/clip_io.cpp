#include "tempnet/clip_io.hpp"

#include <fstream>
#include <sstream>

#include "tempnet/byte_io.hpp"

namespace tempnet {

namespace {
constexpr char kClipMagic[4] = {'T', 'C', 'L', 'P'};
constexpr std::uint16_t kClipVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_clip(const ClipFile& clip) {
  if (clip.data.rank() != 4) throw ShapeError("TCLP: clip must be [T,H,W,C], got " + shape_string(clip.data.shape()));
  if (clip.label && *clip.label != 0 && *clip.label != 1) throw ValueError("TCLP: label must be 0 or 1");
  io::ByteWriter w;
  w.put_bytes(kClipMagic, 4);
  w.put<std::uint16_t>(kClipVersion);
  w.put<std::uint8_t>(clip.label ? static_cast<std::uint8_t>(*clip.label) : kUnlabeled);
  for (std::size_t e : clip.data.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(e));
  w.put<std::uint8_t>(0);
  for (float v : clip.data.data()) w.put<float>(v);
  return std::move(w.bytes());
}

ClipFile decode_clip(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes, "TCLP");
  if (r.get_string(4) != std::string(kClipMagic, 4)) throw FormatError("TCLP: bad magic");
  const auto version = r.get<std::uint16_t>();
  if (version != kClipVersion) throw FormatError("TCLP: unsupported version " + std::to_string(version));
  const auto label = r.get<std::uint8_t>();
  if (label != 0 && label != 1 && label != kUnlabeled) throw FormatError("TCLP: invalid label byte " + std::to_string(label));
  Shape shape(4);
  for (auto& e : shape) {
    e = r.get<std::uint32_t>();
    if (e == 0) throw FormatError("TCLP: zero extent");
  }
  const auto dtype = r.get<std::uint8_t>();
  if (dtype != 0) throw FormatError("TCLP: unsupported dtype code " + std::to_string(dtype));
  const std::size_t n = shape_numel(shape);
  if (r.remaining() != n * sizeof(float)) {
    throw FormatError("TCLP: payload holds " + std::to_string(r.remaining()) + " bytes, expected " +
                      std::to_string(n * sizeof(float)));
  }
  std::vector<float> data(n);
  for (auto& v : data) v = r.get<float>();
  ClipFile out{Tensor<float>(std::move(shape), std::move(data)), std::nullopt};
  if (label != kUnlabeled) out.label = label;
  return out;
}

void write_clip(const std::filesystem::path& path, const ClipFile& clip) { io::write_file(path, encode_clip(clip)); }

ClipFile read_clip(const std::filesystem::path& path) { return decode_clip(io::read_file(path)); }

const char* split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  throw FormatError("unknown split '" + text + "' (expected train, val or test)");
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += e.path;
    out += '\t';
    out += std::to_string(e.label);
    out += '\t';
    out += split_name(e.split);
    out += '\n';
  }
  return out;
}

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find('\t', start)) != std::string::npos; start = pos + 1) {
      fields.push_back(line.substr(start, pos - start));
    }
    fields.push_back(line.substr(start));
    const std::string where = "manifest line " + std::to_string(line_no);
    if (fields.size() != 3) throw FormatError(where + ": expected 3 tab-separated fields");
    if (fields[0].empty()) throw FormatError(where + ": empty path");
    if (fields[1] != "0" && fields[1] != "1") throw FormatError(where + ": label must be 0 or 1");
    out.push_back(ManifestEntry{fields[0], fields[1] == "1" ? 1 : 0, parse_split(fields[2])});
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  const std::string text = format_manifest(entries);
  io::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("manifest not found: " + path.string());
  const auto bytes = io::read_file(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()));
}

std::vector<ManifestEntry> filter_split(const std::vector<ManifestEntry>& entries, Split split) {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

}  // namespace tempnet
