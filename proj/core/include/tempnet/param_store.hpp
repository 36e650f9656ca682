#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "tempnet/tensor.hpp"

namespace tempnet {

enum class DType : std::uint8_t { F32 = 0, F64 = 1, Bytes = 2 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() {
  return DType::F32;
}
template <>
constexpr DType dtype_of<double>() {
  return DType::F64;
}

/// Named tensors keyed by hierarchical layer path, e.g.
/// "spatial.block2.conv1.kernel". Insertion order is preserved and is the
/// serialization order. String metadata (such as the network config) rides
/// along as separate entries.
template <typename T>
class ParamStore {
 public:
  static constexpr std::uint16_t kFormatVersion = 1;

  void add(const std::string& name, Tensor<T> value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<T>& get(const std::string& name) const;
  Tensor<T>& get(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  const std::string& name(std::size_t i) const { return entries_.at(i).first; }
  const Tensor<T>& at(std::size_t i) const { return entries_.at(i).second; }
  Tensor<T>& at(std::size_t i) { return entries_.at(i).second; }
  std::vector<std::string> names() const;

  void set_metadata(const std::string& key, std::string value) { metadata_[key] = std::move(value); }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  /// Same names in the same order, all zero.
  ParamStore zeros_like() const;

  bool operator==(const ParamStore& other) const {
    return entries_ == other.entries_ && metadata_ == other.metadata_;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, std::string> metadata_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

// "TNWT" binary format: magic, u16 version, u32 entry count, then per entry
// u16 name length, name bytes, u8 dtype, u8 rank, u32 extents, payload.
// Everything little-endian. Metadata entries use dtype 2 (raw bytes, rank 1)
// with a "meta:" name prefix.
template <typename T>
std::vector<std::uint8_t> serialize(const ParamStore<T>& store);
template <typename T>
ParamStore<T> deserialize(const std::vector<std::uint8_t>& bytes);

template <typename T>
void save_params(const ParamStore<T>& store, const std::filesystem::path& path);
template <typename T>
ParamStore<T> load_params(const std::filesystem::path& path);

/// dtype of the numeric entries in a TNWT file (F32 for an empty store).
DType peek_params_dtype(const std::filesystem::path& path);

}  // namespace tempnet
