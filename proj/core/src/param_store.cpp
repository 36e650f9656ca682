#include "tempnet/param_store.hpp"

#include <fstream>
#include <iterator>

#include "tempnet/byte_io.hpp"

namespace tempnet {

namespace io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace io

namespace {

constexpr char kMagic[4] = {'T', 'N', 'W', 'T'};
const std::string kMetaPrefix = "meta:";

}  // namespace

template <typename T>
void ParamStore<T>::add(const std::string& name, Tensor<T> value) {
  if (name.empty()) throw ValueError("parameter name must not be empty");
  if (name.rfind(kMetaPrefix, 0) == 0) throw ValueError("parameter name '" + name + "' uses the reserved meta: prefix");
  if (contains(name)) throw ValueError("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(value));
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

template <typename T>
Tensor<T>& ParamStore<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

template <typename T>
std::vector<std::string> ParamStore<T>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [n, _] : entries_) out.push_back(n);
  return out;
}

template <typename T>
ParamStore<T> ParamStore<T>::zeros_like() const {
  ParamStore out;
  for (const auto& [n, t] : entries_) out.add(n, Tensor<T>(t.shape()));
  return out;
}

template <typename T>
std::vector<std::uint8_t> serialize(const ParamStore<T>& store) {
  io::ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint16_t>(ParamStore<T>::kFormatVersion);
  const std::size_t count = store.size() + store.metadata().size();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(count));
  auto put_name = [&](const std::string& name) {
    if (name.size() > 0xFFFF) throw ValueError("entry name too long: " + name.substr(0, 32) + "...");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name.data(), name.size());
  };
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Tensor<T>& t = store.at(i);
    put_name(store.name(i));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(dtype_of<T>()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t e : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(e));
    for (T v : t.data()) w.put<T>(v);
  }
  for (const auto& [key, value] : store.metadata()) {
    put_name(kMetaPrefix + key);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(DType::Bytes));
    w.put<std::uint8_t>(1);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(value.size()));
    w.put_bytes(value.data(), value.size());
  }
  return std::move(w.bytes());
}

namespace {

struct Header {
  std::uint16_t version;
  std::uint32_t count;
};

Header read_header(io::ByteReader& r) {
  if (r.get_string(4) != std::string(kMagic, 4)) throw FormatError("TNWT: bad magic");
  Header h{r.get<std::uint16_t>(), r.get<std::uint32_t>()};
  if (h.version != 1) throw FormatError("TNWT: unsupported version " + std::to_string(h.version));
  return h;
}

}  // namespace

template <typename T>
ParamStore<T> deserialize(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes, "TNWT");
  const Header h = read_header(r);
  ParamStore<T> store;
  for (std::uint32_t i = 0; i < h.count; ++i) {
    const auto name_len = r.get<std::uint16_t>();
    std::string name = r.get_string(name_len);
    const auto dtype = r.get<std::uint8_t>();
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& e : shape) e = r.get<std::uint32_t>();
    if (dtype == static_cast<std::uint8_t>(DType::Bytes)) {
      if (name.rfind(kMetaPrefix, 0) != 0 || rank != 1) throw FormatError("TNWT: malformed metadata entry '" + name + "'");
      store.set_metadata(name.substr(kMetaPrefix.size()), r.get_string(shape[0]));
      continue;
    }
    if (dtype != static_cast<std::uint8_t>(dtype_of<T>())) {
      throw FormatError("TNWT: entry '" + name + "' has dtype code " + std::to_string(dtype) + ", expected " +
                        std::to_string(static_cast<int>(dtype_of<T>())));
    }
    if (rank == 0) throw FormatError("TNWT: entry '" + name + "' has rank 0");
    const std::size_t n = shape_numel(shape);
    if (n * sizeof(T) > r.remaining()) throw FormatError("TNWT: truncated payload for '" + name + "'");
    std::vector<T> data(n);
    for (auto& v : data) v = r.get<T>();
    store.add(name, Tensor<T>(std::move(shape), std::move(data)));
  }
  if (!r.at_end()) throw FormatError("TNWT: trailing bytes after last entry");
  return store;
}

template <typename T>
void save_params(const ParamStore<T>& store, const std::filesystem::path& path) {
  io::write_file(path, serialize(store));
}

template <typename T>
ParamStore<T> load_params(const std::filesystem::path& path) {
  return deserialize<T>(io::read_file(path));
}

DType peek_params_dtype(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, "TNWT");
  const Header h = read_header(r);
  for (std::uint32_t i = 0; i < h.count; ++i) {
    r.get_string(r.get<std::uint16_t>());
    const auto dtype = r.get<std::uint8_t>();
    const auto rank = r.get<std::uint8_t>();
    std::size_t n = 1;
    for (std::uint8_t a = 0; a < rank; ++a) n *= r.get<std::uint32_t>();
    if (dtype == 0) return DType::F32;
    if (dtype == 1) return DType::F64;
    if (dtype != 2) throw FormatError("TNWT: unknown dtype code " + std::to_string(dtype));
    r.get_string(n);
  }
  return DType::F32;
}

template class ParamStore<float>;
template class ParamStore<double>;
template std::vector<std::uint8_t> serialize<float>(const ParamStore<float>&);
template std::vector<std::uint8_t> serialize<double>(const ParamStore<double>&);
template ParamStore<float> deserialize<float>(const std::vector<std::uint8_t>&);
template ParamStore<double> deserialize<double>(const std::vector<std::uint8_t>&);
template void save_params<float>(const ParamStore<float>&, const std::filesystem::path&);
template void save_params<double>(const ParamStore<double>&, const std::filesystem::path&);
template ParamStore<float> load_params<float>(const std::filesystem::path&);
template ParamStore<double> load_params<double>(const std::filesystem::path&);

}  // namespace tempnet
