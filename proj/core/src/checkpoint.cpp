#include "hfr/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "hfr/errors.hpp"

namespace hfr {

namespace {

constexpr char kMagic[8] = {'H', 'F', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IoError("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  auto len = read_pod<std::uint32_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw IoError("checkpoint: truncated string");
  return s;
}

}  // namespace

template <typename T>
void Checkpoint::put(const std::string& name, const Tensor<T>& t) {
  Entry e;
  e.dtype = sizeof(T) == 4 ? DType::kF32 : DType::kF64;
  e.shape = t.shape();
  e.bytes.resize(t.numel() * sizeof(T));
  std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
  entries_[name] = std::move(e);
}

template <typename T>
Tensor<T> Checkpoint::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw IoError("checkpoint: missing tensor '" + name + "'");
  const Entry& e = it->second;
  DType want = sizeof(T) == 4 ? DType::kF32 : DType::kF64;
  if (e.dtype != want)
    throw IoError("checkpoint: dtype mismatch for '" + name + "'");
  Tensor<T> t(e.shape);
  std::memcpy(t.data(), e.bytes.data(), e.bytes.size());
  return t;
}

template void Checkpoint::put<float>(const std::string&, const Tensor<float>&);
template void Checkpoint::put<double>(const std::string&, const Tensor<double>&);
template Tensor<float> Checkpoint::get<float>(const std::string&) const;
template Tensor<double> Checkpoint::get<double>(const std::string&) const;

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, sizeof kMagic);
  write_pod(out, kVersion);

  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    write_string(out, k);
    write_string(out, v);
  }

  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, e] : entries_) {
    write_string(out, name);
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) write_pod<std::uint64_t>(out, d);
    write_pod<std::uint64_t>(out, e.bytes.size());
    out.write(reinterpret_cast<const char*>(e.bytes.data()),
              static_cast<std::streamsize>(e.bytes.size()));
  }
  if (!out) throw IoError("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  if (read_pod<std::uint32_t>(in) != kVersion)
    throw IoError("checkpoint: unsupported version in " + path);

  Checkpoint ckpt;
  auto meta_count = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string k = read_string(in);
    ckpt.meta[k] = read_string(in);
  }

  auto tensor_count = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    std::string name = read_string(in);
    Entry e;
    e.dtype = static_cast<DType>(read_pod<std::uint8_t>(in));
    auto ndim = read_pod<std::uint32_t>(in);
    for (std::uint32_t d = 0; d < ndim; ++d)
      e.shape.push_back(static_cast<std::size_t>(read_pod<std::uint64_t>(in)));
    auto nbytes = read_pod<std::uint64_t>(in);
    e.bytes.resize(nbytes);
    in.read(reinterpret_cast<char*>(e.bytes.data()),
            static_cast<std::streamsize>(nbytes));
    if (!in) throw IoError("checkpoint: truncated tensor data in " + path);
    ckpt.entries_[name] = std::move(e);
  }
  return ckpt;
}

}  // namespace hfr
