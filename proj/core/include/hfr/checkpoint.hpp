#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hfr/nn/layers.hpp"
#include "hfr/tensor.hpp"

namespace hfr {

// Archive of named parameter arrays plus string metadata (epoch, seed,
// config hash, optimizer state lives under optim/...). Byte layout is
// documented in docs/formats.md; save/load round-trips are lossless.
class Checkpoint {
 public:
  enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

  struct Entry {
    DType dtype;
    std::vector<std::size_t> shape;
    std::vector<unsigned char> bytes;
  };

  std::map<std::string, std::string> meta;

  template <typename T>
  void put(const std::string& name, const Tensor<T>& t);

  template <typename T>
  Tensor<T> get(const std::string& name) const;

  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  std::vector<std::string> names() const;
  const std::map<std::string, Entry>& entries() const { return entries_; }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::map<std::string, Entry> entries_;
};

// Parameter registry <-> checkpoint, names prefixed verbatim.
template <typename T>
void save_params(Checkpoint& ckpt, const nn::ParamRegistry<T>& params) {
  for (const auto& p : params) ckpt.put(p.name, *p.value);
}

template <typename T>
void load_params(const Checkpoint& ckpt, nn::ParamRegistry<T>& params) {
  for (auto& p : params) *p.value = ckpt.get<T>(p.name);
}

}  // namespace hfr
