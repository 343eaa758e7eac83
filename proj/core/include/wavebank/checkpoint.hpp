#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wavebank/tensor.hpp"

namespace wavebank {

// Named-array container, the only binary format in the project. Layout
// (little-endian):
//   magic   8 bytes  "WVBKCKPT"
//   version u32      currently 1
//   count   u32
//   entry*  count times:
//     name_len u32, name bytes (UTF-8, no terminator)
//     rank     u32, dims u64 * rank
//     data     f64 * product(dims), row-major IEEE-754
// Entries preserve insertion order; round-trips are bit-exact.
class ArrayFile {
 public:
  static constexpr uint32_t kVersion = 1;

  void put(const std::string& name, Tensor value);
  bool has(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  // Helpers for non-array payloads, stored as arrays of codes/halves.
  void put_string(const std::string& name, const std::string& text);
  std::string get_string(const std::string& name) const;
  void put_u64(const std::string& name, const std::vector<uint64_t>& words);
  std::vector<uint64_t> get_u64(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static ArrayFile load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, size_t> index_;
};

}  // namespace wavebank
