#include "wavebank/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "wavebank/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");
static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559,
              "checkpoint serialization assumes IEEE-754 binary64");

namespace wavebank {

namespace {

constexpr char kMagic[8] = {'W', 'V', 'B', 'K', 'C', 'K', 'P', 'T'};

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t read_u32(std::istream& in, const std::string& what) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError("checkpoint: truncated while reading " + what);
  return v;
}

uint64_t read_u64(std::istream& in, const std::string& what) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError("checkpoint: truncated while reading " + what);
  return v;
}

}  // namespace

void ArrayFile::put(const std::string& name, Tensor value) {
  auto it = index_.find(name);
  if (it != index_.end()) {
    entries_[it->second].second = std::move(value);
    return;
  }
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(value));
}

bool ArrayFile::has(const std::string& name) const { return index_.count(name) > 0; }

const Tensor& ArrayFile::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw FormatError("checkpoint: missing entry '" + name + "'");
  return entries_[it->second].second;
}

void ArrayFile::put_string(const std::string& name, const std::string& text) {
  Tensor t({std::max<int64_t>(1, static_cast<int64_t>(text.size()))});
  for (size_t i = 0; i < text.size(); ++i) t[static_cast<int64_t>(i)] = static_cast<unsigned char>(text[i]);
  if (text.empty()) t[0] = 0.0;
  put(name, std::move(t));
}

std::string ArrayFile::get_string(const std::string& name) const {
  const Tensor& t = get(name);
  std::string out;
  for (int64_t i = 0; i < t.size(); ++i) {
    const int code = static_cast<int>(t[i]);
    if (code == 0) continue;  // empty-string sentinel
    out.push_back(static_cast<char>(code));
  }
  return out;
}

void ArrayFile::put_u64(const std::string& name, const std::vector<uint64_t>& words) {
  // Two f64 per word (low/high 32-bit halves): doubles hold 32-bit integers
  // exactly.
  Tensor t({std::max<int64_t>(1, 2 * static_cast<int64_t>(words.size()))});
  for (size_t i = 0; i < words.size(); ++i) {
    t[static_cast<int64_t>(2 * i)] = static_cast<double>(words[i] & 0xffffffffULL);
    t[static_cast<int64_t>(2 * i + 1)] = static_cast<double>(words[i] >> 32);
  }
  put(name, std::move(t));
}

std::vector<uint64_t> ArrayFile::get_u64(const std::string& name) const {
  const Tensor& t = get(name);
  std::vector<uint64_t> words;
  for (int64_t i = 0; i + 1 < t.size(); i += 2) {
    words.push_back(static_cast<uint64_t>(t[i]) | (static_cast<uint64_t>(t[i + 1]) << 32));
  }
  return words;
}

void ArrayFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create checkpoint: " + path.string());
  out.write(kMagic, sizeof kMagic);
  write_u32(out, kVersion);
  write_u32(out, static_cast<uint32_t>(entries_.size()));
  for (const auto& [name, value] : entries_) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<uint32_t>(value.rank()));
    for (int64_t d : value.shape()) write_u64(out, static_cast<uint64_t>(d));
    out.write(reinterpret_cast<const char*>(value.data()),
              static_cast<std::streamsize>(value.size() * 8));
  }
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

ArrayFile ArrayFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw FormatError("checkpoint: bad magic in " + path.string());
  }
  const uint32_t version = read_u32(in, "version");
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const uint32_t count = read_u32(in, "entry count");
  ArrayFile file;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_u32(in, "name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw FormatError("checkpoint: truncated name");
    const uint32_t rank = read_u32(in, "rank");
    Shape shape;
    int64_t n = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      const uint64_t d = read_u64(in, "dimension");
      shape.push_back(static_cast<int64_t>(d));
      n *= static_cast<int64_t>(d);
    }
    std::vector<double> data(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * 8));
    if (!in) throw FormatError("checkpoint: truncated data for '" + name + "'");
    file.put(name, Tensor(std::move(shape), std::move(data)));
  }
  return file;
}

}  // namespace wavebank
