#include "induce/embeddings.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "binary_io.hpp"
#include "induce/error.hpp"

namespace induce {

namespace {
constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::uint64_t kHeaderBytes = 16;
}  // namespace

std::vector<std::uint64_t> EmbeddingStore::offsets() const {
  std::vector<std::uint64_t> out;
  out.reserve(records_.size());
  std::uint64_t pos = kHeaderBytes;
  for (const auto& r : records_) {
    out.push_back(pos);
    pos += 4 + 4ull * r.values.size();
  }
  return out;
}

bool EmbeddingStore::identical(const EmbeddingStore& other) const {
  if (dim_ != other.dim_ || records_.size() != other.records_.size()) return false;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& a = records_[i];
    const auto& b = other.records_[i];
    if (a.token_count != b.token_count || a.dim != b.dim ||
        a.values.size() != b.values.size()) {
      return false;
    }
    if (!a.values.empty() &&
        std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& r = store[i];
    if (r.dim != store.dim()) {
      fail(ErrorCode::kDimMismatch, "record " + std::to_string(i) + " has dim " +
                                        std::to_string(r.dim) + ", store dim is " +
                                        std::to_string(store.dim()));
    }
    if (r.values.size() != static_cast<std::size_t>(r.token_count) * r.dim) {
      fail(ErrorCode::kDimMismatch, "record " + std::to_string(i) + " value count mismatch");
    }
    if (r.token_count == 0) {
      fail(ErrorCode::kFormat, "record " + std::to_string(i) + " has no tokens");
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  binio::put_u32(out, EmbeddingStore::kVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(store.size()));
  binio::put_u32(out, store.dim());
  for (const auto& r : store.records()) {
    binio::put_u32(out, r.token_count);
    for (float v : r.values) binio::put_f32(out, v);
  }
  for (auto offset : store.offsets()) binio::put_u64(out, offset);
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

EmbeddingStore read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    fail(ErrorCode::kFormat, path.string() + ": bad magic");
  }
  const auto version = binio::get_u32(in);
  if (version != EmbeddingStore::kVersion) {
    fail(ErrorCode::kFormat, path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto count = binio::get_u32(in);
  const auto dim = binio::get_u32(in);
  EmbeddingStore store(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    EmbeddingRecord r;
    r.dim = dim;
    r.token_count = binio::get_u32(in);
    if (r.token_count == 0) fail(ErrorCode::kFormat, "record with zero tokens");
    const std::size_t n = static_cast<std::size_t>(r.token_count) * dim;
    r.values.resize(n);
    if (n > 0 && !in.read(reinterpret_cast<char*>(r.values.data()),
                          static_cast<std::streamsize>(n * sizeof(float)))) {
      fail(ErrorCode::kFormat, path.string() + ": truncated record " + std::to_string(i));
    }
    if constexpr (std::endian::native == std::endian::big) {
      for (auto& v : r.values) {
        auto bits = std::bit_cast<std::uint32_t>(v);
        bits = __builtin_bswap32(bits);
        v = std::bit_cast<float>(bits);
      }
    }
    store.add(std::move(r));
  }
  const auto expected = store.offsets();
  for (std::uint32_t i = 0; i < count; ++i) {
    if (binio::get_u64(in) != expected[i]) {
      fail(ErrorCode::kFormat, path.string() + ": index entry " + std::to_string(i) +
                                   " does not match record layout");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorCode::kFormat, path.string() + ": trailing bytes after index");
  }
  return store;
}

}  // namespace induce
