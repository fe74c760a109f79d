#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace induce {

// Per-sentence token embedding matrix, row-major token_count x dim.
struct EmbeddingRecord {
  std::uint32_t token_count = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t token) const {
    return std::span<const float>(values).subspan(token * dim, dim);
  }
};

// Precomputed language-model token embeddings, one record per sentence.
//
// On-disk layout (little-endian): "EMB1", u32 version = 1, u32 sentence_count,
// u32 dim; then per sentence a u32 token_count followed by token_count * dim
// f32 values; then sentence_count u64 byte offsets of each record's
// token_count field.
class EmbeddingStore {
 public:
  static constexpr std::uint32_t kVersion = 1;

  EmbeddingStore() = default;
  explicit EmbeddingStore(std::uint32_t dim) : dim_(dim) {}

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  const EmbeddingRecord& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<EmbeddingRecord>& records() const { return records_; }

  // Appends without validation; write_embeddings() enforces consistency.
  void add(EmbeddingRecord record) { records_.push_back(std::move(record)); }
  void add(std::uint32_t token_count, std::vector<float> values) {
    add(EmbeddingRecord{token_count, dim_, std::move(values)});
  }

  // Byte offsets the records occupy in the serialized file.
  std::vector<std::uint64_t> offsets() const;

  // Bitwise equality of dims, counts and every float.
  bool identical(const EmbeddingStore& other) const;

 private:
  std::uint32_t dim_ = 0;
  std::vector<EmbeddingRecord> records_;
};

// Throws kDimMismatch when a record disagrees with the store dim, kFormat
// for empty records, kIo on write failure.
void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& path);

// Throws kFormat on bad magic, version, truncation or index; kIo when unreadable.
EmbeddingStore read_embeddings(const std::filesystem::path& path);

}  // namespace induce
