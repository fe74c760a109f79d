#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "induce/embeddings.hpp"
#include "induce/tree.hpp"

namespace induce {

inline constexpr std::size_t kDefaultMaxLength = 45;
inline constexpr std::size_t kDefaultVocabSize = 10000;

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<std::size_t> ids;  // empty until encoded against a vocabulary
  std::size_t source_index = 0;  // line ordinal in the source file

  std::size_t size() const { return tokens.size(); }
};

// Dense token indices with a single reserved symbol (UNK) at index 0.
class Vocabulary {
 public:
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::size_t kUnkIndex = 0;

  Vocabulary();
  // Words are assigned indices 1.. in the given order; duplicates and the
  // UNK spelling are ignored.
  explicit Vocabulary(const std::vector<std::string>& words);

  std::size_t size() const { return tokens_.size(); }
  std::size_t unk_index() const { return kUnkIndex; }
  std::size_t encode(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  bool contains(std::string_view token) const;

  // Tokens in index order, including UNK at 0.
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Lowercases, whitespace-tokenizes and maps number-like tokens to "N".
// Throws kEmptySentence when no tokens remain.
std::vector<std::string> preprocess(std::string_view raw);

// A token is a number when it has a digit and no letters.
bool is_number_token(std::string_view token);

Sentence make_sentence(std::vector<std::string> tokens,
                       const Vocabulary* vocab, std::size_t source_index);
void encode(std::vector<Sentence>& sentences, const Vocabulary& vocab);

struct LoadedCorpus {
  std::vector<Sentence> sentences;
  std::vector<std::size_t> dropped;  // ordinals of removed lines
};

// Reads one sentence per line. Empty lines and sentences longer than
// max_length are dropped and reported. When embeddings is given, its records
// must align one-to-one with the kept sentences (kAlignment otherwise).
LoadedCorpus load_corpus(const std::filesystem::path& path,
                         const Vocabulary* vocab = nullptr,
                         std::size_t max_length = kDefaultMaxLength,
                         const EmbeddingStore* embeddings = nullptr);

void check_alignment(const std::vector<Sentence>& sentences,
                     const EmbeddingStore& embeddings);

// Keeps the max_size most frequent tokens; ties go to the earlier first
// occurrence.
Vocabulary build_vocabulary(const std::vector<Sentence>& sentences,
                            std::size_t max_size = kDefaultVocabSize);

struct GoldTree {
  BinaryTree tree;          // right-binarized, unary chains collapsed
  SpanSet original_spans;   // multi-token constituents before binarization
  std::vector<std::string> leaves;

  std::size_t leaf_count() const { return tree.leaf_count(); }
  SpanSet spans(bool exclude_trivial = true) const {
    return tree.spans(exclude_trivial);
  }
};

// Parses one labeled s-expression, e.g. "(S (NP (DT a) (NN dog)) (VP (VBZ runs)))".
// Labels are discarded. Throws kMalformedTree.
GoldTree parse_bracketed_tree(std::string_view text);

// One tree per line, parallel to the corpus file.
std::vector<GoldTree> load_trees(const std::filesystem::path& path);

// Picks trees[s.source_index] for each sentence and checks leaf counts.
std::vector<GoldTree> align_trees(const std::vector<GoldTree>& trees,
                                  const std::vector<Sentence>& sentences);

// Sentences plus optional aligned gold trees and embeddings.
struct Dataset {
  std::vector<Sentence> sentences;
  std::vector<GoldTree> trees;                // empty or parallel to sentences
  std::optional<EmbeddingStore> embeddings;   // parallel to sentences when set

  std::size_t size() const { return sentences.size(); }
  bool has_trees() const { return !trees.empty(); }
};

}  // namespace induce
