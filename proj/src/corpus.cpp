#include "induce/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include "induce/error.hpp"

namespace induce {

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  tokens_.emplace_back(kUnkToken);
  index_.emplace(std::string(kUnkToken), kUnkIndex);
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
  for (const auto& w : words) {
    if (index_.contains(w)) continue;
    index_.emplace(w, tokens_.size());
    tokens_.push_back(w);
  }
}

std::size_t Vocabulary::encode(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkIndex : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

Vocabulary build_vocabulary(const std::vector<Sentence>& sentences, std::size_t max_size) {
  struct Entry {
    std::size_t count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Entry> counts;
  std::vector<std::string> order;
  for (const auto& s : sentences) {
    for (const auto& tok : s.tokens) {
      if (tok == Vocabulary::kUnkToken) continue;
      auto [it, inserted] = counts.try_emplace(tok, Entry{0, order.size()});
      if (inserted) order.push_back(tok);
      ++it->second.count;
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    const auto& ea = counts[a];
    const auto& eb = counts[b];
    if (ea.count != eb.count) return ea.count > eb.count;
    return ea.first < eb.first;
  });
  if (order.size() > max_size) order.resize(max_size);
  return Vocabulary(order);
}

// ---------------------------------------------------------------------------
// Preprocessing

bool is_number_token(std::string_view token) {
  bool digit = false;
  for (unsigned char c : token) {
    if (std::isdigit(c)) {
      digit = true;
    } else if (std::isalpha(c) || c >= 0x80) {
      return false;
    }
  }
  return digit;
}

std::vector<std::string> preprocess(std::string_view raw) {
  std::vector<std::string> out;
  std::istringstream in{std::string(raw)};
  std::string tok;
  while (in >> tok) {
    if (is_number_token(tok)) {
      out.emplace_back("N");
      continue;
    }
    // The number placeholder survives a second pass unchanged.
    if (tok != "N") {
      std::transform(tok.begin(), tok.end(), tok.begin(), [](unsigned char c) {
        return c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c);
      });
    }
    out.push_back(std::move(tok));
  }
  if (out.empty()) fail(ErrorCode::kEmptySentence, "no tokens in input line");
  return out;
}

Sentence make_sentence(std::vector<std::string> tokens, const Vocabulary* vocab,
                       std::size_t source_index) {
  Sentence s;
  s.tokens = std::move(tokens);
  s.source_index = source_index;
  if (vocab != nullptr) {
    s.ids.reserve(s.tokens.size());
    for (const auto& t : s.tokens) s.ids.push_back(vocab->encode(t));
  }
  return s;
}

void encode(std::vector<Sentence>& sentences, const Vocabulary& vocab) {
  for (auto& s : sentences) {
    s.ids.clear();
    s.ids.reserve(s.tokens.size());
    for (const auto& t : s.tokens) s.ids.push_back(vocab.encode(t));
  }
}

void check_alignment(const std::vector<Sentence>& sentences, const EmbeddingStore& embeddings) {
  if (embeddings.size() != sentences.size()) {
    fail(ErrorCode::kAlignment, "embedding file has " + std::to_string(embeddings.size()) +
                                    " records for " + std::to_string(sentences.size()) +
                                    " sentences");
  }
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (embeddings[i].token_count != sentences[i].size()) {
      fail(ErrorCode::kAlignment,
           "record " + std::to_string(i) + " has " + std::to_string(embeddings[i].token_count) +
               " tokens, sentence has " + std::to_string(sentences[i].size()));
    }
  }
}

LoadedCorpus load_corpus(const std::filesystem::path& path, const Vocabulary* vocab,
                         std::size_t max_length, const EmbeddingStore* embeddings) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open corpus " + path.string());
  LoadedCorpus corpus;
  std::string line;
  std::size_t ordinal = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> tokens;
    try {
      tokens = preprocess(line);
    } catch (const Error&) {
      corpus.dropped.push_back(ordinal++);
      continue;
    }
    if (tokens.size() > max_length) {
      corpus.dropped.push_back(ordinal++);
      continue;
    }
    corpus.sentences.push_back(make_sentence(std::move(tokens), vocab, ordinal++));
  }
  if (in.bad()) fail(ErrorCode::kIo, "read error on " + path.string());
  if (embeddings != nullptr) check_alignment(corpus.sentences, *embeddings);
  return corpus;
}

// ---------------------------------------------------------------------------
// Bracketed trees

namespace {

struct ParsedNode {
  std::string leaf;  // set for token leaves
  std::vector<std::unique_ptr<ParsedNode>> children;
  std::size_t leaves = 0;

  bool is_leaf() const { return children.empty(); }
};

class SexprReader {
 public:
  explicit SexprReader(std::string_view text) : text_(text) {}

  std::unique_ptr<ParsedNode> read_root() {
    skip_space();
    if (peek() != '(') fail(ErrorCode::kMalformedTree, "tree must start with '('");
    auto root = read_node();
    skip_space();
    if (pos_ != text_.size()) fail(ErrorCode::kMalformedTree, "trailing text after tree");
    return root;
  }

 private:
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  std::string read_atom() {
    const auto begin = pos_;
    while (pos_ < text_.size() && text_[pos_] != '(' && text_[pos_] != ')' &&
           !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
    return std::string(text_.substr(begin, pos_ - begin));
  }

  // Precondition: peek() == '('.
  std::unique_ptr<ParsedNode> read_node() {
    ++pos_;
    skip_space();
    auto node = std::make_unique<ParsedNode>();
    if (peek() != '(' && peek() != ')') read_atom();  // label, discarded
    while (true) {
      skip_space();
      const char c = peek();
      if (c == '\0') fail(ErrorCode::kMalformedTree, "unbalanced parentheses");
      if (c == ')') {
        ++pos_;
        break;
      }
      if (c == '(') {
        node->children.push_back(read_node());
      } else {
        auto leaf = std::make_unique<ParsedNode>();
        leaf->leaf = read_atom();
        leaf->leaves = 1;
        node->children.push_back(std::move(leaf));
      }
    }
    if (node->children.empty()) fail(ErrorCode::kMalformedTree, "empty constituent");
    for (const auto& child : node->children) node->leaves += child->leaves;
    return node;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

// Emits right-binarized internal nodes in preorder.
void binarize(const ParsedNode& node, std::size_t start,
              std::vector<BinaryTree::Node>& out, SpanSet& original,
              std::vector<std::string>& leaves) {
  if (node.is_leaf()) {
    leaves.push_back(node.leaf);
    return;
  }
  if (node.leaves >= 2) original.insert({start, start + node.leaves});
  if (node.children.size() == 1) {
    binarize(*node.children.front(), start, out, original, leaves);
    return;
  }
  const std::size_t end = start + node.leaves;
  std::size_t offset = start;
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    const auto& child = *node.children[i];
    if (i + 1 < node.children.size()) {
      out.push_back({offset, end, offset + child.leaves});
    }
    binarize(child, offset, out, original, leaves);
    offset += child.leaves;
  }
}

}  // namespace

GoldTree parse_bracketed_tree(std::string_view text) {
  auto root = SexprReader(text).read_root();
  GoldTree gold;
  std::vector<BinaryTree::Node> nodes;
  binarize(*root, 0, nodes, gold.original_spans, gold.leaves);
  gold.tree = BinaryTree(root->leaves, std::move(nodes));
  return gold;
}

std::vector<GoldTree> load_trees(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open tree file " + path.string());
  std::vector<GoldTree> trees;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    try {
      trees.push_back(parse_bracketed_tree(line));
    } catch (const Error& e) {
      fail(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return trees;
}

std::vector<GoldTree> align_trees(const std::vector<GoldTree>& trees,
                                  const std::vector<Sentence>& sentences) {
  std::vector<GoldTree> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    if (s.source_index >= trees.size()) {
      fail(ErrorCode::kAlignment, "no gold tree for line " + std::to_string(s.source_index));
    }
    const auto& t = trees[s.source_index];
    if (t.leaf_count() != s.size()) {
      fail(ErrorCode::kLeafMismatch, "line " + std::to_string(s.source_index) + ": tree has " +
                                         std::to_string(t.leaf_count()) + " leaves, sentence has " +
                                         std::to_string(s.size()) + " tokens");
    }
    out.push_back(t);
  }
  return out;
}

}  // namespace induce
