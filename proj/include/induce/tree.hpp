#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace induce {

// Half-open token interval [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t width() const { return end - start; }
  auto operator<=>(const Span&) const = default;
};

using SpanSet = std::set<Span>;

// Unlabeled binary constituency tree. Internal nodes are stored in preorder;
// leaves are the token positions 0..leaf_count-1.
class BinaryTree {
 public:
  struct Node {
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t split = 0;  // left child covers [start, split), right [split, end)

    bool operator==(const Node&) const = default;
  };

  BinaryTree() = default;

  // Throws kMalformedTree unless the nodes form a full binary tree over
  // leaf_count leaves in preorder.
  BinaryTree(std::size_t leaf_count, std::vector<Node> nodes);

  // Builds a tree top-down; split(start, end) must return a point in (start, end).
  static BinaryTree build(
      std::size_t leaf_count,
      const std::function<std::size_t(std::size_t, std::size_t)>& split);

  static BinaryTree right_branching(std::size_t leaf_count);
  static BinaryTree left_branching(std::size_t leaf_count);

  std::size_t leaf_count() const { return leaf_count_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  // Spans of internal nodes. With exclude_trivial the whole-sentence span is
  // dropped as well (width-1 spans are never internal nodes).
  SpanSet spans(bool exclude_trivial = false) const;

  // "(T (T a b) c)"; tokens.size() must equal leaf_count().
  std::string to_sexpr(std::span<const std::string> tokens) const;

  bool operator==(const BinaryTree&) const = default;

 private:
  std::size_t leaf_count_ = 0;
  std::vector<Node> nodes_;
};

inline SpanSet tree_spans(const BinaryTree& tree, bool exclude_trivial) {
  return tree.spans(exclude_trivial);
}

}  // namespace induce
