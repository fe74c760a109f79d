#include "induce/tree.hpp"

#include <utility>

#include "induce/error.hpp"

namespace induce {

namespace {

// Recursively checks that nodes[pos...] describe the subtree over [start, end).
// Returns the position after the subtree.
std::size_t validate_subtree(const std::vector<BinaryTree::Node>& nodes,
                             std::size_t pos, std::size_t start,
                             std::size_t end) {
  if (end - start == 1) return pos;
  if (pos >= nodes.size()) {
    fail(ErrorCode::kMalformedTree, "missing internal node for span");
  }
  const auto& node = nodes[pos];
  if (node.start != start || node.end != end || node.split <= start ||
      node.split >= end) {
    fail(ErrorCode::kMalformedTree, "node does not partition its parent span");
  }
  pos = validate_subtree(nodes, pos + 1, start, node.split);
  return validate_subtree(nodes, pos, node.split, end);
}

void emit_sexpr(const std::vector<BinaryTree::Node>& nodes, std::size_t& pos,
                std::size_t start, std::size_t end,
                std::span<const std::string> tokens, std::string& out) {
  if (end - start == 1) {
    out += tokens[start];
    return;
  }
  const auto node = nodes[pos++];
  out += "(T ";
  emit_sexpr(nodes, pos, node.start, node.split, tokens, out);
  out += ' ';
  emit_sexpr(nodes, pos, node.split, node.end, tokens, out);
  out += ')';
}

}  // namespace

BinaryTree::BinaryTree(std::size_t leaf_count, std::vector<Node> nodes)
    : leaf_count_(leaf_count), nodes_(std::move(nodes)) {
  if (leaf_count_ == 0) {
    if (!nodes_.empty()) fail(ErrorCode::kMalformedTree, "nodes without leaves");
    return;
  }
  if (nodes_.size() != leaf_count_ - 1) {
    fail(ErrorCode::kMalformedTree, "expected leaf_count - 1 internal nodes");
  }
  if (validate_subtree(nodes_, 0, 0, leaf_count_) != nodes_.size()) {
    fail(ErrorCode::kMalformedTree, "trailing nodes");
  }
}

BinaryTree BinaryTree::build(
    std::size_t leaf_count,
    const std::function<std::size_t(std::size_t, std::size_t)>& split) {
  std::vector<Node> nodes;
  if (leaf_count > 0) nodes.reserve(leaf_count - 1);
  std::function<void(std::size_t, std::size_t)> visit = [&](std::size_t start,
                                                            std::size_t end) {
    if (end - start < 2) return;
    const std::size_t k = split(start, end);
    nodes.push_back({start, end, k});
    visit(start, k);
    visit(k, end);
  };
  visit(0, leaf_count);
  return BinaryTree(leaf_count, std::move(nodes));
}

BinaryTree BinaryTree::right_branching(std::size_t leaf_count) {
  return build(leaf_count, [](std::size_t start, std::size_t) { return start + 1; });
}

BinaryTree BinaryTree::left_branching(std::size_t leaf_count) {
  return build(leaf_count, [](std::size_t, std::size_t end) { return end - 1; });
}

SpanSet BinaryTree::spans(bool exclude_trivial) const {
  SpanSet out;
  for (const auto& node : nodes_) {
    if (exclude_trivial && node.start == 0 && node.end == leaf_count_) continue;
    out.insert({node.start, node.end});
  }
  return out;
}

std::string BinaryTree::to_sexpr(std::span<const std::string> tokens) const {
  if (tokens.size() != leaf_count_) {
    fail(ErrorCode::kLeafMismatch, "token count differs from tree leaf count");
  }
  if (leaf_count_ == 0) return "(T)";
  std::string out;
  std::size_t pos = 0;
  if (leaf_count_ == 1) return "(T " + tokens[0] + ")";
  emit_sexpr(nodes_, pos, 0, leaf_count_, tokens, out);
  return out;
}

}  // namespace induce
