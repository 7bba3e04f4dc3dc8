#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hml/dataset.hpp"
#include "hml/mmc.hpp"

namespace hml {

/// Position of a node in the linear-array layout: root is 0, the children
/// of node i are 2i+1 (left) and 2i+2 (right).
struct NodeId {
  std::uint64_t index = 0;

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

inline constexpr NodeId kRoot{0};

NodeId left_child(NodeId n);
NodeId right_child(NodeId n);
std::optional<NodeId> parent(NodeId n);

struct NodeRecord {
  std::vector<int> class_ids;  // sorted ascending
};

/// Binary class tree stored sparsely: only occupied slots are present, so a
/// skewed tree does not need an exponentially large dense array.
struct ClassTree {
  std::map<NodeId, NodeRecord> nodes;
  int num_classes = 0;
  /// Non-fatal events from construction (e.g. degenerate-split fallbacks).
  std::vector<std::string> warnings;

  bool contains(NodeId n) const { return nodes.contains(n); }
  const NodeRecord& at(NodeId n) const;
  bool is_leaf(NodeId n) const;
  std::vector<NodeId> internal_nodes() const;  // ascending index order
  std::vector<NodeId> leaves() const;
  /// Number of edges on the longest root-to-leaf path.
  int depth() const;
};

/// Children of an internal node, or nullopt for a leaf. Throws
/// ArgumentError when `node` is not in the tree.
std::optional<std::pair<NodeId, NodeId>> children(const ClassTree& tree, NodeId node);

/// Recursively bipartitions the centroids with max-margin clustering. Nodes
/// with two classes split 1/1 directly. The left child always holds the
/// node's smallest class id.
ClassTree build_tree(const CentroidSet& centroids, const MmcConfig& cfg);

struct TreeViolation {
  NodeId node;
  std::string rule;
  std::string detail;
};

std::vector<TreeViolation> validate_tree(const ClassTree& tree, int num_classes);

/// Indented printout, one node per line.
std::string format_tree(const ClassTree& tree, const std::vector<std::string>& class_names);

/// JSON document {"num_classes", "class_names", "nodes": [{"index","class_ids"}]}.
std::string tree_to_json(const ClassTree& tree, const std::vector<std::string>& class_names);
ClassTree tree_from_json(const std::string& text);

}  // namespace hml
