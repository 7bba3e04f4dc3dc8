#include "hml/hierarchy.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include <json.hpp>

#include "hml/error.hpp"

namespace hml {

namespace {

constexpr std::uint64_t kMaxParent = (std::numeric_limits<std::uint64_t>::max() - 2) / 2;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t node) {
  std::uint64_t x = seed ^ (node * 0x9E3779B97F4A7C15ull);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

NodeId left_child(NodeId n) {
  if (n.index > kMaxParent) throw Error("class tree too deep for linear indexing");
  return {2 * n.index + 1};
}

NodeId right_child(NodeId n) {
  if (n.index > kMaxParent) throw Error("class tree too deep for linear indexing");
  return {2 * n.index + 2};
}

std::optional<NodeId> parent(NodeId n) {
  if (n.index == 0) return std::nullopt;
  return NodeId{(n.index - 1) / 2};
}

const NodeRecord& ClassTree::at(NodeId n) const {
  auto it = nodes.find(n);
  if (it == nodes.end())
    throw ArgumentError("node " + std::to_string(n.index) + " is not in the tree");
  return it->second;
}

bool ClassTree::is_leaf(NodeId n) const { return at(n).class_ids.size() == 1; }

std::vector<NodeId> ClassTree::internal_nodes() const {
  std::vector<NodeId> out;
  for (const auto& [id, rec] : nodes)
    if (rec.class_ids.size() > 1) out.push_back(id);
  return out;
}

std::vector<NodeId> ClassTree::leaves() const {
  std::vector<NodeId> out;
  for (const auto& [id, rec] : nodes)
    if (rec.class_ids.size() == 1) out.push_back(id);
  return out;
}

int ClassTree::depth() const {
  int best = 0;
  for (const auto& [id, rec] : nodes) {
    int d = 0;
    for (auto p = parent(id); p; p = parent(*p)) ++d;
    best = std::max(best, d);
  }
  return best;
}

std::optional<std::pair<NodeId, NodeId>> children(const ClassTree& tree, NodeId node) {
  if (tree.is_leaf(node)) return std::nullopt;
  return std::pair{left_child(node), right_child(node)};
}

namespace {

void split_node(ClassTree& tree, NodeId node, const CentroidSet& centroids,
                const std::vector<Index>& rows_of_class, const MmcConfig& cfg) {
  const auto& ids = tree.nodes.at(node).class_ids;
  if (ids.size() < 2) return;

  std::vector<int> left, right;
  if (ids.size() == 2) {
    left = {ids[0]};
    right = {ids[1]};
  } else {
    Eigen::MatrixXd pts(static_cast<Index>(ids.size()), centroids.centroids.cols());
    for (std::size_t r = 0; r < ids.size(); ++r)
      pts.row(static_cast<Index>(r)) = centroids.centroids.row(rows_of_class[ids[r]]);
    MmcConfig node_cfg = cfg;
    node_cfg.seed = mix_seed(cfg.seed, node.index);
    try {
      const auto result = mmc_bipartition(pts, node_cfg);
      for (std::size_t r = 0; r < ids.size(); ++r)
        (result.assignment[r] == result.assignment[0] ? left : right).push_back(ids[r]);
    } catch (const DegenerateInputError&) {
      left = {ids[0]};
      right.assign(ids.begin() + 1, ids.end());
      tree.warnings.push_back("node " + std::to_string(node.index) +
                              ": identical centroids, fell back to 1/rest split");
    }
  }
  const auto l = left_child(node);
  const auto r = right_child(node);
  tree.nodes[l] = NodeRecord{std::move(left)};
  tree.nodes[r] = NodeRecord{std::move(right)};
  split_node(tree, l, centroids, rows_of_class, cfg);
  split_node(tree, r, centroids, rows_of_class, cfg);
}

}  // namespace

ClassTree build_tree(const CentroidSet& centroids, const MmcConfig& cfg) {
  cfg.validate();
  const auto m = static_cast<int>(centroids.class_ids.size());
  if (m < 1) throw ArgumentError("build_tree: needs at least one class");
  if (centroids.centroids.rows() != m)
    throw ShapeError("build_tree: centroid rows do not match class ids");

  int max_id = *std::max_element(centroids.class_ids.begin(), centroids.class_ids.end());
  std::vector<Index> rows_of_class(max_id + 1, -1);
  for (int r = 0; r < m; ++r) rows_of_class[centroids.class_ids[r]] = r;

  ClassTree tree;
  tree.num_classes = m;
  std::vector<int> all = centroids.class_ids;
  std::sort(all.begin(), all.end());
  tree.nodes[kRoot] = NodeRecord{std::move(all)};
  split_node(tree, kRoot, centroids, rows_of_class, cfg);
  return tree;
}

std::vector<TreeViolation> validate_tree(const ClassTree& tree, int num_classes) {
  std::vector<TreeViolation> out;
  auto report = [&](NodeId n, std::string rule, std::string detail) {
    out.push_back({n, std::move(rule), std::move(detail)});
  };

  if (!tree.contains(kRoot)) {
    report(kRoot, "root", "root node is missing");
    return out;
  }
  std::vector<int> expected(num_classes);
  for (int c = 0; c < num_classes; ++c) expected[c] = c;
  {
    auto root = tree.at(kRoot).class_ids;
    std::sort(root.begin(), root.end());
    if (root != expected) report(kRoot, "root", "root does not hold exactly all classes");
  }

  std::vector<int> leaf_hits(num_classes, 0);
  for (const auto& [id, rec] : tree.nodes) {
    if (rec.class_ids.empty()) {
      report(id, "nonempty", "node holds no classes");
      continue;
    }
    if (id != kRoot) {
      const auto p = parent(id);
      if (!tree.contains(*p)) report(id, "orphan", "parent slot is empty");
    }
    for (int c : rec.class_ids)
      if (c < 0 || c >= num_classes)
        report(id, "class-range", "class id " + std::to_string(c) + " out of range");

    const bool leaf = rec.class_ids.size() == 1;
    const bool has_l = id.index <= kMaxParent && tree.contains(left_child(id));
    const bool has_r = id.index <= kMaxParent && tree.contains(right_child(id));
    if (leaf) {
      if (has_l || has_r) report(id, "leaf", "singleton node has children");
      const int c = rec.class_ids.front();
      if (c >= 0 && c < num_classes) ++leaf_hits[c];
      continue;
    }
    if (!has_l || !has_r) {
      report(id, "children", "internal node is missing a child");
      continue;
    }
    const auto& lc = tree.at(left_child(id)).class_ids;
    const auto& rc = tree.at(right_child(id)).class_ids;
    std::multiset<int> merged(lc.begin(), lc.end());
    merged.insert(rc.begin(), rc.end());
    std::multiset<int> own(rec.class_ids.begin(), rec.class_ids.end());
    if (lc.empty() || rc.empty() || merged != own) {
      std::set<int> l(lc.begin(), lc.end());
      bool overlap = std::any_of(rc.begin(), rc.end(), [&](int c) { return l.contains(c); });
      report(id, "partition",
             overlap ? "children's class sets overlap"
                     : "children's class sets do not partition the parent");
    }
  }
  for (int c = 0; c < num_classes; ++c) {
    if (leaf_hits[c] != 1)
      report(kRoot, "leaf-cover",
             "class " + std::to_string(c) + " appears in " + std::to_string(leaf_hits[c]) +
                 " leaves");
  }
  return out;
}

namespace {

std::string node_label(const NodeRecord& rec, const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < rec.class_ids.size(); ++i) {
    if (i) s += ", ";
    const int c = rec.class_ids[i];
    s += c >= 0 && c < static_cast<int>(names.size()) ? names[c] : std::to_string(c);
  }
  return s;
}

void print_node(const ClassTree& tree, NodeId id, int level,
                const std::vector<std::string>& names, std::string& out) {
  const auto& rec = tree.at(id);
  out += std::string(2 * level, ' ');
  out += '[' + std::to_string(id.index) + "] ";
  out += rec.class_ids.size() == 1 ? node_label(rec, names) : "{" + node_label(rec, names) + "}";
  out += '\n';
  if (auto kids = children(tree, id)) {
    print_node(tree, kids->first, level + 1, names, out);
    print_node(tree, kids->second, level + 1, names, out);
  }
}

}  // namespace

std::string format_tree(const ClassTree& tree, const std::vector<std::string>& class_names) {
  std::string out;
  if (tree.contains(kRoot)) print_node(tree, kRoot, 0, class_names, out);
  return out;
}

std::string tree_to_json(const ClassTree& tree, const std::vector<std::string>& class_names) {
  nlohmann::json doc;
  doc["num_classes"] = tree.num_classes;
  doc["class_names"] = class_names;
  auto& nodes = doc["nodes"] = nlohmann::json::array();
  for (const auto& [id, rec] : tree.nodes)
    nodes.push_back({{"index", id.index}, {"class_ids", rec.class_ids}});
  return doc.dump(2) + "\n";
}

ClassTree tree_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    ClassTree tree;
    tree.num_classes = doc.at("num_classes").get<int>();
    for (const auto& n : doc.at("nodes"))
      tree.nodes[NodeId{n.at("index").get<std::uint64_t>()}] =
          NodeRecord{n.at("class_ids").get<std::vector<int>>()};
    return tree;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("tree file: ") + e.what(), 0);
  }
}

}  // namespace hml
