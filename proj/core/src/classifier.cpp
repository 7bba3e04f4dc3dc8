#include "hml/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>

#include "hml/error.hpp"

namespace hml {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::flat_knn: return "flat_knn";
    case Variant::flat_lmnn_knn: return "flat_lmnn_knn";
    case Variant::hier_no_metric: return "hier_no_metric";
    case Variant::hier_global_metric: return "hier_global_metric";
    case Variant::hier_per_node_metric: return "hier_per_node_metric";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (auto v : all_variants())
    if (name == to_string(v)) return v;
  throw ArgumentError("unknown variant '" + name + "'");
}

std::vector<Variant> all_variants() {
  return {Variant::flat_knn, Variant::flat_lmnn_knn, Variant::hier_no_metric,
          Variant::hier_global_metric, Variant::hier_per_node_metric};
}

bool uses_metric_learning(Variant v) {
  return v == Variant::flat_lmnn_knn || v == Variant::hier_global_metric ||
         v == Variant::hier_per_node_metric;
}

bool is_hierarchical(Variant v) {
  return v == Variant::hier_no_metric || v == Variant::hier_global_metric ||
         v == Variant::hier_per_node_metric;
}

void VariantSpec::validate() const {
  if (K < 1) throw ArgumentError("K must be positive");
  if (uses_metric_learning(variant) != lmnn.has_value())
    throw ArgumentError(std::string("variant ") + to_string(variant) +
                        (lmnn ? " takes no lmnn config" : " needs an lmnn config"));
  if (is_hierarchical(variant) && !mmc)
    throw ArgumentError(std::string("variant ") + to_string(variant) + " needs an mmc config");
  if (lmnn) lmnn->validate();
  if (mmc) mmc->validate();
}

namespace {

struct Neighbor {
  double sq;
  Index row;
};

// The K nearest rows (by squared form, ties to the lower row index).
std::vector<Neighbor> nearest(const Eigen::MatrixXd& features, std::span<const Index> rows,
                              const MetricMatrix& metric,
                              const Eigen::Ref<const Eigen::VectorXd>& x, int K) {
  std::vector<Neighbor> all;
  all.reserve(rows.size());
  for (Index r : rows)
    all.push_back({metric.squared_form(features.row(r).transpose(), x), r});
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(K), all.size());
  auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.sq < b.sq || (a.sq == b.sq && a.row < b.row);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                    less);
  all.resize(take);
  return all;
}

double distance_of(const Neighbor& n) { return std::sqrt(std::max(0.0, n.sq)); }

void check_dim(Index expected, Index got) {
  if (expected != got)
    throw ShapeError("input has dimension " + std::to_string(got) + ", model expects " +
                     std::to_string(expected));
}

}  // namespace

WalkTrace predict_with_trace(const HierarchicalModel& model,
                             const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_dim(model.dim(), x.size());
  WalkTrace trace;
  NodeId node = kRoot;
  while (true) {
    trace.path.push_back(node);
    const auto& rec = model.tree.at(node);
    if (rec.class_ids.size() == 1) {
      trace.label = rec.class_ids.front();
      return trace;
    }
    const auto& rows = model.node_samples.at(node);
    const auto& sides = model.node_child_labels.at(node);
    const auto nbrs = nearest(model.train_features, rows, model.node_metrics.at(node), x, model.K);

    int votes[2] = {0, 0};
    double dist_sum[2] = {0.0, 0.0};
    for (const auto& n : nbrs) {
      // rows are ascending, so the side of a row is found by binary search.
      const auto pos = std::lower_bound(rows.begin(), rows.end(), n.row) - rows.begin();
      const int s = static_cast<int>(sides[pos]);
      ++votes[s];
      dist_sum[s] += distance_of(n);
    }
    Side go = Side::left;
    if (votes[1] > votes[0]) {
      go = Side::right;
    } else if (votes[1] == votes[0] && votes[0] > 0 &&
               dist_sum[1] / votes[1] < dist_sum[0] / votes[0]) {
      go = Side::right;
    }
    node = go == Side::left ? left_child(node) : right_child(node);
  }
}

int predict(const HierarchicalModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return predict_with_trace(model, x).label;
}

FlatKnn::FlatKnn(Eigen::MatrixXd features, std::vector<int> labels, int num_classes, int K,
                 MetricMatrix metric)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      K_(K),
      metric_(std::move(metric)) {
  if (K_ < 1) throw ArgumentError("K must be positive");
  if (features_.rows() == 0) throw ArgumentError("flat knn: no training samples");
  if (metric_.dim() != features_.cols()) throw ShapeError("flat knn: metric dimension mismatch");
}

int FlatKnn::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_dim(dim(), x.size());
  std::vector<Index> rows(features_.rows());
  for (Index r = 0; r < features_.rows(); ++r) rows[r] = r;
  const auto nbrs = nearest(features_, rows, metric_, x, K_);
  std::vector<int> votes(num_classes_, 0);
  std::vector<double> dist_sum(num_classes_, 0.0);
  for (const auto& n : nbrs) {
    ++votes[labels_[n.row]];
    dist_sum[labels_[n.row]] += distance_of(n);
  }
  int best = -1;
  for (int c = 0; c < num_classes_; ++c) {
    if (votes[c] == 0) continue;
    if (best < 0 || votes[c] > votes[best] ||
        (votes[c] == votes[best] && dist_sum[c] / votes[c] < dist_sum[best] / votes[best]))
      best = c;
  }
  return best;
}

namespace {

std::set<int> class_set(const ClassTree& tree, NodeId n) {
  const auto& ids = tree.at(n).class_ids;
  return {ids.begin(), ids.end()};
}

// Fills node_samples and node_child_labels, checking that both children of
// every internal node have training samples.
void lay_out_nodes(HierarchicalModel& model, const LabeledDataset& train) {
  const int m = train.num_classes();
  const auto violations = validate_tree(model.tree, m);
  if (!violations.empty())
    throw ArgumentError("tree does not match the training classes: node " +
                        std::to_string(violations.front().node.index) + " " +
                        violations.front().rule + ": " + violations.front().detail);
  for (const auto& [id, rec] : model.tree.nodes) {
    const auto own = class_set(model.tree, id);
    auto& rows = model.node_samples[id];
    for (Index i = 0; i < train.size(); ++i)
      if (own.contains(train.labels[i])) rows.push_back(i);
    if (rec.class_ids.size() == 1) continue;

    const auto left = class_set(model.tree, left_child(id));
    auto& sides = model.node_child_labels[id];
    Index n_left = 0;
    for (Index r : rows) {
      const bool is_left = left.contains(train.labels[r]);
      sides.push_back(is_left ? Side::left : Side::right);
      n_left += is_left;
    }
    if (n_left == 0 || n_left == static_cast<Index>(rows.size()))
      throw TrainingError("node " + std::to_string(id.index) + ": " +
                              (n_left == 0 ? "left" : "right") +
                              " child has no training samples",
                          id.index);
  }
}

HierarchicalModel empty_model(const LabeledDataset& train, const ClassTree& tree, int K,
                              Variant variant) {
  if (K < 1) throw ArgumentError("K must be positive");
  // Empty classes are reported by lay_out_nodes, naming the node.
  validate_dataset(train, false);
  HierarchicalModel model;
  model.tree = tree;
  model.tree.warnings.clear();
  model.train_features = train.features;
  model.train_labels = train.labels;
  model.class_names.resize(train.num_classes());
  for (int c = 0; c < train.num_classes(); ++c) model.class_names[c] = train.class_name(c);
  model.K = K;
  model.variant = variant;
  lay_out_nodes(model, train);
  return model;
}

// Internal nodes in Algorithm-1 order: node, left subtree, right subtree.
void preorder(const ClassTree& tree, NodeId n, std::vector<NodeId>& out) {
  if (tree.is_leaf(n)) return;
  out.push_back(n);
  preorder(tree, left_child(n), out);
  preorder(tree, right_child(n), out);
}

struct NodeFit {
  MetricMatrix metric;
  NodeFitSummary summary;
};

NodeFit fit_node(const HierarchicalModel& model, NodeId id, const LmnnConfig& cfg) {
  const auto& rows = model.node_samples.at(id);
  const auto& sides = model.node_child_labels.at(id);
  Eigen::MatrixXd x(static_cast<Index>(rows.size()), model.dim());
  std::vector<int> y(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    x.row(static_cast<Index>(r)) = model.train_features.row(rows[r]);
    y[r] = static_cast<int>(sides[r]);
  }
  try {
    auto res = fit_lmnn(x, y, cfg);
    NodeFitSummary s;
    s.samples = x.rows();
    s.iterations = res.iterations;
    s.converged = res.converged;
    s.initial_objective = res.objective_trace.front();
    s.final_objective = res.objective_trace.back();
    s.active_impostors = res.active_impostors_final;
    return {std::move(res.metric), s};
  } catch (const TrainingError&) {
    throw;
  } catch (const Error& e) {
    throw TrainingError("node " + std::to_string(id.index) + ": " + e.what(), id.index);
  }
}

}  // namespace

HierarchicalModel train_hierarchical(const LabeledDataset& train, const ClassTree& tree,
                                     const LmnnConfig& lmnn_cfg, int K,
                                     const TrainOptions& options) {
  lmnn_cfg.validate();
  auto model = empty_model(train, tree, K, Variant::hier_per_node_metric);
  model.lmnn = lmnn_cfg;

  std::vector<NodeId> order;
  preorder(model.tree, kRoot, order);
  std::vector<NodeFit> fits;
  fits.reserve(order.size());
  if (options.jobs <= 1 || order.size() < 2) {
    for (NodeId id : order) fits.push_back(fit_node(model, id, lmnn_cfg));
  } else {
    std::vector<std::future<NodeFit>> pending;
    std::size_t next = 0;
    const auto jobs = static_cast<std::size_t>(options.jobs);
    while (fits.size() < order.size()) {
      while (next < order.size() && pending.size() - fits.size() < jobs) {
        pending.push_back(std::async(std::launch::async, fit_node, std::cref(model),
                                     order[next], std::cref(lmnn_cfg)));
        ++next;
      }
      fits.push_back(pending[fits.size()].get());
    }
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    model.node_metrics[order[i]] = std::move(fits[i].metric);
    model.fit_summaries[order[i]] = fits[i].summary;
  }
  return model;
}

HierarchicalModel assemble_hierarchical(const LabeledDataset& train, const ClassTree& tree,
                                        const MetricMatrix& metric, int K, Variant variant) {
  if (metric.dim() != train.dim())
    throw ShapeError("metric dimension does not match the training data");
  auto model = empty_model(train, tree, K, variant);
  for (NodeId id : model.tree.internal_nodes()) model.node_metrics[id] = metric;
  return model;
}

namespace {

MetricMatrix global_metric(const LabeledDataset& train, const LmnnConfig& cfg) {
  if (train.num_classes() < 2) return MetricMatrix::identity(train.dim());
  return fit_lmnn(train.features, train.labels, cfg).metric;
}

}  // namespace

HierarchicalModel train_hierarchical_variant(const LabeledDataset& train,
                                             const VariantSpec& spec,
                                             const TrainOptions& options) {
  spec.validate();
  if (!is_hierarchical(spec.variant))
    throw ArgumentError(std::string("variant ") + to_string(spec.variant) +
                        " is not hierarchical");
  validate_dataset(train);
  const auto tree = build_tree(class_centroids(train), *spec.mmc);
  HierarchicalModel model;
  switch (spec.variant) {
    case Variant::hier_no_metric:
      model = assemble_hierarchical(train, tree, MetricMatrix::identity(train.dim()), spec.K,
                                    spec.variant);
      break;
    case Variant::hier_global_metric:
      model = assemble_hierarchical(train, tree, global_metric(train, *spec.lmnn), spec.K,
                                    spec.variant);
      model.lmnn = *spec.lmnn;
      break;
    default:
      model = train_hierarchical(train, tree, *spec.lmnn, spec.K, options);
      break;
  }
  model.tree.warnings = tree.warnings;
  model.mmc = *spec.mmc;
  return model;
}

std::unique_ptr<Predictor> train_variant(const LabeledDataset& train, const VariantSpec& spec,
                                         const TrainOptions& options) {
  spec.validate();
  validate_dataset(train);
  switch (spec.variant) {
    case Variant::flat_knn:
      return std::make_unique<FlatKnn>(train.features, train.labels, train.num_classes(),
                                       spec.K, MetricMatrix::identity(train.dim()));
    case Variant::flat_lmnn_knn:
      return std::make_unique<FlatKnn>(train.features, train.labels, train.num_classes(),
                                       spec.K, global_metric(train, *spec.lmnn));
    default:
      return std::make_unique<HierarchicalPredictor>(
          train_hierarchical_variant(train, spec, options));
  }
}

}  // namespace hml
