#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hml/dataset.hpp"
#include "hml/hierarchy.hpp"
#include "hml/lmnn.hpp"
#include "hml/mmc.hpp"

namespace hml {

enum class Side : std::uint8_t { left = 0, right = 1 };

enum class Variant : std::uint8_t {
  flat_knn = 0,
  flat_lmnn_knn = 1,
  hier_no_metric = 2,
  hier_global_metric = 3,
  hier_per_node_metric = 4,
};

const char* to_string(Variant v);
Variant parse_variant(const std::string& name);
std::vector<Variant> all_variants();
bool uses_metric_learning(Variant v);
bool is_hierarchical(Variant v);

/// Per-node LMNN outcome, kept for reporting only (not serialized).
struct NodeFitSummary {
  Index samples = 0;
  int iterations = 0;
  bool converged = false;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  long active_impostors = 0;
};

/// Class tree with one metric per internal node and the training samples
/// each node votes over.
struct HierarchicalModel {
  ClassTree tree;
  std::map<NodeId, MetricMatrix> node_metrics;
  std::map<NodeId, std::vector<Index>> node_samples;
  std::map<NodeId, std::vector<Side>> node_child_labels;
  Eigen::MatrixXd train_features;
  std::vector<int> train_labels;
  std::vector<std::string> class_names;
  int K = 7;
  Variant variant = Variant::hier_per_node_metric;
  LmnnConfig lmnn;
  MmcConfig mmc;

  std::map<NodeId, NodeFitSummary> fit_summaries;

  Index dim() const { return train_features.cols(); }
};

struct TrainOptions {
  /// Worker threads for independent node fits; 1 trains sequentially.
  int jobs = 1;
};

/// Fits one LMNN metric per internal node on the node's own samples,
/// labelled by child side. Throws TrainingError when a child has no
/// training samples or an LMNN fit fails.
HierarchicalModel train_hierarchical(const LabeledDataset& train, const ClassTree& tree,
                                     const LmnnConfig& lmnn_cfg, int K,
                                     const TrainOptions& options = {});

/// Same layout as train_hierarchical, but every internal node uses `metric`
/// (identity for the no-metric baseline).
HierarchicalModel assemble_hierarchical(const LabeledDataset& train, const ClassTree& tree,
                                        const MetricMatrix& metric, int K, Variant variant);

/// Node visits of one root-to-leaf walk.
struct WalkTrace {
  std::vector<NodeId> path;
  int label = -1;
};

int predict(const HierarchicalModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);
WalkTrace predict_with_trace(const HierarchicalModel& model,
                             const Eigen::Ref<const Eigen::VectorXd>& x);

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
  virtual Index dim() const = 0;
  virtual int num_classes() const = 0;
};

/// Multi-class KNN over all training samples. Ties in the vote go to the
/// class with the smallest mean distance among the K, then the lower id.
class FlatKnn final : public Predictor {
 public:
  FlatKnn(Eigen::MatrixXd features, std::vector<int> labels, int num_classes, int K,
          MetricMatrix metric);

  int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  Index dim() const override { return features_.cols(); }
  int num_classes() const override { return num_classes_; }
  const MetricMatrix& metric() const { return metric_; }

 private:
  Eigen::MatrixXd features_;
  std::vector<int> labels_;
  int num_classes_;
  int K_;
  MetricMatrix metric_;
};

class HierarchicalPredictor final : public Predictor {
 public:
  explicit HierarchicalPredictor(HierarchicalModel model) : model_(std::move(model)) {}

  int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const override {
    return hml::predict(model_, x);
  }
  Index dim() const override { return model_.dim(); }
  int num_classes() const override { return static_cast<int>(model_.class_names.size()); }
  const HierarchicalModel& model() const { return model_; }

 private:
  HierarchicalModel model_;
};

struct VariantSpec {
  Variant variant = Variant::hier_per_node_metric;
  int K = 7;
  std::optional<LmnnConfig> lmnn;
  std::optional<MmcConfig> mmc;

  /// Throws ArgumentError unless lmnn is present exactly for metric-learning
  /// variants and mmc is present for hierarchical ones.
  void validate() const;
};

std::unique_ptr<Predictor> train_variant(const LabeledDataset& train, const VariantSpec& spec,
                                         const TrainOptions& options = {});

/// Builds the tree from the training centroids, then trains `spec.variant`
/// (which must be hierarchical) into a savable model.
HierarchicalModel train_hierarchical_variant(const LabeledDataset& train,
                                             const VariantSpec& spec,
                                             const TrainOptions& options = {});

// Model container, see docs/model_format.md.
inline constexpr std::uint16_t kModelFormatVersion = 1;

std::vector<std::uint8_t> encode_model(const HierarchicalModel& model);
HierarchicalModel decode_model(std::span<const std::uint8_t> bytes);
void save_model(const HierarchicalModel& model, const std::filesystem::path& path);
HierarchicalModel load_model(const std::filesystem::path& path);

}  // namespace hml
