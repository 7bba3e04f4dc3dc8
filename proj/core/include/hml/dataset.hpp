#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hml {

using Index = Eigen::Index;

/// Feature vectors with dense integer class labels in {0..M-1}.
///
/// `features` is N x d row-major in meaning (one row per sample). When
/// `class_names` is non-empty its size defines M; otherwise M is one past
/// the largest label.
struct LabeledDataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  int num_classes() const;
  std::string class_name(int c) const;
  /// Number of samples per class, length num_classes().
  std::vector<Index> class_counts() const;
};

/// Throws ArgumentError when the dataset breaks its invariants. With
/// `require_all_classes` every class in {0..M-1} must have a sample.
void validate_dataset(const LabeledDataset& ds, bool require_all_classes = true);

/// Rows selected by `rows`, in the given order. Class names are kept.
LabeledDataset subset(const LabeledDataset& ds, std::span<const Index> rows);

enum class DatasetFormat { csv, binary };

DatasetFormat parse_format(const std::string& name);
const char* to_string(DatasetFormat f);

LabeledDataset load_dataset(const std::filesystem::path& path,
                            DatasetFormat format);
LabeledDataset read_csv(const std::string& text);
LabeledDataset read_binary(std::span<const std::uint8_t> bytes);

/// Feature-only CSV (a `label` column, if present, is ignored). An empty
/// file or a header without rows yields a 0-row matrix; `expected_dim`
/// is used for the column count in that case.
Eigen::MatrixXd read_feature_csv(const std::string& text, Index expected_dim = 0);

std::string write_csv(const LabeledDataset& ds);
/// Labels are written as their integer ids.
std::vector<std::uint8_t> write_binary(const LabeledDataset& ds);
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path,
                  DatasetFormat format);

struct CentroidSet {
  Eigen::MatrixXd centroids;  // M x d
  std::vector<int> class_ids;
};

CentroidSet class_centroids(const LabeledDataset& ds);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct SplitResult {
  LabeledDataset train;
  LabeledDataset test;
  std::vector<Index> train_rows;  // ascending
  std::vector<Index> test_rows;   // ascending
};

/// Number of training samples a class of size `n` receives.
Index stratified_train_count(Index n, double train_fraction);

SplitResult stratified_split(const LabeledDataset& ds, const SplitSpec& spec);

struct Scaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // 1 for columns left unscaled

  LabeledDataset apply(const LabeledDataset& ds) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

Scaler fit_scaler(const LabeledDataset& train);

struct Standardized {
  LabeledDataset train;
  LabeledDataset test;
  Scaler scaler;
};

Standardized standardize(const LabeledDataset& train, const LabeledDataset& test);

}  // namespace hml
