#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hml/classifier.hpp"
#include "hml/dataset.hpp"
#include "hml/synthetic.hpp"

namespace hml::cli {

struct RunConfig {
  std::filesystem::path dataset;  // resolved against the config file's directory
  DatasetFormat format = DatasetFormat::csv;
  SplitSpec split;
  /// Train fractions compared by `benchmark`.
  std::vector<double> benchmark_splits{0.8, 0.5};
  MmcConfig mmc;
  LmnnConfig lmnn;
  int K = 7;
  std::vector<Variant> variants = all_variants();
  /// Variant saved by `train`; must be hierarchical.
  Variant train_variant = Variant::hier_per_node_metric;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::filesystem::path output_dir = "hml-out";
  bool standardize = false;
  SyntheticSpec synthetic;

  /// Throws ArgumentError when a nested config is invalid.
  void validate() const;
};

/// Missing keys take their defaults; unknown keys are rejected. Relative
/// paths are resolved against `base_dir`.
RunConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
/// Every field, defaults included. Paths are written as absolute.
std::string config_to_json(const RunConfig& cfg);

/// The spec used for `variant` under this config.
VariantSpec variant_spec(const RunConfig& cfg, Variant variant);

}  // namespace hml::cli
