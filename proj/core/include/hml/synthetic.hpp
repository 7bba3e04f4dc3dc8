#pragma once

#include <cstdint>

#include "hml/dataset.hpp"

namespace hml {

/// Fine-grained benchmark: classes come in super-groups that are far apart
/// along a pair of shared dimensions, while classes inside a group differ
/// only slightly, each group along its own block of dimensions.
struct SyntheticSpec {
  int groups = 2;
  int classes_per_group = 4;
  int dim = 16;
  int samples_per_class = 60;
  double group_separation = 6.0;  // in units of sigma, on dims 0 and 1
  int class_dims = 4;             // size of each group's block
  double class_separation = 1.5;  // in units of sigma, per block dimension
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

/// Labels are named "g<group>c<class>". Two classes of a group sit
/// class_separation apart on every block dimension where their codes differ.
/// Throws ArgumentError when `dim` cannot hold 2 + groups * class_dims.
LabeledDataset make_synthetic(const SyntheticSpec& spec);

}  // namespace hml
