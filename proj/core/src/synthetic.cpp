#include "hml/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "hml/error.hpp"

namespace hml {

namespace {

// Box-Muller over a 64-bit engine keeps generated data identical across
// standard library implementations.
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace

LabeledDataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.groups < 1 || spec.classes_per_group < 1 || spec.samples_per_class < 1)
    throw ArgumentError("synthetic spec needs positive group, class and sample counts");
  if (spec.class_dims < 1) throw ArgumentError("synthetic spec: class_dims must be positive");
  if (spec.dim < 2 + spec.groups * spec.class_dims)
    throw ArgumentError("synthetic spec: dim must be at least 2 + groups * class_dims");
  if (!(spec.sigma > 0.0)) throw ArgumentError("synthetic spec: sigma must be positive");

  const int m = spec.groups * spec.classes_per_group;
  int bits = 1;
  while ((1 << bits) < spec.classes_per_group) ++bits;
  LabeledDataset ds;
  ds.features = Eigen::MatrixXd::Zero(static_cast<Index>(m) * spec.samples_per_class, spec.dim);
  Gaussian noise(spec.seed);
  Index row = 0;
  for (int g = 0; g < spec.groups; ++g) {
    for (int c = 0; c < spec.classes_per_group; ++c) {
      const int label = g * spec.classes_per_group + c;
      ds.class_names.push_back("g" + std::to_string(g) + "c" + std::to_string(c));
      Eigen::VectorXd center = Eigen::VectorXd::Zero(spec.dim);
      center[0] = center[1] = g * spec.group_separation * spec.sigma;
      // Each block dimension carries one bit of the class index as a
      // +-half-separation offset, cycling through the bits.
      for (int k = 0; k < spec.class_dims; ++k) {
        const int bit = (c >> (bits - 1 - k % bits)) & 1;
        center[2 + g * spec.class_dims + k] =
            (bit ? -0.5 : 0.5) * spec.class_separation * spec.sigma;
      }
      for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
        for (int j = 0; j < spec.dim; ++j)
          ds.features(row, j) = center[j] + spec.sigma * noise();
        ds.labels.push_back(label);
      }
    }
  }
  return ds;
}

}  // namespace hml
