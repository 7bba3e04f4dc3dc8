#include <algorithm>
#include <bit>
#include <cstring>

#include <zlib.h>

#include "hml/classifier.hpp"
#include "hml/error.hpp"
#include "hml/io.hpp"

namespace hml {

namespace {

constexpr std::uint8_t kModelMagic[4] = {'H', 'M', 'L', 'M'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    bytes_.insert(bytes_.end(), buf, buf + sizeof(T));
  }
  void put_u32(std::size_t v) { put(static_cast<std::uint32_t>(v)); }
  void put_string(const std::string& s) {
    put_u32(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t base) : bytes_(bytes), base_(base) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      auto* p = reinterpret_cast<std::uint8_t*>(&v);
      std::reverse(p, p + sizeof(T));
    }
    pos_ += sizeof(T);
    return v;
  }
  std::uint32_t get_u32() { return get<std::uint32_t>(); }
  std::string get_string() {
    const auto n = get_u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  /// Guards counts read from the file before allocating for them.
  std::uint32_t get_count(std::size_t min_bytes_each) {
    const auto n = get_u32();
    if (min_bytes_each && n > (bytes_.size() - pos_) / min_bytes_each) corrupt("count too large");
    return n;
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  [[noreturn]] void corrupt(const std::string& what) const {
    throw ModelFormatError("model file corrupt at byte " + std::to_string(base_ + pos_) + ": " +
                               what,
                           ModelFormatError::Kind::corrupt);
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) corrupt("payload ends early");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

std::uint32_t checksum(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

void put_matrix(Writer& w, const Eigen::MatrixXd& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) w.put(m(i, j));
}

Eigen::MatrixXd get_matrix(Reader& r, Index rows, Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = r.get<double>();
  return m;
}

void put_configs(Writer& w, const LmnnConfig& l, const MmcConfig& m) {
  w.put_u32(static_cast<std::size_t>(l.k));
  w.put(l.mu);
  w.put(l.margin);
  w.put_u32(static_cast<std::size_t>(l.max_iters));
  w.put<std::uint8_t>(l.initial_step.has_value());
  w.put(l.initial_step.value_or(0.0));
  w.put(l.tol);
  w.put_u32(static_cast<std::size_t>(l.impostor_refresh));
  w.put<std::uint8_t>(l.low_rank);

  w.put(m.C);
  w.put<std::uint8_t>(m.balance.has_value());
  w.put(m.balance.value_or(0.0));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(m.kernel.type));
  w.put(m.kernel.gamma);
  w.put_u32(static_cast<std::size_t>(m.max_outer_iters));
  w.put(m.tol);
  w.put(m.seed);
  w.put_u32(static_cast<std::size_t>(m.restarts));
}

void get_configs(Reader& r, LmnnConfig& l, MmcConfig& m) {
  l.k = static_cast<int>(r.get_u32());
  l.mu = r.get<double>();
  l.margin = r.get<double>();
  l.max_iters = static_cast<int>(r.get_u32());
  const bool has_step = r.get<std::uint8_t>();
  const double step = r.get<double>();
  if (has_step) l.initial_step = step;
  l.tol = r.get<double>();
  l.impostor_refresh = static_cast<int>(r.get_u32());
  l.low_rank = r.get<std::uint8_t>();

  m.C = r.get<double>();
  const bool has_l = r.get<std::uint8_t>();
  const double bal = r.get<double>();
  if (has_l) m.balance = bal;
  const auto kt = r.get<std::uint8_t>();
  if (kt > 1) r.corrupt("unknown kernel type");
  m.kernel.type = static_cast<KernelType>(kt);
  m.kernel.gamma = r.get<double>();
  m.max_outer_iters = static_cast<int>(r.get_u32());
  m.tol = r.get<double>();
  m.seed = r.get<std::uint64_t>();
  m.restarts = static_cast<int>(r.get_u32());
}

constexpr std::size_t kHeaderSize = 4 + 2 + 4;

}  // namespace

std::vector<std::uint8_t> encode_model(const HierarchicalModel& model) {
  Writer p;
  p.put<std::uint8_t>(static_cast<std::uint8_t>(model.variant));
  p.put_u32(static_cast<std::size_t>(model.K));
  p.put_u32(model.class_names.size());
  for (const auto& name : model.class_names) p.put_string(name);

  p.put_u32(static_cast<std::size_t>(model.train_features.rows()));
  p.put_u32(static_cast<std::size_t>(model.train_features.cols()));
  put_matrix(p, model.train_features);
  for (int l : model.train_labels) p.put_u32(static_cast<std::size_t>(l));

  p.put_u32(model.tree.nodes.size());
  for (const auto& [id, rec] : model.tree.nodes) {
    p.put(id.index);
    p.put_u32(rec.class_ids.size());
    for (int c : rec.class_ids) p.put_u32(static_cast<std::size_t>(c));
  }

  p.put_u32(model.node_metrics.size());
  for (const auto& [id, metric] : model.node_metrics) {
    p.put(id.index);
    p.put<std::uint8_t>(metric.is_identity());
    put_matrix(p, metric.matrix());
  }

  p.put_u32(model.node_samples.size());
  for (const auto& [id, rows] : model.node_samples) {
    p.put(id.index);
    p.put_u32(rows.size());
    for (Index r : rows) p.put_u32(static_cast<std::size_t>(r));
  }

  p.put_u32(model.node_child_labels.size());
  for (const auto& [id, sides] : model.node_child_labels) {
    p.put(id.index);
    p.put_u32(sides.size());
    for (Side s : sides) p.put<std::uint8_t>(static_cast<std::uint8_t>(s));
  }

  put_configs(p, model.lmnn, model.mmc);

  const auto& payload = p.bytes();
  Writer out;
  auto& bytes = out.bytes();
  bytes.assign(kModelMagic, kModelMagic + 4);
  out.put(kModelFormatVersion);
  out.put_u32(payload.size());
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  out.put(checksum(payload));
  return std::move(bytes);
}

HierarchicalModel decode_model(std::span<const std::uint8_t> bytes) {
  using Kind = ModelFormatError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0)
    throw ModelFormatError("not a model file (missing HMLM magic)", Kind::bad_magic);
  if (bytes.size() < kHeaderSize)
    throw ModelFormatError("model file truncated in header", Kind::truncated);
  Reader header(bytes.subspan(4, 6), 4);
  const auto version = header.get<std::uint16_t>();
  if (version != kModelFormatVersion)
    throw ModelFormatError("model format version " + std::to_string(version) +
                               " is not supported (this build reads version " +
                               std::to_string(kModelFormatVersion) + ")",
                           Kind::version);
  const auto length = header.get_u32();
  if (bytes.size() < kHeaderSize + length + 4ull)
    throw ModelFormatError("model file truncated: expected " +
                               std::to_string(kHeaderSize + length + 4ull) + " bytes, found " +
                               std::to_string(bytes.size()),
                           Kind::truncated);
  if (bytes.size() > kHeaderSize + length + 4ull)
    throw ModelFormatError("model file has trailing bytes", Kind::corrupt);
  const auto payload = bytes.subspan(kHeaderSize, length);
  Reader tail(bytes.subspan(kHeaderSize + length, 4), kHeaderSize + length);
  if (tail.get<std::uint32_t>() != checksum(payload))
    throw ModelFormatError("model file checksum mismatch", Kind::checksum);

  Reader r(payload, kHeaderSize);
  HierarchicalModel m;
  const auto variant = r.get<std::uint8_t>();
  if (variant > static_cast<std::uint8_t>(Variant::hier_per_node_metric))
    r.corrupt("unknown variant");
  m.variant = static_cast<Variant>(variant);
  m.K = static_cast<int>(r.get_u32());
  const auto n_classes = r.get_count(4);
  for (std::uint32_t c = 0; c < n_classes; ++c) m.class_names.push_back(r.get_string());

  const auto n = r.get_u32();
  const auto d = r.get_u32();
  if (d == 0 || (n && static_cast<std::uint64_t>(n) * d > length / 8)) r.corrupt("bad shape");
  m.train_features = get_matrix(r, n, d);
  m.train_labels.resize(n);
  for (auto& l : m.train_labels) {
    l = static_cast<int>(r.get_u32());
    if (l < 0 || l >= static_cast<int>(n_classes)) r.corrupt("label out of range");
  }

  const auto n_nodes = r.get_count(12);
  m.tree.num_classes = static_cast<int>(n_classes);
  for (std::uint32_t i = 0; i < n_nodes; ++i) {
    NodeId id{r.get<std::uint64_t>()};
    const auto count = r.get_count(4);
    NodeRecord rec;
    for (std::uint32_t c = 0; c < count; ++c) rec.class_ids.push_back(static_cast<int>(r.get_u32()));
    m.tree.nodes[id] = std::move(rec);
  }
  if (!validate_tree(m.tree, static_cast<int>(n_classes)).empty()) r.corrupt("invalid class tree");

  const auto n_metrics = r.get_count(9);
  for (std::uint32_t i = 0; i < n_metrics; ++i) {
    NodeId id{r.get<std::uint64_t>()};
    const bool identity = r.get<std::uint8_t>();
    auto mat = get_matrix(r, d, d);
    try {
      m.node_metrics[id] = identity ? MetricMatrix::identity(d) : MetricMatrix::from_matrix(mat);
    } catch (const Error&) {
      r.corrupt("invalid metric at node " + std::to_string(id.index));
    }
  }

  const auto n_lists = r.get_count(12);
  for (std::uint32_t i = 0; i < n_lists; ++i) {
    NodeId id{r.get<std::uint64_t>()};
    const auto count = r.get_count(4);
    auto& rows = m.node_samples[id];
    for (std::uint32_t k = 0; k < count; ++k) {
      const auto row = r.get_u32();
      if (row >= n) r.corrupt("sample index out of range");
      rows.push_back(row);
    }
  }
  const auto n_sides = r.get_count(12);
  for (std::uint32_t i = 0; i < n_sides; ++i) {
    NodeId id{r.get<std::uint64_t>()};
    const auto count = r.get_count(1);
    auto& sides = m.node_child_labels[id];
    for (std::uint32_t k = 0; k < count; ++k) {
      const auto s = r.get<std::uint8_t>();
      if (s > 1) r.corrupt("bad side label");
      sides.push_back(static_cast<Side>(s));
    }
  }
  get_configs(r, m.lmnn, m.mmc);
  if (!r.at_end()) r.corrupt("unexpected bytes after configs");

  for (NodeId id : m.tree.internal_nodes()) {
    if (!m.node_metrics.contains(id) || !m.node_samples.contains(id) ||
        !m.node_child_labels.contains(id) ||
        m.node_samples.at(id).size() != m.node_child_labels.at(id).size())
      r.corrupt("incomplete data for node " + std::to_string(id.index));
  }
  if (m.node_metrics.size() != m.tree.internal_nodes().size()) r.corrupt("metric on a leaf");
  if (m.K < 1) r.corrupt("K must be positive");
  return m;
}

void save_model(const HierarchicalModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, encode_model(model));
}

HierarchicalModel load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw FileError("model not found: " + path.string());
  return decode_model(read_file_bytes(path));
}

}  // namespace hml
