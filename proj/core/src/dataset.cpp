#include "hml/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <random>
#include <unordered_map>

#include "hml/error.hpp"
#include "hml/io.hpp"

namespace hml {

int LabeledDataset::num_classes() const {
  if (!class_names.empty()) return static_cast<int>(class_names.size());
  int m = 0;
  for (int l : labels) m = std::max(m, l + 1);
  return m;
}

std::string LabeledDataset::class_name(int c) const {
  if (c >= 0 && c < static_cast<int>(class_names.size())) return class_names[c];
  return std::to_string(c);
}

std::vector<Index> LabeledDataset::class_counts() const {
  std::vector<Index> counts(num_classes(), 0);
  for (int l : labels) ++counts[l];
  return counts;
}

void validate_dataset(const LabeledDataset& ds, bool require_all_classes) {
  if (static_cast<Index>(ds.labels.size()) != ds.size())
    throw ArgumentError("label count " + std::to_string(ds.labels.size()) +
                        " does not match row count " + std::to_string(ds.size()));
  if (ds.dim() < 1) throw ArgumentError("feature dimension must be at least 1");
  if (!ds.features.allFinite()) throw ArgumentError("features contain NaN or Inf");
  const int m = ds.num_classes();
  for (int l : ds.labels)
    if (l < 0 || l >= m)
      throw ArgumentError("label " + std::to_string(l) + " outside [0, " +
                          std::to_string(m) + ")");
  if (require_all_classes) {
    const auto counts = ds.class_counts();
    for (int c = 0; c < m; ++c)
      if (counts[c] == 0)
        throw ArgumentError("class '" + ds.class_name(c) + "' has no samples");
  }
}

LabeledDataset subset(const LabeledDataset& ds, std::span<const Index> rows) {
  LabeledDataset out;
  out.features.resize(static_cast<Index>(rows.size()), ds.dim());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Index>(i)) = ds.features.row(rows[i]);
    out.labels.push_back(ds.labels[rows[i]]);
  }
  out.class_names = ds.class_names;
  return out;
}

DatasetFormat parse_format(const std::string& name) {
  if (name == "csv") return DatasetFormat::csv;
  if (name == "binary" || name == "bin") return DatasetFormat::binary;
  throw ArgumentError("unknown dataset format '" + name + "' (expected csv or binary)");
}

const char* to_string(DatasetFormat f) {
  return f == DatasetFormat::csv ? "csv" : "binary";
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.emplace_back(trim(cur));
  return fields;
}

struct CsvLine {
  std::size_t number;
  std::string_view text;
};

std::vector<CsvLine> nonblank_lines(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<CsvLine> lines;
  std::size_t number = 0;
  while (!text.empty()) {
    ++number;
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    if (!trim(line).empty()) lines.push_back({number, line});
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return lines;
}

double parse_real(const std::string& field, std::size_t line, std::size_t column) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (field.empty() || ec != std::errc() || ptr != last)
    throw ParseError("line " + std::to_string(line) + ": column " +
                         std::to_string(column + 1) + " is not a number: '" + field + "'",
                     line);
  if (!std::isfinite(v))
    throw ParseError("line " + std::to_string(line) + ": non-finite value '" + field + "'",
                     line);
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::ptrdiff_t label_col = -1;
  std::vector<CsvLine> rows;
};

CsvTable split_table(std::string_view text, bool require_label) {
  CsvTable table;
  auto lines = nonblank_lines(text);
  if (lines.empty()) throw EmptyInputError("empty input: no header row");
  table.header = split_fields(lines.front().text);
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (table.header[c] == "label") table.label_col = static_cast<std::ptrdiff_t>(c);
  if (require_label && table.label_col < 0)
    throw ParseError("line " + std::to_string(lines.front().number) +
                         ": header has no 'label' column",
                     lines.front().number);
  const std::size_t n_features =
      table.header.size() - (table.label_col >= 0 ? 1 : 0);
  if (n_features == 0)
    throw ParseError("line " + std::to_string(lines.front().number) +
                         ": header has no feature columns",
                     lines.front().number);
  table.rows.assign(lines.begin() + 1, lines.end());
  return table;
}

}  // namespace

LabeledDataset read_csv(const std::string& text) {
  const auto table = split_table(text, true);
  if (table.rows.empty()) throw EmptyInputError("empty input: header but no samples");
  const auto width = table.header.size();
  const auto d = static_cast<Index>(width - 1);

  LabeledDataset ds;
  ds.features.resize(static_cast<Index>(table.rows.size()), d);
  ds.labels.reserve(table.rows.size());
  std::unordered_map<std::string, int> ids;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& line = table.rows[r];
    const auto fields = split_fields(line.text);
    if (fields.size() != width)
      throw ParseError("line " + std::to_string(line.number) + ": expected " +
                           std::to_string(width) + " fields, found " +
                           std::to_string(fields.size()),
                       line.number);
    Index col = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (static_cast<std::ptrdiff_t>(c) == table.label_col) {
        const auto& name = fields[c];
        if (name.empty())
          throw ParseError("line " + std::to_string(line.number) + ": empty label",
                           line.number);
        auto [it, inserted] = ids.try_emplace(name, static_cast<int>(ds.class_names.size()));
        if (inserted) ds.class_names.push_back(name);
        ds.labels.push_back(it->second);
      } else {
        ds.features(static_cast<Index>(r), col++) = parse_real(fields[c], line.number, c);
      }
    }
  }
  return ds;
}

Eigen::MatrixXd read_feature_csv(const std::string& text, Index expected_dim) {
  if (nonblank_lines(text).empty()) return Eigen::MatrixXd(0, expected_dim);
  const auto table = split_table(text, false);
  const auto width = table.header.size();
  const auto d = static_cast<Index>(width - (table.label_col >= 0 ? 1 : 0));
  Eigen::MatrixXd x(static_cast<Index>(table.rows.size()), d);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& line = table.rows[r];
    const auto fields = split_fields(line.text);
    if (fields.size() != width)
      throw ParseError("line " + std::to_string(line.number) + ": expected " +
                           std::to_string(width) + " fields, found " +
                           std::to_string(fields.size()),
                       line.number);
    Index col = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (static_cast<std::ptrdiff_t>(c) == table.label_col) continue;
      x(static_cast<Index>(r), col++) = parse_real(fields[c], line.number, c);
    }
  }
  return x;
}

namespace {

constexpr std::uint8_t kDatasetMagic[4] = {'H', 'M', 'L', 'F'};

template <typename T>
T read_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    auto* p = reinterpret_cast<std::uint8_t*>(&v);
    std::reverse(p, p + sizeof(T));
  }
  return v;
}

template <typename T>
void write_le(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

}  // namespace

LabeledDataset read_binary(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw EmptyInputError("empty input: zero-length binary file");
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kDatasetMagic, 4) != 0)
    throw ParseError("byte 0: missing HMLF magic", 0);
  if (bytes.size() < 12)
    throw ParseError("byte " + std::to_string(bytes.size()) + ": truncated header",
                     bytes.size());
  const auto n = read_le<std::uint32_t>(bytes, 4);
  const auto d = read_le<std::uint32_t>(bytes, 8);
  if (n == 0) throw EmptyInputError("empty input: binary header declares N=0");
  if (d == 0) throw ParseError("byte 8: dimension must be at least 1", 8);
  const std::size_t payload = 12 + 4ull * n * d;
  const std::size_t expected = payload + 4ull * n;
  if (bytes.size() < expected)
    throw ParseError("byte " + std::to_string(bytes.size()) + ": truncated, expected " +
                         std::to_string(expected) + " bytes",
                     bytes.size());
  if (bytes.size() > expected)
    throw ParseError("byte " + std::to_string(expected) + ": trailing data after labels",
                     expected);

  LabeledDataset ds;
  ds.features.resize(n, d);
  std::size_t off = 12;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j, off += 4) {
      const float v = read_le<float>(bytes, off);
      if (!std::isfinite(v))
        throw ParseError("byte " + std::to_string(off) + ": non-finite feature value", off);
      ds.features(i, j) = v;
    }
  }
  std::unordered_map<std::uint32_t, int> ids;
  for (std::uint32_t i = 0; i < n; ++i, off += 4) {
    const auto raw = read_le<std::uint32_t>(bytes, off);
    auto [it, inserted] = ids.try_emplace(raw, static_cast<int>(ds.class_names.size()));
    if (inserted) ds.class_names.push_back(std::to_string(raw));
    ds.labels.push_back(it->second);
  }
  return ds;
}

LabeledDataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  if (!std::filesystem::exists(path))
    throw FileError("dataset not found: " + path.string());
  LabeledDataset ds = format == DatasetFormat::csv
                          ? read_csv(read_file_text(path))
                          : read_binary(read_file_bytes(path));
  validate_dataset(ds);
  return ds;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string write_csv(const LabeledDataset& ds) {
  std::string out = "label";
  for (Index j = 0; j < ds.dim(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  char buf[64];
  for (Index i = 0; i < ds.size(); ++i) {
    out += csv_field(ds.class_name(ds.labels[i]));
    for (Index j = 0; j < ds.dim(); ++j) {
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), ds.features(i, j));
      out += ',';
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

std::vector<std::uint8_t> write_binary(const LabeledDataset& ds) {
  std::vector<std::uint8_t> out(kDatasetMagic, kDatasetMagic + 4);
  write_le(out, static_cast<std::uint32_t>(ds.size()));
  write_le(out, static_cast<std::uint32_t>(ds.dim()));
  for (Index i = 0; i < ds.size(); ++i)
    for (Index j = 0; j < ds.dim(); ++j) write_le(out, static_cast<float>(ds.features(i, j)));
  for (int l : ds.labels) write_le(out, static_cast<std::uint32_t>(l));
  return out;
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path,
                  DatasetFormat format) {
  if (format == DatasetFormat::csv)
    write_file_atomic(path, write_csv(ds));
  else
    write_file_atomic(path, write_binary(ds));
}

CentroidSet class_centroids(const LabeledDataset& ds) {
  if (ds.size() == 0) throw ArgumentError("cannot compute centroids of an empty dataset");
  const int m = ds.num_classes();
  CentroidSet out;
  out.centroids = Eigen::MatrixXd::Zero(m, ds.dim());
  std::vector<Index> counts(m, 0);
  for (Index i = 0; i < ds.size(); ++i) {
    out.centroids.row(ds.labels[i]) += ds.features.row(i);
    ++counts[ds.labels[i]];
  }
  for (int c = 0; c < m; ++c) {
    if (counts[c] == 0)
      throw ArgumentError("class '" + ds.class_name(c) + "' has no samples");
    out.centroids.row(c) /= static_cast<double>(counts[c]);
    out.class_ids.push_back(c);
  }
  return out;
}

Index stratified_train_count(Index n, double train_fraction) {
  auto t = static_cast<Index>(std::floor(train_fraction * static_cast<double>(n) + 0.5 + 1e-9));
  return std::clamp<Index>(t, 1, std::max<Index>(1, n - 1));
}

SplitResult stratified_split(const LabeledDataset& ds, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw ArgumentError("train_fraction must lie in (0, 1)");
  const int m = ds.num_classes();
  std::vector<std::vector<Index>> by_class(m);
  for (Index i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

  std::mt19937_64 rng(spec.seed);
  SplitResult out;
  for (int c = 0; c < m; ++c) {
    auto& rows = by_class[c];
    const auto n = static_cast<Index>(rows.size());
    if (n < 2)
      throw SplitInfeasibleError("split infeasible: class '" + ds.class_name(c) + "' has " +
                                     std::to_string(n) +
                                     " sample(s); needs at least one train and one test",
                                 c);
    // Fisher-Yates with a plain modulo draw so partitions do not depend on
    // the standard library's distribution implementation.
    for (Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(rows[i], rows[j]);
    }
    const Index n_train = stratified_train_count(n, spec.train_fraction);
    out.train_rows.insert(out.train_rows.end(), rows.begin(), rows.begin() + n_train);
    out.test_rows.insert(out.test_rows.end(), rows.begin() + n_train, rows.end());
  }
  std::sort(out.train_rows.begin(), out.train_rows.end());
  std::sort(out.test_rows.begin(), out.test_rows.end());
  out.train = subset(ds, out.train_rows);
  out.test = subset(ds, out.test_rows);
  return out;
}

Scaler fit_scaler(const LabeledDataset& train) {
  if (train.size() == 0) throw ArgumentError("cannot standardize an empty training set");
  Scaler s;
  s.mean = train.features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = train.features.rowwise() - s.mean.transpose();
  s.stddev = (centered.colwise().squaredNorm() / static_cast<double>(train.size()))
                 .cwiseSqrt()
                 .transpose();
  for (Index j = 0; j < s.stddev.size(); ++j)
    if (s.stddev[j] < 1e-12) s.stddev[j] = 1.0;
  return s;
}

Eigen::MatrixXd Scaler::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size())
    throw ShapeError("scaler expects dimension " + std::to_string(mean.size()) + ", got " +
                     std::to_string(x.cols()));
  return (x.rowwise() - mean.transpose()).array().rowwise() /
         stddev.transpose().array();
}

LabeledDataset Scaler::apply(const LabeledDataset& ds) const {
  LabeledDataset out = ds;
  out.features = apply(ds.features);
  return out;
}

Standardized standardize(const LabeledDataset& train, const LabeledDataset& test) {
  Standardized out;
  out.scaler = fit_scaler(train);
  out.train = out.scaler.apply(train);
  out.test = out.scaler.apply(test);
  return out;
}

}  // namespace hml
