#include "hml/cli/config.hpp"

#include <algorithm>

#include <json.hpp>

#include "hml/error.hpp"
#include "hml/io.hpp"

namespace hml::cli {

using nlohmann::json;

namespace {

// Reads `obj` key by key so unknown keys can be reported.
class Reader {
 public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ArgumentError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ArgumentError(where_ + "." + key + ": wrong type");
    }
  }

  template <typename T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.push_back(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ArgumentError(where_ + "." + key + ": wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.push_back(key);
    auto it = obj_.find(key);
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        throw ArgumentError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::vector<std::string> seen_;
};

void read_mmc(const json& j, MmcConfig& m) {
  Reader r(j, "mmc");
  r.get("C", m.C);
  r.get_optional("l", m.balance);
  std::string kernel = m.kernel.type == KernelType::linear ? "linear" : "rbf";
  r.get("kernel", kernel);
  r.get("gamma", m.kernel.gamma);
  if (kernel == "linear") {
    m.kernel.type = KernelType::linear;
  } else if (kernel == "rbf") {
    m.kernel.type = KernelType::rbf;
  } else {
    throw ArgumentError("mmc.kernel: expected 'linear' or 'rbf', got '" + kernel + "'");
  }
  r.get("max_outer_iters", m.max_outer_iters);
  r.get("tol", m.tol);
  r.get("seed", m.seed);
  r.get("restarts", m.restarts);
  r.finish();
}

void read_lmnn(const json& j, LmnnConfig& l) {
  Reader r(j, "lmnn");
  r.get("k", l.k);
  r.get("mu", l.mu);
  r.get("margin", l.margin);
  r.get("max_iters", l.max_iters);
  r.get_optional("initial_step", l.initial_step);
  r.get("tol", l.tol);
  r.get("impostor_refresh", l.impostor_refresh);
  r.get("low_rank", l.low_rank);
  r.finish();
}

void read_synthetic(const json& j, SyntheticSpec& s) {
  Reader r(j, "synthetic");
  r.get("groups", s.groups);
  r.get("classes_per_group", s.classes_per_group);
  r.get("dim", s.dim);
  r.get("samples_per_class", s.samples_per_class);
  r.get("group_separation", s.group_separation);
  r.get("class_dims", s.class_dims);
  r.get("class_separation", s.class_separation);
  r.get("sigma", s.sigma);
  r.get("seed", s.seed);
  r.finish();
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

}  // namespace

void RunConfig::validate() const {
  mmc.validate();
  lmnn.validate();
  if (K < 1) throw ArgumentError("K must be positive");
  if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0))
    throw ArgumentError("split.train_fraction must lie in (0, 1)");
  for (double f : benchmark_splits)
    if (!(f > 0.0 && f < 1.0)) throw ArgumentError("benchmark_splits entries must lie in (0, 1)");
  if (variants.empty()) throw ArgumentError("variants must not be empty");
  if (seeds.empty()) throw ArgumentError("seeds must not be empty");
  if (!is_hierarchical(train_variant))
    throw ArgumentError(std::string("train_variant must be hierarchical, got ") +
                        to_string(train_variant));
}

RunConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what(), e.byte);
  }
  RunConfig cfg;
  Reader r(root, "config");

  if (const json* d = r.child("dataset")) {
    Reader dr(*d, "dataset");
    std::string path, format = to_string(cfg.format);
    dr.get("path", path);
    dr.get("format", format);
    dr.finish();
    cfg.dataset = resolve(path, base_dir);
    cfg.format = parse_format(format);
  }
  if (const json* s = r.child("split")) {
    Reader sr(*s, "split");
    sr.get("train_fraction", cfg.split.train_fraction);
    sr.get("seed", cfg.split.seed);
    sr.finish();
  }
  r.get("benchmark_splits", cfg.benchmark_splits);
  if (const json* m = r.child("mmc")) read_mmc(*m, cfg.mmc);
  if (const json* l = r.child("lmnn")) read_lmnn(*l, cfg.lmnn);
  r.get("K", cfg.K);
  std::vector<std::string> names;
  r.get("variants", names);
  if (!names.empty()) {
    cfg.variants.clear();
    for (const auto& n : names) cfg.variants.push_back(parse_variant(n));
  }
  std::string train_variant;
  r.get("train_variant", train_variant);
  if (!train_variant.empty()) cfg.train_variant = parse_variant(train_variant);
  r.get("seeds", cfg.seeds);
  std::string out;
  r.get("output_dir", out);
  if (!out.empty()) cfg.output_dir = resolve(out, base_dir);
  r.get("standardize", cfg.standardize);
  if (const json* s = r.child("synthetic")) read_synthetic(*s, cfg.synthetic);
  r.finish();

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file_text(path);
  return config_from_json(text, std::filesystem::absolute(path).parent_path());
}

std::string config_to_json(const RunConfig& cfg) {
  auto abs = [](const std::filesystem::path& p) {
    return p.empty() ? std::string() : std::filesystem::absolute(p).lexically_normal().string();
  };
  json j;
  j["dataset"] = {{"path", abs(cfg.dataset)}, {"format", to_string(cfg.format)}};
  j["split"] = {{"train_fraction", cfg.split.train_fraction}, {"seed", cfg.split.seed}};
  j["benchmark_splits"] = cfg.benchmark_splits;
  j["mmc"] = {{"C", cfg.mmc.C},
              {"l", cfg.mmc.balance ? json(*cfg.mmc.balance) : json(nullptr)},
              {"kernel", cfg.mmc.kernel.type == KernelType::linear ? "linear" : "rbf"},
              {"gamma", cfg.mmc.kernel.gamma},
              {"max_outer_iters", cfg.mmc.max_outer_iters},
              {"tol", cfg.mmc.tol},
              {"seed", cfg.mmc.seed},
              {"restarts", cfg.mmc.restarts}};
  j["lmnn"] = {{"k", cfg.lmnn.k},
               {"mu", cfg.lmnn.mu},
               {"margin", cfg.lmnn.margin},
               {"max_iters", cfg.lmnn.max_iters},
               {"initial_step",
                cfg.lmnn.initial_step ? json(*cfg.lmnn.initial_step) : json(nullptr)},
               {"tol", cfg.lmnn.tol},
               {"impostor_refresh", cfg.lmnn.impostor_refresh},
               {"low_rank", cfg.lmnn.low_rank}};
  j["K"] = cfg.K;
  std::vector<std::string> names;
  for (Variant v : cfg.variants) names.emplace_back(to_string(v));
  j["variants"] = names;
  j["train_variant"] = to_string(cfg.train_variant);
  j["seeds"] = cfg.seeds;
  j["output_dir"] = abs(cfg.output_dir);
  j["standardize"] = cfg.standardize;
  const SyntheticSpec& s = cfg.synthetic;
  j["synthetic"] = {{"groups", s.groups},
                    {"classes_per_group", s.classes_per_group},
                    {"dim", s.dim},
                    {"samples_per_class", s.samples_per_class},
                    {"group_separation", s.group_separation},
                    {"class_dims", s.class_dims},
                    {"class_separation", s.class_separation},
                    {"sigma", s.sigma},
                    {"seed", s.seed}};
  return j.dump(2) + "\n";
}

VariantSpec variant_spec(const RunConfig& cfg, Variant variant) {
  VariantSpec spec;
  spec.variant = variant;
  spec.K = cfg.K;
  if (uses_metric_learning(variant)) spec.lmnn = cfg.lmnn;
  if (is_hierarchical(variant)) spec.mmc = cfg.mmc;
  return spec;
}

}  // namespace hml::cli
