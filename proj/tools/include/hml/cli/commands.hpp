#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hml/cli/config.hpp"

namespace hml::cli {

/// Flags shared by every subcommand; set values override the config file.
struct CommonOptions {
  std::optional<std::filesystem::path> config;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<int> k;
  std::vector<std::string> variants;
};

/// Loads the config (defaults when none is given) and applies overrides.
/// `--seed` replaces the split, MMC and synthetic seeds and the seed list.
RunConfig effective_config(const CommonOptions& opts);

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

// Each command writes its results under cfg.output_dir together with the
// effective config (config.json) and throws hml::Error on failure.
void cmd_gen_synthetic(const RunConfig& cfg, Streams io);
void cmd_split(const RunConfig& cfg, Streams io);
void cmd_build_tree(const RunConfig& cfg, Streams io);
void cmd_train(const RunConfig& cfg, int jobs, Streams io);
void cmd_benchmark(const RunConfig& cfg, int jobs, Streams io);

struct PredictOptions {
  std::filesystem::path model;
  std::filesystem::path input;
  std::optional<std::filesystem::path> scaler;
  /// Labels go to standard output when unset.
  std::optional<std::filesystem::path> output;
};
void cmd_predict(const PredictOptions& opts, Streams io);

/// Like predict, but the input carries labels; writes report.json to
/// `output` (a directory) when set.
void cmd_evaluate(const PredictOptions& opts, Streams io);

/// Parses argv and runs a subcommand. Returns the process exit status:
/// 0 on success, 2 on operation errors, the parser's code on usage errors.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace hml::cli
