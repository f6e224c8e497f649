#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "collab/baselines.hpp"
#include "collab/embed_model.hpp"
#include "collab/evaluation.hpp"
#include "collab/event_log.hpp"

namespace collab {

/// Raw `key = value` pairs, later entries overriding earlier ones.
using KeyValues = std::map<std::string, std::string, std::less<>>;

/// Parses a flat config file: one `key = value` per line, `#` starts a
/// comment, blank lines ignored. Throws ParseError on a line without `=`.
KeyValues parse_config_text(std::string_view text);
KeyValues load_config_file(const std::filesystem::path& path);

struct PipelineConfig {
  std::filesystem::path events;
  std::filesystem::path atlas;
  std::filesystem::path model;
  std::filesystem::path communities;
  std::filesystem::path out = "out";
  std::int32_t width = 0;  // 0 infers from the data
  std::int32_t height = 0;
  bool lenient = false;

  TrainConfig train;
  SplitSpec split;

  std::vector<Method> baselines{Method::kMedian, Method::kCount, Method::kCommunity, Method::kMF};
  bool adjacency_multiplicity = true;
  TieRule ties = TieRule::kHalf;
  MFConfig mf;
  LabelPropagationConfig label_propagation;

  std::size_t clusters = 0;               // 0 searches against the atlas
  std::vector<std::size_t> candidates;    // empty selects the default search

  double eps = 0.0;                       // 0 picks the k-distance elbow
  std::size_t min_pts = 10;
  std::size_t window = 1000000;
  bool normalize_embeddings = true;
  bool project = true;
  std::size_t project_dims = 0;           // 0 cuts at the largest spectral gap

  std::int32_t tile = 10;
  std::int64_t bucket_ms = 3600000;

  SynthConfig synth;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

/// Every recognized key.
const std::vector<std::string>& config_keys();

/// Fills defaults, checks every key and throws ConfigError listing each
/// violation as "<key>: <reason>". Input paths that are set must exist and
/// the output directory must be creatable.
PipelineConfig validate_config(const KeyValues& values);

}  // namespace collab
