#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "collab/auc.hpp"
#include "collab/baselines.hpp"
#include "collab/canvas_state.hpp"
#include "collab/embed_model.hpp"
#include "collab/event_log.hpp"

namespace collab {

struct SplitSpec {
  std::size_t min_actions = 10;
  double warmup_fraction = 0.25;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Held-out preference: `user` performed event `positive`; event `negative`
/// was performed by another user. Both are indices into the event stream.
struct EvalTriplet {
  UserId user = kNoUser;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

struct Holdout {
  std::size_t warmup_events = 0;
  std::vector<std::size_t> training;  // event indices, chronological
  std::vector<EvalTriplet> triplets;  // one per eligible user, by user id
};

/// Leave-one-out split. The first warmup_fraction of events only feed the
/// canvas replay; users with fewer than min_actions later events are dropped;
/// each remaining user contributes one held-out action and the rest of its
/// post-warmup actions to training. Negatives are other users' held-out
/// actions. Throws if fewer than two users are eligible.
Holdout build_holdout(const EventStream& stream, const SplitSpec& spec);

/// Score of user u performing the action at event index `event`.
using ActionScorer = std::function<double(UserId u, std::size_t event)>;

AucResult auc(std::span<const EvalTriplet> triplets, const ActionScorer& scorer,
              TieRule ties = TieRule::kHalf);

enum class Method { kEmbedding, kMedian, kCount, kCommunity, kMF };

const char* method_name(Method m);
/// Parses a comma-separated baseline list such as "median,count".
std::vector<Method> parse_methods(std::string_view list);

struct BenchmarkConfig {
  /// Pre-trained model; trained from `train` on the training portion if absent.
  std::optional<EmbeddingTable> model;
  TrainConfig train;
  bool include_embedding = true;
  std::vector<Method> baselines;
  MFConfig mf;
  LabelPropagationConfig label_propagation;
  /// Replaces label propagation when present.
  std::optional<CommunityAssignment> communities;
  bool adjacency_multiplicity = true;
  TieRule ties = TieRule::kHalf;
};

struct MethodResult {
  Method method = Method::kEmbedding;
  std::optional<AucResult> result;  // empty when the method failed
  std::string error;
};

struct EvalReport {
  std::vector<MethodResult> rows;

  bool any_failed() const;
  const MethodResult* find(Method m) const;
};

/// Fits every requested method on the training portion and scores all
/// triplets. A failing method is recorded and the others still run.
EvalReport run_benchmark(const EventStream& stream, const Holdout& holdout,
                         const BenchmarkConfig& config,
                         const std::function<void(const std::string&)>& log = {});

/// `method,auc,ci95,n`; failed methods are written with nan values and n=0.
std::string format_report(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& path);

}  // namespace collab
