#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "collab/canvas_state.hpp"
#include "collab/event_log.hpp"

namespace collab {

// ---------------------------------------------------------------------------
// Median: distance to the user's componentwise (lower) median click.

class MedianModel {
 public:
  static MedianModel fit(const EventStream& stream, std::span<const std::size_t> training_actions);

  bool contains(UserId u) const { return u < known_.size() && known_[u]; }
  /// Throws std::out_of_range for users without training actions.
  std::pair<std::int32_t, std::int32_t> median(UserId u) const;
  /// Negative Euclidean distance between (x, y) and the user's median.
  double score(UserId u, std::int32_t x, std::int32_t y) const;

 private:
  std::vector<std::int32_t> mx_;
  std::vector<std::int32_t> my_;
  std::vector<bool> known_;
};

// ---------------------------------------------------------------------------
// Count: symmetric adjacent-click co-occurrence counts.

class AdjacencyCounts {
 public:
  AdjacencyCounts() = default;

  /// For each training action by u and each contributor v of its context,
  /// adds one to adj(u, v). With `multiplicity` false a contributor counts
  /// once per action.
  static AdjacencyCounts build(const EventStream& stream, const ActionContexts& contexts,
                               std::span<const std::size_t> training_actions,
                               bool multiplicity = true);
  /// Builds from explicit (u, v, weight) increments; mainly for tests.
  static AdjacencyCounts from_edges(std::size_t users,
                                    std::span<const std::tuple<UserId, UserId, std::uint64_t>> edges);

  std::size_t users() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::uint64_t get(UserId u, UserId v) const;
  /// Neighbors of u (including u itself if a self pair exists), sorted by id.
  std::span<const UserId> neighbors(UserId u) const;
  std::span<const std::uint64_t> weights(UserId u) const;
  /// Number of distinct unordered pairs with a nonzero count.
  std::size_t pair_count() const { return pairs_; }
  /// Sum over distinct unordered pairs of their counts.
  std::uint64_t total() const { return total_; }

 private:
  static AdjacencyCounts from_keys(std::size_t users, std::vector<std::uint64_t>& keys,
                                   std::span<const std::uint64_t> key_weights);
  std::vector<std::uint64_t> offsets_;
  std::vector<UserId> cols_;
  std::vector<std::uint64_t> vals_;
  std::size_t pairs_ = 0;
  std::uint64_t total_ = 0;
};

double count_score(const AdjacencyCounts& adj, UserId u, std::span<const UserId> ctx);

// ---------------------------------------------------------------------------
// Community detection.

struct CommunityAssignment {
  std::vector<std::int64_t> community;  // indexed by UserId
  std::size_t communities() const;
};

struct LabelPropagationConfig {
  std::size_t max_iter = 100;
  std::uint64_t seed = 1;
};

/// Asynchronous weighted label propagation. Nodes are visited in ascending
/// id order; a node keeps its label when it is among the heaviest, otherwise
/// ties are broken with the seeded generator. Self pairs are ignored.
/// Community ids are dense, numbered by first appearance in id order.
CommunityAssignment detect_communities(const AdjacencyCounts& adj, LabelPropagationConfig cfg = {});

/// Number of contributors sharing u's community; unknown users match nothing.
double community_score(const CommunityAssignment& c, UserId u, std::span<const UserId> ctx);

/// `user,community` files, ids resolved against `users`. Users missing from
/// the file get fresh singleton communities.
CommunityAssignment load_communities(const std::filesystem::path& path, const UserTable& users);
void save_communities(const CommunityAssignment& c, const UserTable& users,
                      const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// MF: implicit-feedback alternating least squares on the user x pixel matrix.

struct MFConfig {
  std::size_t rank = 32;
  double regularization = 0.1;
  double confidence = 40.0;  // c in 1 + c * count
  std::size_t sweeps = 10;
  std::uint64_t seed = 1;
  double init_scale = 0.01;
};

class MFModel {
 public:
  std::size_t rank() const { return rank_; }
  bool contains(UserId u) const { return u < has_data_.size() && has_data_[u]; }
  /// Throws std::out_of_range for users without training interactions.
  /// Untouched pixels score 0.
  double score(UserId u, std::int32_t x, std::int32_t y) const;

  /// Weighted regularized squared loss over the full user x pixel matrix.
  double objective() const;

 private:
  friend MFModel mf_train(const EventStream&, std::span<const std::size_t>, const MFConfig&,
                          const std::function<void(std::size_t, double)>&);
  void solve_users();
  void solve_items();

  std::size_t rank_ = 0;
  double reg_ = 0.0;
  double confidence_ = 0.0;
  std::int32_t width_ = 0;
  std::vector<double> user_f_;  // users x rank
  std::vector<double> item_f_;  // touched pixels x rank
  std::unordered_map<std::uint64_t, std::uint32_t> item_index_;  // pixel -> item row
  std::vector<bool> has_data_;
  // Interactions in both orientations: (other index, count).
  std::vector<std::uint64_t> u_off_, i_off_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> u_nz_, i_nz_;
};

/// `on_half_sweep(k, objective)` is invoked after every half sweep (k counts
/// half sweeps from 1) when provided.
MFModel mf_train(const EventStream& stream, std::span<const std::size_t> training_actions,
                 const MFConfig& cfg,
                 const std::function<void(std::size_t, double)>& on_half_sweep = {});

inline double mf_score(const MFModel& m, UserId u, std::int32_t x, std::int32_t y) {
  return m.score(u, x, y);
}
inline double median_score(const MedianModel& m, UserId u, std::int32_t x, std::int32_t y) {
  return m.score(u, x, y);
}

}  // namespace collab
