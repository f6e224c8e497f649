#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "collab/canvas_state.hpp"
#include "collab/event_log.hpp"
#include "collab/rng.hpp"

namespace collab {

/// One K-dimensional real vector per user; row index equals the UserId of the
/// stream the table was built for.
template <typename Real>
class BasicEmbeddingTable {
 public:
  using value_type = Real;

  BasicEmbeddingTable() = default;
  BasicEmbeddingTable(std::vector<std::string> users, std::size_t dim)
      : dim_(dim), users_(std::move(users)), values_(users_.size() * dim, Real(0)) {
    if (dim == 0) throw std::invalid_argument("embedding dimension must be >= 1");
    index_.reserve(users_.size());
    for (std::size_t i = 0; i < users_.size(); ++i)
      if (!index_.emplace(users_[i], i).second)
        throw std::invalid_argument("duplicate user id '" + users_[i] + "'");
  }

  std::size_t dim() const { return dim_; }
  std::size_t rows() const { return users_.size(); }
  const std::vector<std::string>& users() const { return users_; }

  std::span<Real> row(std::size_t r) { return {values_.data() + r * dim_, dim_}; }
  std::span<const Real> row(std::size_t r) const { return {values_.data() + r * dim_, dim_}; }
  std::span<Real> values() { return values_; }
  std::span<const Real> values() const { return values_; }

  std::size_t row_of(const std::string& user) const {
    auto it = index_.find(user);
    if (it == index_.end()) throw std::out_of_range("unknown user '" + user + "'");
    return it->second;
  }
  bool contains(const std::string& user) const { return index_.count(user) != 0; }

  void check_row(std::size_t r) const {
    if (r >= users_.size()) throw std::out_of_range("unknown user row " + std::to_string(r));
  }

  /// Fills every entry with Normal(0, scale^2).
  void randomize(Rng& rng, double scale) {
    for (auto& v : values_) v = static_cast<Real>(rng.normal() * scale);
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](Real v) { return std::isfinite(v); });
  }

  friend bool operator==(const BasicEmbeddingTable& a, const BasicEmbeddingTable& b) {
    return a.dim_ == b.dim_ && a.users_ == b.users_ && a.values_ == b.values_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> users_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Real> values_;
};

using EmbeddingTable = BasicEmbeddingTable<float>;

template <typename Real>
Real dot(std::span<const Real> a, std::span<const Real> b) {
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Writes sum_k p_k / |p_k| over the context multiset into `out`. Zero-norm
/// contributors add nothing.
template <typename Real>
void compose_context(const BasicEmbeddingTable<Real>& table, std::span<const UserId> ctx,
                     std::span<Real> out) {
  std::fill(out.begin(), out.end(), Real(0));
  for (const UserId k : ctx) {
    table.check_row(k);
    const auto p = table.row(k);
    const Real norm = std::sqrt(dot<Real>(p, p));
    if (norm == Real(0)) continue;
    const Real inv = Real(1) / norm;
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += p[d] * inv;
  }
}

template <typename Real>
std::vector<Real> compose_context(const BasicEmbeddingTable<Real>& table,
                                  std::span<const UserId> ctx) {
  std::vector<Real> q(table.dim());
  compose_context<Real>(table, ctx, q);
  return q;
}

/// p_u . q(ctx); the target vector is used unnormalized.
template <typename Real>
double score(const BasicEmbeddingTable<Real>& table, UserId u, std::span<const UserId> ctx) {
  table.check_row(u);
  const auto p = table.row(u);
  double s = 0.0;
  for (const UserId k : ctx) {
    table.check_row(k);
    const auto c = table.row(k);
    const Real norm = std::sqrt(dot<Real>(c, c));
    if (norm == Real(0)) continue;
    s += static_cast<double>(dot<Real>(p, c) / norm);
  }
  return s;
}

/// A preference of `user` for the positive action over the negative one,
/// each represented by its neighbor context.
struct Triplet {
  UserId user = kNoUser;
  std::span<const UserId> positive;
  std::span<const UserId> negative;
};

template <typename Real>
double score_difference(const BasicEmbeddingTable<Real>& table, const Triplet& t) {
  return score(table, t.user, t.positive) - score(table, t.user, t.negative);
}

inline double log_sigmoid(double x) {
  // ln(1 / (1 + e^-x)) without overflow for large |x|.
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// sum ln sigma(x_uij) - lambda * |Theta|^2 over the whole table.
template <typename Real>
double bpr_objective(const BasicEmbeddingTable<Real>& table, std::span<const Triplet> triplets,
                     double lambda) {
  double data = 0.0;
  for (const auto& t : triplets) data += log_sigmoid(score_difference(table, t));
  double sq = 0.0;
  for (const Real v : table.values()) sq += static_cast<double>(v) * static_cast<double>(v);
  return data - lambda * sq;
}

/// Gradient of ln sigma(x_uij) restricted to the rows involved in a triplet.
/// Rows appear once each; `grad` is row-major alongside `rows`.
template <typename Real>
struct TripletGradient {
  std::vector<UserId> rows;
  std::vector<Real> grad;
  double difference = 0.0;  // x_uij at the evaluation point
};

namespace detail {

// Distinct contributors with their multiplicity difference (positive minus
// negative), in first-seen order.
struct ContributorCoefficients {
  std::array<UserId, 2 * NeighborContext::kCapacity> users{};
  std::array<int, 2 * NeighborContext::kCapacity> coef{};
  std::size_t size = 0;

  void add(UserId u, int c) {
    for (std::size_t i = 0; i < size; ++i)
      if (users[i] == u) {
        coef[i] += c;
        return;
      }
    users[size] = u;
    coef[size] = c;
    ++size;
  }
};

inline ContributorCoefficients coefficients(const Triplet& t) {
  if (t.positive.size() > NeighborContext::kCapacity || t.negative.size() > NeighborContext::kCapacity)
    throw std::invalid_argument("context larger than 8 contributors");
  ContributorCoefficients cc;
  for (const UserId k : t.positive) cc.add(k, +1);
  for (const UserId k : t.negative) cc.add(k, -1);
  return cc;
}

}  // namespace detail

/// Scratch buffers reused across SGD steps.
template <typename Real>
struct SgdWorkspace {
  std::vector<Real> unit;     // normalized contributor vectors
  std::vector<Real> inv_norm;
  std::vector<Real> grad;     // per involved row
  std::vector<Real> diff;     // q_pos - q_neg
  std::vector<UserId> rows;

  void reserve(std::size_t dim) {
    constexpr std::size_t kMaxRows = 2 * NeighborContext::kCapacity + 1;
    unit.resize(kMaxRows * dim);
    inv_norm.resize(kMaxRows);
    grad.resize(kMaxRows * dim);
    diff.resize(dim);
    rows.reserve(kMaxRows);
  }
};

/// Computes d ln sigma(x_uij) / d theta for every involved row into
/// `ws.rows` / `ws.grad`, including the Jacobian of the l2 normalization.
/// Returns x_uij.
template <typename Real>
double triplet_gradient_into(const BasicEmbeddingTable<Real>& table, const Triplet& t,
                             SgdWorkspace<Real>& ws) {
  const std::size_t dim = table.dim();
  if (ws.diff.size() != dim) ws.reserve(dim);
  table.check_row(t.user);
  const auto cc = detail::coefficients(t);
  const auto target = table.row(t.user);

  // Row 0 is the target; contributor i is row i + 1 unless it is the target.
  ws.rows.clear();
  ws.rows.push_back(t.user);
  std::fill(ws.diff.begin(), ws.diff.end(), Real(0));
  std::array<std::size_t, 2 * NeighborContext::kCapacity> slot{};
  for (std::size_t i = 0; i < cc.size; ++i) {
    const UserId k = cc.users[i];
    table.check_row(k);
    std::size_t s = 0;
    if (k != t.user) {
      s = ws.rows.size();
      ws.rows.push_back(k);
    }
    slot[i] = s;
    const auto p = table.row(k);
    const Real norm = std::sqrt(dot<Real>(p, p));
    Real* unit = ws.unit.data() + i * dim;
    if (norm == Real(0)) {
      ws.inv_norm[i] = Real(0);
      std::fill(unit, unit + dim, Real(0));
      continue;
    }
    const Real inv = Real(1) / norm;
    ws.inv_norm[i] = inv;
    const Real c = static_cast<Real>(cc.coef[i]);
    for (std::size_t d = 0; d < dim; ++d) {
      unit[d] = p[d] * inv;
      ws.diff[d] += c * unit[d];
    }
  }

  const double x = static_cast<double>(dot<Real>(target, ws.diff));
  const auto weight = static_cast<Real>(sigmoid(-x));

  std::fill(ws.grad.begin(), ws.grad.begin() + static_cast<std::ptrdiff_t>(ws.rows.size() * dim), Real(0));
  Real* g_target = ws.grad.data();
  for (std::size_t d = 0; d < dim; ++d) g_target[d] = weight * ws.diff[d];
  for (std::size_t i = 0; i < cc.size; ++i) {
    if (cc.coef[i] == 0 || ws.inv_norm[i] == Real(0)) continue;
    const Real* unit = ws.unit.data() + i * dim;
    const Real proj = dot<Real>(std::span<const Real>(unit, dim), target);
    const Real scale = weight * static_cast<Real>(cc.coef[i]) * ws.inv_norm[i];
    Real* g = ws.grad.data() + slot[i] * dim;
    for (std::size_t d = 0; d < dim; ++d) g[d] += scale * (target[d] - unit[d] * proj);
  }
  return x;
}

template <typename Real>
TripletGradient<Real> triplet_gradient(const BasicEmbeddingTable<Real>& table, const Triplet& t) {
  SgdWorkspace<Real> ws;
  ws.reserve(table.dim());
  TripletGradient<Real> out;
  out.difference = triplet_gradient_into(table, t, ws);
  out.rows = ws.rows;
  out.grad.assign(ws.grad.begin(), ws.grad.begin() + static_cast<std::ptrdiff_t>(ws.rows.size() * table.dim()));
  return out;
}

struct StepParams {
  double alpha = 0.04;
  double lambda = 0.01;
};

/// One ascent step: theta += alpha * (sigma(-x) dx/dtheta - lambda theta) for
/// every row the triplet touches. Gradients are evaluated before any row is
/// written. Throws on a non-finite gradient. Returns x_uij before the step.
template <typename Real>
double sgd_step(BasicEmbeddingTable<Real>& table, const Triplet& t, StepParams params,
                SgdWorkspace<Real>& ws) {
  const double x = triplet_gradient_into(table, t, ws);
  const std::size_t dim = table.dim();
  const auto alpha = static_cast<Real>(params.alpha);
  const auto lambda = static_cast<Real>(params.lambda);
  for (std::size_t r = 0; r < ws.rows.size(); ++r) {
    const Real* g = ws.grad.data() + r * dim;
    for (std::size_t d = 0; d < dim; ++d)
      if (!std::isfinite(g[d]))
        throw std::runtime_error("non-finite gradient for user '" + table.users()[ws.rows[r]] +
                                 "' (x_uij=" + std::to_string(x) + ")");
  }
  for (std::size_t r = 0; r < ws.rows.size(); ++r) {
    auto p = table.row(ws.rows[r]);
    const Real* g = ws.grad.data() + r * dim;
    for (std::size_t d = 0; d < dim; ++d) p[d] += alpha * (g[d] - lambda * p[d]);
  }
  return x;
}

template <typename Real>
double sgd_step(BasicEmbeddingTable<Real>& table, const Triplet& t, StepParams params) {
  SgdWorkspace<Real> ws;
  ws.reserve(table.dim());
  return sgd_step(table, t, params, ws);
}

// ---------------------------------------------------------------------------
// Negative sampling and training.

/// Training actions grouped for "any action by another user" draws.
class ActionPool {
 public:
  ActionPool(const EventStream& stream, std::span<const std::size_t> actions);

  std::size_t size() const { return actions_.size(); }
  std::size_t action(std::size_t i) const { return actions_[i]; }
  UserId actor(std::size_t i) const { return actors_[i]; }
  std::size_t count_by(UserId u) const { return u < per_user_.size() ? per_user_[u] : 0; }

 private:
  std::vector<std::size_t> actions_;
  std::vector<UserId> actors_;
  std::vector<std::size_t> per_user_;
};

/// Uniform draw over pool actions whose actor differs from `u`; returns the
/// event index. Throws if no such action exists.
std::size_t sample_negative(Rng& rng, const ActionPool& pool, UserId u);

struct TrainConfig {
  double alpha = 0.04;
  double lambda = 0.01;
  std::size_t dim = 120;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  bool include_self = true;
  bool dedup_context = false;
  double init_scale = 0.01;
  /// Training triplets frozen at start and re-scored after every epoch.
  std::size_t probe_size = 2000;

  ContextOptions context_options() const { return {include_self, dedup_context}; }
  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  std::size_t skipped = 0;  // both contexts empty
  double mean_log_likelihood = 0.0;
  double probe_auc = 0.0;
};

struct TrainResult {
  EmbeddingTable table;
  std::vector<EpochStats> epochs;
};

/// Trains embeddings for every user of `stream` on the given training actions
/// (event indices, chronological). `contexts` must be built from `stream`
/// with cfg.context_options().
TrainResult train(const EventStream& stream, const ActionContexts& contexts,
                  std::span<const std::size_t> training_actions, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

// ---------------------------------------------------------------------------
// Model files.

inline constexpr std::uint32_t kModelVersion = 1;

/// Little-endian: "CLB1", u32 version, u32 K, u64 users, per user (u32 length,
/// bytes), then row-major f32 values.
std::string serialize_model(const EmbeddingTable& table);
EmbeddingTable deserialize_model(std::string_view bytes);
void save_model(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_model(const std::filesystem::path& path);

/// `user,v0,...,v{K-1}`.
void export_embeddings_csv(const EmbeddingTable& table, const std::filesystem::path& path);

/// Re-indexes `table` rows to `users` order (missing users become zero rows).
/// Returns the number of users not found in the table.
std::size_t align_to_users(const EmbeddingTable& table, const UserTable& users,
                           EmbeddingTable& aligned);

}  // namespace collab
