#include "collab/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <tuple>

#include "collab/rng.hpp"

namespace collab {

MedianModel MedianModel::fit(const EventStream& stream, std::span<const std::size_t> training_actions) {
  const std::size_t n = stream.users.size();
  std::vector<std::vector<std::int32_t>> xs(n), ys(n);
  for (const auto a : training_actions) {
    const auto& e = stream.events.at(a);
    xs[e.user].push_back(e.x);
    ys[e.user].push_back(e.y);
  }
  MedianModel m;
  m.mx_.assign(n, 0);
  m.my_.assign(n, 0);
  m.known_.assign(n, false);
  for (std::size_t u = 0; u < n; ++u) {
    if (xs[u].empty()) continue;
    const auto k = (xs[u].size() - 1) / 2;  // lower median
    std::nth_element(xs[u].begin(), xs[u].begin() + static_cast<std::ptrdiff_t>(k), xs[u].end());
    std::nth_element(ys[u].begin(), ys[u].begin() + static_cast<std::ptrdiff_t>(k), ys[u].end());
    m.mx_[u] = xs[u][k];
    m.my_[u] = ys[u][k];
    m.known_[u] = true;
  }
  return m;
}

std::pair<std::int32_t, std::int32_t> MedianModel::median(UserId u) const {
  if (!contains(u)) throw std::out_of_range("median: user " + std::to_string(u) + " has no training actions");
  return {mx_[u], my_[u]};
}

double MedianModel::score(UserId u, std::int32_t x, std::int32_t y) const {
  const auto [mx, my] = median(u);
  return -std::hypot(static_cast<double>(x - mx), static_cast<double>(y - my));
}

namespace {
std::uint64_t pair_key(UserId a, UserId b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}
}  // namespace

AdjacencyCounts AdjacencyCounts::from_keys(std::size_t users, std::vector<std::uint64_t>& keys,
                                           std::span<const std::uint64_t> key_weights) {
  // Sort keys (with weights) and run-length merge.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> kw;
  kw.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i)
    kw.emplace_back(keys[i], key_weights.empty() ? 1 : key_weights[i]);
  std::sort(kw.begin(), kw.end());
  std::vector<std::pair<std::uint64_t, std::uint64_t>> merged;
  for (const auto& [k, w] : kw) {
    if (w == 0) continue;
    if (!merged.empty() && merged.back().first == k) {
      merged.back().second += w;
    } else {
      merged.emplace_back(k, w);
    }
  }

  AdjacencyCounts adj;
  adj.pairs_ = merged.size();
  std::vector<std::uint64_t> degree(users, 0);
  for (const auto& [k, w] : merged) {
    const auto a = static_cast<UserId>(k >> 32);
    const auto b = static_cast<UserId>(k & 0xFFFFFFFFu);
    if (a >= users || b >= users) throw std::out_of_range("adjacency user out of range");
    ++degree[a];
    if (a != b) ++degree[b];
    adj.total_ += w;
  }
  adj.offsets_.assign(users + 1, 0);
  for (std::size_t u = 0; u < users; ++u) adj.offsets_[u + 1] = adj.offsets_[u] + degree[u];
  adj.cols_.resize(adj.offsets_.back());
  adj.vals_.resize(adj.offsets_.back());
  std::vector<std::uint64_t> fill(adj.offsets_.begin(), adj.offsets_.end() - 1);
  for (const auto& [k, w] : merged) {
    const auto a = static_cast<UserId>(k >> 32);
    const auto b = static_cast<UserId>(k & 0xFFFFFFFFu);
    adj.cols_[fill[a]] = b;
    adj.vals_[fill[a]++] = w;
    if (a != b) {
      adj.cols_[fill[b]] = a;
      adj.vals_[fill[b]++] = w;
    }
  }
  // Rows of b were filled in ascending a order, which is ascending overall
  // only after sorting each row.
  for (std::size_t u = 0; u < users; ++u) {
    const auto lo = adj.offsets_[u];
    const auto hi = adj.offsets_[u + 1];
    std::vector<std::pair<UserId, std::uint64_t>> row;
    row.reserve(hi - lo);
    for (auto i = lo; i < hi; ++i) row.emplace_back(adj.cols_[i], adj.vals_[i]);
    std::sort(row.begin(), row.end());
    for (auto i = lo; i < hi; ++i) {
      adj.cols_[i] = row[i - lo].first;
      adj.vals_[i] = row[i - lo].second;
    }
  }
  return adj;
}

AdjacencyCounts AdjacencyCounts::build(const EventStream& stream, const ActionContexts& contexts,
                                       std::span<const std::size_t> training_actions, bool multiplicity) {
  std::vector<std::uint64_t> keys;
  keys.reserve(training_actions.size() * 6);
  for (const auto a : training_actions) {
    const UserId u = stream.events.at(a).user;
    const auto ctx = contexts[a];
    for (std::size_t i = 0; i < ctx.size(); ++i) {
      if (!multiplicity && std::find(ctx.begin(), ctx.begin() + static_cast<std::ptrdiff_t>(i), ctx[i]) !=
                               ctx.begin() + static_cast<std::ptrdiff_t>(i))
        continue;
      keys.push_back(pair_key(u, ctx[i]));
    }
  }
  return from_keys(stream.users.size(), keys, {});
}

AdjacencyCounts AdjacencyCounts::from_edges(
    std::size_t users, std::span<const std::tuple<UserId, UserId, std::uint64_t>> edges) {
  std::vector<std::uint64_t> keys;
  std::vector<std::uint64_t> weights;
  for (const auto& [a, b, w] : edges) {
    keys.push_back(pair_key(a, b));
    weights.push_back(w);
  }
  return from_keys(users, keys, weights);
}

std::uint64_t AdjacencyCounts::get(UserId u, UserId v) const {
  if (u >= users() || v >= users()) return 0;
  const auto row = neighbors(u);
  const auto it = std::lower_bound(row.begin(), row.end(), v);
  if (it == row.end() || *it != v) return 0;
  return vals_[offsets_[u] + static_cast<std::size_t>(it - row.begin())];
}

std::span<const UserId> AdjacencyCounts::neighbors(UserId u) const {
  return {cols_.data() + offsets_[u], cols_.data() + offsets_[u + 1]};
}

std::span<const std::uint64_t> AdjacencyCounts::weights(UserId u) const {
  return {vals_.data() + offsets_[u], vals_.data() + offsets_[u + 1]};
}

double count_score(const AdjacencyCounts& adj, UserId u, std::span<const UserId> ctx) {
  std::uint64_t s = 0;
  for (const UserId k : ctx) s += adj.get(u, k);
  return static_cast<double>(s);
}

std::size_t CommunityAssignment::communities() const {
  std::vector<std::int64_t> ids(community.begin(), community.end());
  std::sort(ids.begin(), ids.end());
  return static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
}

namespace {
CommunityAssignment densify(std::vector<std::int64_t> labels) {
  std::unordered_map<std::int64_t, std::int64_t> remap;
  for (auto& l : labels) {
    auto [it, inserted] = remap.emplace(l, static_cast<std::int64_t>(remap.size()));
    l = it->second;
  }
  return {std::move(labels)};
}
}  // namespace

CommunityAssignment detect_communities(const AdjacencyCounts& adj, LabelPropagationConfig cfg) {
  const std::size_t n = adj.users();
  std::vector<std::int64_t> label(n);
  for (std::size_t u = 0; u < n; ++u) label[u] = static_cast<std::int64_t>(u);
  Rng rng(cfg.seed);

  std::vector<std::uint64_t> weight_of(n, 0);
  std::vector<std::int64_t> touched;
  std::vector<std::int64_t> best;
  for (std::size_t iter = 0; iter < cfg.max_iter; ++iter) {
    std::size_t changes = 0;
    for (std::size_t u = 0; u < n; ++u) {
      const auto nb = adj.neighbors(static_cast<UserId>(u));
      const auto w = adj.weights(static_cast<UserId>(u));
      touched.clear();
      for (std::size_t i = 0; i < nb.size(); ++i) {
        if (nb[i] == u) continue;
        const auto l = label[nb[i]];
        if (weight_of[static_cast<std::size_t>(l)] == 0) touched.push_back(l);
        weight_of[static_cast<std::size_t>(l)] += w[i];
      }
      if (touched.empty()) continue;
      std::uint64_t top = 0;
      for (const auto l : touched) top = std::max(top, weight_of[static_cast<std::size_t>(l)]);
      best.clear();
      for (const auto l : touched)
        if (weight_of[static_cast<std::size_t>(l)] == top) best.push_back(l);
      for (const auto l : touched) weight_of[static_cast<std::size_t>(l)] = 0;
      if (std::find(best.begin(), best.end(), label[u]) != best.end()) continue;
      std::sort(best.begin(), best.end());
      label[u] = best[best.size() == 1 ? 0 : rng.below(best.size())];
      ++changes;
    }
    if (changes == 0) break;
  }
  return densify(std::move(label));
}

double community_score(const CommunityAssignment& c, UserId u, std::span<const UserId> ctx) {
  if (u >= c.community.size()) return 0.0;
  const auto mine = c.community[u];
  double s = 0.0;
  for (const UserId k : ctx)
    if (k < c.community.size() && c.community[k] == mine) s += 1.0;
  return s;
}

CommunityAssignment load_communities(const std::filesystem::path& path, const UserTable& users) {
  const auto text = read_file(path);
  std::vector<std::optional<std::int64_t>> raw(users.size());
  std::size_t pos = 0;
  std::size_t line_no = 0;
  std::int64_t max_label = -1;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "user,community") throw ParseError("line 1: expected header 'user,community'", 1);
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0)
      throw ParseError("line " + std::to_string(line_no) + ": malformed community row", line_no);
    std::int64_t label = 0;
    try {
      std::size_t used = 0;
      label = std::stoll(line.substr(comma + 1), &used);
      if (used != line.size() - comma - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(line_no) + ": bad community id", line_no);
    }
    if (const auto id = users.find(line.substr(0, comma))) {
      raw[*id] = label;
      max_label = std::max(max_label, label);
    }
  }
  std::vector<std::int64_t> labels(users.size());
  std::int64_t next = max_label + 1;
  for (std::size_t u = 0; u < users.size(); ++u) labels[u] = raw[u] ? *raw[u] : next++;
  return densify(std::move(labels));
}

void save_communities(const CommunityAssignment& c, const UserTable& users,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "user,community\n";
  for (std::size_t u = 0; u < c.community.size(); ++u)
    out << users.name(static_cast<UserId>(u)) << ',' << c.community[u] << '\n';
}

// ---------------------------------------------------------------------------
// Implicit ALS.

namespace {
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<Matrix>;
using ConstMapMatrix = Eigen::Map<const Matrix>;
using Vector = Eigen::VectorXd;

// Solves every row of `target` against the fixed factors `other`:
//   (O^T O + sum_j (c_j - 1) o_j o_j^T + reg I) x = sum_j c_j o_j.
void solve_side(std::vector<double>& target, const std::vector<double>& other, std::size_t rank,
                const std::vector<std::uint64_t>& off,
                const std::vector<std::pair<std::uint32_t, std::uint32_t>>& nz, double reg,
                double confidence) {
  const auto rows = static_cast<Eigen::Index>(target.size() / rank);
  const auto other_rows = static_cast<Eigen::Index>(other.size() / rank);
  const auto r = static_cast<Eigen::Index>(rank);
  ConstMapMatrix O(other.data(), other_rows, r);
  const Matrix gram = O.transpose() * O;
  MapMatrix T(target.data(), rows, r);
  Matrix A(r, r);
  Vector b(r);
  for (Eigen::Index row = 0; row < rows; ++row) {
    A = gram;
    A.diagonal().array() += reg;
    b.setZero();
    for (auto k = off[static_cast<std::size_t>(row)]; k < off[static_cast<std::size_t>(row) + 1]; ++k) {
      const auto [j, count] = nz[k];
      const double c = 1.0 + confidence * static_cast<double>(count);
      const auto o = O.row(j);
      A.noalias() += (c - 1.0) * o.transpose() * o;
      b.noalias() += c * o.transpose();
    }
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success) throw std::runtime_error("ALS: ridge system not positive definite");
    T.row(row) = llt.solve(b).transpose();
  }
}
}  // namespace

void MFModel::solve_users() { solve_side(user_f_, item_f_, rank_, u_off_, u_nz_, reg_, confidence_); }
void MFModel::solve_items() { solve_side(item_f_, user_f_, rank_, i_off_, i_nz_, reg_, confidence_); }

double MFModel::objective() const {
  const auto r = static_cast<Eigen::Index>(rank_);
  ConstMapMatrix X(user_f_.data(), static_cast<Eigen::Index>(user_f_.size() / rank_), r);
  ConstMapMatrix Y(item_f_.data(), static_cast<Eigen::Index>(item_f_.size() / rank_), r);
  const Matrix xtx = X.transpose() * X;
  const Matrix yty = Y.transpose() * Y;
  // Every cell contributes s^2 with unit confidence; observed cells correct it.
  double loss = (xtx.array() * yty.array()).sum();
  for (std::size_t u = 0; u + 1 < u_off_.size(); ++u) {
    for (auto k = u_off_[u]; k < u_off_[u + 1]; ++k) {
      const auto [i, count] = u_nz_[k];
      const double c = 1.0 + confidence_ * static_cast<double>(count);
      const double s = X.row(static_cast<Eigen::Index>(u)).dot(Y.row(i));
      loss += c * (1.0 - s) * (1.0 - s) - s * s;
    }
  }
  loss += reg_ * (X.squaredNorm() + Y.squaredNorm());
  return loss;
}

double MFModel::score(UserId u, std::int32_t x, std::int32_t y) const {
  if (!contains(u)) throw std::out_of_range("mf: user " + std::to_string(u) + " has no training interactions");
  const auto pixel = static_cast<std::uint64_t>(y) * static_cast<std::uint64_t>(width_) + static_cast<std::uint64_t>(x);
  const auto it = item_index_.find(pixel);
  if (it == item_index_.end()) return 0.0;
  const double* xu = user_f_.data() + static_cast<std::size_t>(u) * rank_;
  const double* yi = item_f_.data() + static_cast<std::size_t>(it->second) * rank_;
  double s = 0.0;
  for (std::size_t d = 0; d < rank_; ++d) s += xu[d] * yi[d];
  return s;
}

MFModel mf_train(const EventStream& stream, std::span<const std::size_t> training_actions,
                 const MFConfig& cfg, const std::function<void(std::size_t, double)>& on_half_sweep) {
  if (training_actions.empty()) throw std::invalid_argument("mf: no interactions");
  if (cfg.rank < 1) throw std::invalid_argument("mf: rank must be >= 1");
  if (!(cfg.regularization > 0.0)) throw std::invalid_argument("mf: regularization must be > 0");
  MFModel m;
  m.rank_ = cfg.rank;
  m.reg_ = cfg.regularization;
  m.confidence_ = cfg.confidence;
  m.width_ = stream.width;

  // (user, pixel) -> count, with pixels compacted in first-seen order.
  std::vector<std::pair<std::uint64_t, std::uint32_t>> cells;  // (user << 32 | item, 1)
  cells.reserve(training_actions.size());
  for (const auto a : training_actions) {
    const auto& e = stream.events.at(a);
    const auto pixel = static_cast<std::uint64_t>(e.y) * static_cast<std::uint64_t>(stream.width) +
                       static_cast<std::uint64_t>(e.x);
    auto [it, inserted] = m.item_index_.emplace(pixel, static_cast<std::uint32_t>(m.item_index_.size()));
    cells.emplace_back((static_cast<std::uint64_t>(e.user) << 32) | it->second, 1);
  }
  std::sort(cells.begin(), cells.end());
  std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> merged;  // user, item, count
  for (const auto& [key, one] : cells) {
    const auto u = static_cast<std::uint32_t>(key >> 32);
    const auto i = static_cast<std::uint32_t>(key & 0xFFFFFFFFu);
    if (!merged.empty() && std::get<0>(merged.back()) == u && std::get<1>(merged.back()) == i) {
      ++std::get<2>(merged.back());
    } else {
      merged.emplace_back(u, i, one);
    }
  }

  const std::size_t users = stream.users.size();
  const std::size_t items = m.item_index_.size();
  m.has_data_.assign(users, false);
  m.u_off_.assign(users + 1, 0);
  m.i_off_.assign(items + 1, 0);
  for (const auto& [u, i, c] : merged) {
    ++m.u_off_[u + 1];
    ++m.i_off_[i + 1];
    m.has_data_[u] = true;
  }
  for (std::size_t u = 0; u < users; ++u) m.u_off_[u + 1] += m.u_off_[u];
  for (std::size_t i = 0; i < items; ++i) m.i_off_[i + 1] += m.i_off_[i];
  m.u_nz_.resize(merged.size());
  m.i_nz_.resize(merged.size());
  std::vector<std::uint64_t> ufill(m.u_off_.begin(), m.u_off_.end() - 1);
  std::vector<std::uint64_t> ifill(m.i_off_.begin(), m.i_off_.end() - 1);
  for (const auto& [u, i, c] : merged) {
    m.u_nz_[ufill[u]++] = {i, c};
    m.i_nz_[ifill[i]++] = {u, c};
  }

  Rng rng(cfg.seed);
  m.user_f_.resize(users * cfg.rank);
  m.item_f_.resize(items * cfg.rank);
  for (auto& v : m.item_f_) v = rng.normal() * cfg.init_scale;
  for (auto& v : m.user_f_) v = rng.normal() * cfg.init_scale;

  std::size_t half = 0;
  for (std::size_t s = 0; s < cfg.sweeps; ++s) {
    m.solve_users();
    if (on_half_sweep) on_half_sweep(++half, m.objective());
    m.solve_items();
    if (on_half_sweep) on_half_sweep(++half, m.objective());
  }
  return m;
}

}  // namespace collab
