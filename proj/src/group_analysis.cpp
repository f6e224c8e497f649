#include "collab/group_analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <Eigen/SVD>

namespace collab {

std::size_t GroupLabels::noise_count() const {
  return static_cast<std::size_t>(std::count(group.begin(), group.end(), kNoise));
}

namespace {

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

std::vector<std::size_t> region_query(const EmbeddingTable& table, std::size_t p, double eps_sq) {
  std::vector<std::size_t> out;
  const auto row = table.row(p);
  for (std::size_t q = 0; q < table.rows(); ++q)
    if (squared_distance(row, table.row(q)) <= eps_sq) out.push_back(q);
  return out;
}

}  // namespace

GroupLabels dbscan_groups(const EmbeddingTable& table, double eps, std::size_t min_pts) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
  if (min_pts < 1) throw std::invalid_argument("min_pts must be >= 1");
  constexpr std::int64_t kUnvisited = -3;
  const double eps_sq = eps * eps;
  GroupLabels out;
  out.group.assign(table.rows(), kUnvisited);
  std::int64_t next = 0;
  for (std::size_t p = 0; p < table.rows(); ++p) {
    if (out.group[p] != kUnvisited) continue;
    auto seeds = region_query(table, p, eps_sq);
    if (seeds.size() < min_pts) {
      out.group[p] = GroupLabels::kNoise;
      continue;
    }
    const std::int64_t id = next++;
    out.group[p] = id;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const auto q = seeds[i];
      if (out.group[q] == GroupLabels::kNoise) out.group[q] = id;  // border point
      if (out.group[q] != kUnvisited) continue;
      out.group[q] = id;
      auto more = region_query(table, q, eps_sq);
      if (more.size() >= min_pts) seeds.insert(seeds.end(), more.begin(), more.end());
    }
  }
  out.groups = static_cast<std::size_t>(next);
  return out;
}

EmbeddingTable normalized_rows(const EmbeddingTable& table) {
  EmbeddingTable out = table;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto p = out.row(r);
    const float n = std::sqrt(dot<float>(p, p));
    if (n == 0.0f) continue;
    for (auto& v : p) v /= n;
  }
  return out;
}

std::size_t spectral_gap_rank(std::span<const double> sv) {
  std::size_t best = 1;
  double best_ratio = 0.0;
  for (std::size_t i = 0; i + 1 < sv.size(); ++i) {
    if (!(sv[i + 1] > 0.0)) break;
    const double ratio = sv[i] / sv[i + 1];
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = i + 1;
    }
  }
  return best;
}

EmbeddingTable principal_projection(const EmbeddingTable& table, std::size_t dims) {
  const auto n = static_cast<Eigen::Index>(table.rows());
  const auto k = static_cast<Eigen::Index>(table.dim());
  if (n == 0 || k == 0) throw std::invalid_argument("empty embedding table");
  Eigen::MatrixXd x(n, k);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto row = table.row(static_cast<std::size_t>(r));
    for (Eigen::Index c = 0; c < k; ++c) x(r, c) = row[static_cast<std::size_t>(c)];
  }
  x.rowwise() -= x.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (dims == 0) dims = spectral_gap_rank({sv.data(), static_cast<std::size_t>(sv.size())});
  if (dims > static_cast<std::size_t>(sv.size()))
    throw std::invalid_argument("projection dimension exceeds table rank bound");
  const Eigen::MatrixXd y = x * svd.matrixV().leftCols(static_cast<Eigen::Index>(dims));
  EmbeddingTable out(table.users(), dims);
  for (Eigen::Index r = 0; r < n; ++r) {
    auto row = out.row(static_cast<std::size_t>(r));
    for (std::size_t c = 0; c < dims; ++c) row[c] = static_cast<float>(y(r, static_cast<Eigen::Index>(c)));
  }
  return out;
}

std::vector<double> k_distances(const EmbeddingTable& table, std::size_t k) {
  if (k < 1 || k >= table.rows()) throw std::invalid_argument("k must lie in [1, rows)");
  std::vector<double> out;
  out.reserve(table.rows());
  std::vector<double> d(table.rows() - 1);
  for (std::size_t p = 0; p < table.rows(); ++p) {
    std::size_t j = 0;
    for (std::size_t q = 0; q < table.rows(); ++q)
      if (q != p) d[j++] = squared_distance(table.row(p), table.row(q));
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
    out.push_back(std::sqrt(d[k - 1]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

double k_distance_elbow(std::span<const double> sorted) {
  if (sorted.empty()) throw std::invalid_argument("empty k-distance curve");
  if (sorted.size() < 3) return sorted.back();
  const double lo = sorted.front();
  const double span = sorted.back() - lo;
  if (span <= 0.0) return sorted.back();
  const double n = static_cast<double>(sorted.size() - 1);
  // Chord from (0, 0) to (1, 1) in normalized coordinates; distance is
  // proportional to |x - y|.
  std::size_t best = 0;
  double best_gap = -1.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double x = static_cast<double>(i) / n;
    const double y = (sorted[i] - lo) / span;
    const double gap = x - y;
    if (gap > best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return sorted[best];
}

std::vector<std::int64_t> trace_map(const EventStream& stream, std::size_t begin, std::size_t end,
                                    std::span<const std::int64_t> group_of_user) {
  if (begin > end || end > stream.size()) throw std::out_of_range("window outside stream");
  std::vector<std::int64_t> raster(stream.pixel_count(), kBackground);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& e = stream.events[i];
    const std::int64_t g = e.user < group_of_user.size() ? group_of_user[e.user] : GroupLabels::kNoise;
    raster[static_cast<std::size_t>(e.y) * stream.width + e.x] = g;
  }
  return raster;
}

void write_trace_ppm(std::span<const std::int64_t> raster, std::int32_t width, std::int32_t height,
                     const std::filesystem::path& path) {
  static constexpr std::array<std::array<unsigned char, 3>, 12> kPalette = {{
      {228, 26, 28}, {55, 126, 184}, {77, 175, 74}, {152, 78, 163}, {255, 127, 0}, {166, 86, 40},
      {247, 129, 191}, {0, 139, 139}, {255, 215, 0}, {0, 0, 128}, {128, 128, 0}, {0, 0, 0},
  }};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << width << ' ' << height << "\n255\n";
  for (const auto g : raster) {
    std::array<unsigned char, 3> c{255, 255, 255};
    if (g == GroupLabels::kNoise) {
      c = {160, 160, 160};
    } else if (g >= 0) {
      c = kPalette[static_cast<std::size_t>(g) % kPalette.size()];
    }
    out.write(reinterpret_cast<const char*>(c.data()), 3);
  }
}

}  // namespace collab
