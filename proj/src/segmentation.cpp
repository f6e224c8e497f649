#include "collab/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace collab {

FingerprintMap fingerprint_canvas(const CanvasGrid& grid, const UserTable& users,
                                  const EmbeddingTable& table) {
  FingerprintMap fp;
  fp.width = grid.width();
  fp.height = grid.height();
  fp.dim = table.dim();
  fp.values.assign(grid.pixel_count() * fp.dim, 0.0);
  fp.present.assign(grid.pixel_count(), 0);

  // Resolve stream users to model rows once.
  std::vector<std::optional<std::size_t>> row_of(users.size());
  for (std::size_t u = 0; u < users.size(); ++u) {
    const auto& name = users.name(static_cast<UserId>(u));
    if (table.contains(name)) row_of[u] = table.row_of(name);
  }
  const auto painters = grid.last_updaters();
  for (std::size_t p = 0; p < painters.size(); ++p) {
    const UserId u = painters[p];
    if (u == kNoUser) continue;
    fp.present[p] = 1;
    if (u >= row_of.size() || !row_of[u]) {
      ++fp.unknown_painters;
      continue;
    }
    const auto src = table.row(*row_of[u]);
    std::copy(src.begin(), src.end(), fp.values.begin() + static_cast<std::ptrdiff_t>(p * fp.dim));
  }
  return fp;
}

namespace {

struct Candidate {
  double cost;
  std::uint64_t key_lo;
  std::uint64_t key_hi;
  std::uint32_t a;
  std::uint32_t b;
  std::uint32_t version_a;
  std::uint32_t version_b;
};

struct CandidateAfter {
  bool operator()(const Candidate& x, const Candidate& y) const {
    if (x.cost != y.cost) return x.cost > y.cost;
    if (x.key_lo != y.key_lo) return x.key_lo > y.key_lo;
    return x.key_hi > y.key_hi;
  }
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0u); }
  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::uint32_t> parent_;
};

SegmentationResult labels_from(UnionFind& uf, std::int32_t width, std::int32_t height) {
  SegmentationResult seg;
  seg.width = width;
  seg.height = height;
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  seg.labels.resize(n);
  std::vector<std::uint32_t> label_of_root(n, 0xFFFFFFFFu);
  std::uint32_t next = 0;
  for (std::size_t p = 0; p < n; ++p) {
    auto& l = label_of_root[uf.find(static_cast<std::uint32_t>(p))];
    if (l == 0xFFFFFFFFu) l = next++;
    seg.labels[p] = l;
  }
  seg.clusters = next;
  return seg;
}

}  // namespace

Dendrogram Dendrogram::build(const FingerprintMap& fp, std::size_t stop_at) {
  const std::size_t n = fp.pixel_count();
  if (n == 0) throw std::invalid_argument("empty fingerprint map");
  if (stop_at < 1 || stop_at > n) throw std::invalid_argument("cluster count out of range");
  const std::size_t dim = fp.dim;
  const auto W = static_cast<std::size_t>(fp.width);
  const auto H = static_cast<std::size_t>(fp.height);

  Dendrogram d;
  d.width_ = fp.width;
  d.height_ = fp.height;
  d.leaves_ = n;

  std::vector<double> mean = fp.values;
  std::vector<std::uint32_t> size(n, 1);
  std::vector<std::uint32_t> version(n, 0);
  std::vector<std::uint8_t> alive(n, 1);
  std::vector<std::uint64_t> rep(n);
  for (std::size_t p = 0; p < n; ++p) rep[p] = (p % W) * H + (p / W);  // (x, y) lexicographic
  std::vector<std::vector<std::uint32_t>> nbrs(n);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t x = p % W;
    const std::size_t y = p / W;
    if (y > 0) nbrs[p].push_back(static_cast<std::uint32_t>(p - W));
    if (x > 0) nbrs[p].push_back(static_cast<std::uint32_t>(p - 1));
    if (x + 1 < W) nbrs[p].push_back(static_cast<std::uint32_t>(p + 1));
    if (y + 1 < H) nbrs[p].push_back(static_cast<std::uint32_t>(p + W));
  }

  auto ward = [&](std::uint32_t a, std::uint32_t b) {
    const double* ma = mean.data() + static_cast<std::size_t>(a) * dim;
    const double* mb = mean.data() + static_cast<std::size_t>(b) * dim;
    double sq = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double diff = ma[k] - mb[k];
      sq += diff * diff;
    }
    const double na = size[a];
    const double nb = size[b];
    return na * nb / (na + nb) * sq;
  };
  std::priority_queue<Candidate, std::vector<Candidate>, CandidateAfter> queue;
  auto push = [&](std::uint32_t a, std::uint32_t b) {
    queue.push({ward(a, b), std::min(rep[a], rep[b]), std::max(rep[a], rep[b]), a, b, version[a], version[b]});
  };
  for (std::size_t p = 0; p < n; ++p)
    for (const auto q : nbrs[p])
      if (q > p) push(static_cast<std::uint32_t>(p), q);

  std::size_t clusters = n;
  std::vector<std::uint32_t> merged_nbrs;
  while (clusters > stop_at && !queue.empty()) {
    const Candidate c = queue.top();
    queue.pop();
    if (!alive[c.a] || !alive[c.b] || version[c.a] != c.version_a || version[c.b] != c.version_b) continue;

    // The survivor keeps the smaller representative.
    const std::uint32_t s = rep[c.a] < rep[c.b] ? c.a : c.b;
    const std::uint32_t t = s == c.a ? c.b : c.a;
    d.merges_.push_back({s, t, c.cost});

    const double ns = size[s];
    const double nt = size[t];
    double* ms = mean.data() + static_cast<std::size_t>(s) * dim;
    const double* mt = mean.data() + static_cast<std::size_t>(t) * dim;
    for (std::size_t k = 0; k < dim; ++k) ms[k] = (ns * ms[k] + nt * mt[k]) / (ns + nt);
    size[s] += size[t];
    alive[t] = 0;
    ++version[s];
    ++version[t];

    merged_nbrs.clear();
    std::set_union(nbrs[s].begin(), nbrs[s].end(), nbrs[t].begin(), nbrs[t].end(),
                   std::back_inserter(merged_nbrs));
    std::erase_if(merged_nbrs, [&](std::uint32_t v) { return v == s || v == t; });
    for (const auto v : nbrs[t]) {
      if (v == s) continue;
      auto& list = nbrs[v];
      std::erase(list, t);
      const auto it = std::lower_bound(list.begin(), list.end(), s);
      if (it == list.end() || *it != s) list.insert(it, s);
    }
    nbrs[s].swap(merged_nbrs);
    std::vector<std::uint32_t>().swap(nbrs[t]);
    for (const auto v : nbrs[s]) push(s, v);
    --clusters;
  }
  return d;
}

SegmentationResult Dendrogram::cut(std::size_t clusters) const {
  const std::size_t c[] = {clusters};
  return std::move(cuts(c).front());
}

std::vector<SegmentationResult> Dendrogram::cuts(std::span<const std::size_t> clusters) const {
  for (const auto c : clusters)
    if (c < min_clusters() || c > leaves_) throw std::invalid_argument("cluster count outside dendrogram range");
  // Process in descending C, i.e. ascending number of merges.
  std::vector<std::size_t> order(clusters.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return clusters[i] > clusters[j]; });
  std::vector<SegmentationResult> out(clusters.size());
  UnionFind uf(leaves_);
  std::size_t applied = 0;
  for (const auto i : order) {
    const std::size_t need = leaves_ - clusters[i];
    for (; applied < need; ++applied) uf.unite(merges_[applied].a, merges_[applied].b);
    out[i] = labels_from(uf, width_, height_);
  }
  return out;
}

SegmentationResult agglomerate(const FingerprintMap& fp, std::size_t clusters) {
  if (clusters < 1 || clusters > fp.pixel_count())
    throw std::invalid_argument("cluster count must lie in [1, " + std::to_string(fp.pixel_count()) + "]");
  return Dendrogram::build(fp, clusters).cut(clusters);
}

double within_cluster_ss(const FingerprintMap& fp, std::span<const std::uint32_t> labels) {
  const std::size_t k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<double> sum(k * fp.dim, 0.0);
  std::vector<double> count(k, 0.0);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const auto v = fp.at(p);
    for (std::size_t d = 0; d < fp.dim; ++d) sum[labels[p] * fp.dim + d] += v[d];
    count[labels[p]] += 1.0;
  }
  double ss = 0.0;
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const auto v = fp.at(p);
    for (std::size_t d = 0; d < fp.dim; ++d) {
      const double diff = v[d] - sum[labels[p] * fp.dim + d] / count[labels[p]];
      ss += diff * diff;
    }
  }
  return ss;
}

double adjusted_rand_index(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                           std::span<const std::uint8_t> mask) {
  if (a.size() != b.size()) throw std::invalid_argument("labelings differ in length");
  if (!mask.empty() && mask.size() != a.size()) throw std::invalid_argument("mask length mismatch");
  std::map<std::pair<std::int64_t, std::int64_t>, std::uint64_t> joint;
  std::map<std::int64_t, std::uint64_t> rows, cols;
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    ++joint[{a[i], b[i]}];
    ++rows[a[i]];
    ++cols[b[i]];
    ++n;
  }
  if (n == 0) throw std::invalid_argument("ARI over an empty mask");
  auto comb2 = [](std::uint64_t m) { return static_cast<double>(m * (m - (m > 0 ? 1 : 0)) / 2); };
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [k, c] : joint) index += comb2(c);
  for (const auto& [k, c] : rows) sum_a += comb2(c);
  for (const auto& [k, c] : cols) sum_b += comb2(c);
  const double total = comb2(n);
  const double expected = total > 0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

double segmentation_ari(const SegmentationResult& seg, const AtlasLabels& atlas) {
  if (atlas.labels.size() != seg.labels.size()) throw std::invalid_argument("atlas and segmentation sizes differ");
  std::vector<std::int64_t> truth(seg.labels.size(), 0);
  std::vector<std::int64_t> pred(seg.labels.size());
  std::vector<std::uint8_t> mask(seg.labels.size(), 0);
  for (std::size_t p = 0; p < seg.labels.size(); ++p) {
    pred[p] = seg.labels[p];
    if (atlas.labels[p]) {
      truth[p] = *atlas.labels[p];
      mask[p] = 1;
    }
  }
  return adjusted_rand_index(truth, pred, mask);
}

ClusterSearch search_cluster_count(const FingerprintMap& fp, const AtlasLabels& atlas,
                                   std::span<const std::size_t> candidates) {
  if (candidates.empty()) throw std::invalid_argument("no cluster-count candidates");
  std::vector<std::size_t> cs(candidates.begin(), candidates.end());
  std::sort(cs.begin(), cs.end());
  cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
  if (cs.front() < 1 || cs.back() > fp.pixel_count()) throw std::invalid_argument("cluster count out of range");
  return search_cluster_count(Dendrogram::build(fp, cs.front()), atlas, cs);
}

ClusterSearch search_cluster_count(const Dendrogram& dendrogram, const AtlasLabels& atlas,
                                   std::span<const std::size_t> candidates) {
  if (candidates.empty()) throw std::invalid_argument("no cluster-count candidates");
  std::vector<std::size_t> cs(candidates.begin(), candidates.end());
  std::sort(cs.begin(), cs.end());
  cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
  const auto segs = dendrogram.cuts(cs);
  ClusterSearch out;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const double ari = segmentation_ari(segs[i], atlas);
    out.curve.emplace_back(cs[i], ari);
    if (i == 0 || ari > out.best_ari) {
      out.best_ari = ari;
      out.best_clusters = cs[i];
    }
  }
  return out;
}

std::vector<std::size_t> geometric_candidates(std::size_t lo, std::size_t hi, std::size_t steps) {
  if (lo < 1 || hi < lo) throw std::invalid_argument("bad candidate range");
  std::vector<std::size_t> out;
  if (steps < 2 || lo == hi) return {lo};
  const double ratio = std::pow(static_cast<double>(hi) / static_cast<double>(lo), 1.0 / static_cast<double>(steps - 1));
  double v = static_cast<double>(lo);
  for (std::size_t i = 0; i < steps; ++i, v *= ratio) out.push_back(std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(v)), lo, hi));
  out.back() = hi;
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::size_t> local_candidates(std::size_t center, std::size_t radius, std::size_t max) {
  std::vector<std::size_t> out;
  const std::size_t lo = center > radius ? center - radius : 1;
  for (std::size_t c = std::max<std::size_t>(lo, 1); c <= std::min(center + radius, max); ++c) out.push_back(c);
  return out;
}

bool clusters_connected(const SegmentationResult& seg) {
  const auto W = static_cast<std::size_t>(seg.width);
  const auto H = static_cast<std::size_t>(seg.height);
  std::vector<std::uint8_t> seen(seg.labels.size(), 0);
  std::vector<std::uint8_t> label_done(seg.clusters, 0);
  std::vector<std::size_t> stack;
  for (std::size_t p = 0; p < seg.labels.size(); ++p) {
    if (seen[p]) continue;
    const auto l = seg.labels[p];
    if (label_done[l]) return false;  // second component of the same label
    label_done[l] = 1;
    stack.push_back(p);
    seen[p] = 1;
    while (!stack.empty()) {
      const auto q = stack.back();
      stack.pop_back();
      const std::size_t x = q % W, y = q / W;
      const std::size_t cand[4] = {y > 0 ? q - W : q, x > 0 ? q - 1 : q, x + 1 < W ? q + 1 : q, y + 1 < H ? q + W : q};
      for (const auto r : cand)
        if (!seen[r] && seg.labels[r] == l) {
          seen[r] = 1;
          stack.push_back(r);
        }
    }
  }
  return true;
}

void write_segmentation_csv(const SegmentationResult& seg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "x,y,cluster\n";
  for (std::int32_t y = 0; y < seg.height; ++y)
    for (std::int32_t x = 0; x < seg.width; ++x)
      out << x << ',' << y << ',' << seg.labels[static_cast<std::size_t>(y) * seg.width + x] << '\n';
}

void write_ari_curve(const ClusterSearch& search, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "c,ari\n";
  out.precision(17);
  for (const auto& [c, ari] : search.curve) out << c << ',' << ari << '\n';
}

void write_label_pgm(const SegmentationResult& seg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << seg.width << ' ' << seg.height << "\n255\n";
  std::string row(static_cast<std::size_t>(seg.width), '\0');
  for (std::int32_t y = 0; y < seg.height; ++y) {
    for (std::int32_t x = 0; x < seg.width; ++x) {
      const auto l = seg.labels[static_cast<std::size_t>(y) * seg.width + x];
      // Multiplicative hash so neighboring labels get distinct shades.
      row[static_cast<std::size_t>(x)] = static_cast<char>((l * 2654435761u) >> 24);
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

}  // namespace collab
