#include "collab/canvas_state.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>

namespace collab {

namespace {
std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  const std::int64_t q = a / b;
  return (a % b != 0 && (a < 0) != (b < 0)) ? q - 1 : q;
}
constexpr std::int64_t kHourMs = 3600 * 1000;
}  // namespace

CanvasGrid::CanvasGrid(std::int32_t width, std::int32_t height)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("canvas dimensions must be positive");
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  last_user_.assign(n, kNoUser);
  last_time_.assign(n, 0);
  counts_.assign(n, 0);
  unused_ = n;
}

void CanvasGrid::apply(const PaintEvent& e) {
  if (!in_bounds(e.x, e.y))
    throw std::out_of_range("event at (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                            ") outside " + std::to_string(width_) + "x" + std::to_string(height_));
  const auto i = index(e.x, e.y);
  if (counts_[i]++ == 0) --unused_;
  last_user_[i] = e.user;
  last_time_[i] = e.timestamp;
  ++applied_;
}

NeighborContext CanvasGrid::neighbor_context(std::int32_t x, std::int32_t y) const {
  if (!in_bounds(x, y)) throw std::out_of_range("context position outside canvas");
  NeighborContext ctx;
  const std::int32_t y_lo = std::max(y - 1, 0);
  const std::int32_t y_hi = std::min(y + 1, height_ - 1);
  const std::int32_t x_lo = std::max(x - 1, 0);
  const std::int32_t x_hi = std::min(x + 1, width_ - 1);
  for (std::int32_t ny = y_lo; ny <= y_hi; ++ny) {
    const UserId* row = last_user_.data() + static_cast<std::size_t>(ny) * width_;
    for (std::int32_t nx = x_lo; nx <= x_hi; ++nx) {
      if (nx == x && ny == y) continue;
      const UserId u = row[nx];
      if (u != kNoUser) ctx.push(u);
    }
  }
  return ctx;
}

std::optional<UserId> CanvasGrid::last_updater(std::int32_t x, std::int32_t y) const {
  const UserId u = last_user_[index(x, y)];
  if (u == kNoUser) return std::nullopt;
  return u;
}

std::optional<std::int64_t> CanvasGrid::last_update_time(std::int32_t x, std::int32_t y) const {
  const auto i = index(x, y);
  if (counts_[i] == 0) return std::nullopt;
  return last_time_[i];
}

double CanvasGrid::unused_space_fraction() const {
  return static_cast<double>(unused_) / static_cast<double>(counts_.size());
}

CanvasGrid replay(const EventStream& stream) {
  CanvasGrid grid(stream.width, stream.height);
  for (const auto& e : stream.events) grid.apply(e);
  return grid;
}

ActionContexts ActionContexts::build(const EventStream& stream, ContextOptions options) {
  ActionContexts out;
  out.offsets_.reserve(stream.size() + 1);
  out.users_.reserve(stream.size() * 6);
  out.offsets_.push_back(0);
  CanvasGrid grid(stream.width, stream.height);
  for (const auto& e : stream.events) {
    const NeighborContext ctx = grid.neighbor_context(e.x, e.y);
    const auto row_begin = out.users_.size();
    for (const UserId u : ctx) {
      if (!options.include_self && u == e.user) continue;
      if (options.dedup &&
          std::find(out.users_.begin() + static_cast<std::ptrdiff_t>(row_begin), out.users_.end(), u) !=
              out.users_.end())
        continue;
      out.users_.push_back(u);
    }
    out.offsets_.push_back(out.users_.size());
    grid.apply(e);
  }
  return out;
}

std::vector<DistancePoint> subsequent_click_distances(const EventStream& stream,
                                                      std::int64_t bucket_ms) {
  if (bucket_ms <= 0) throw std::invalid_argument("bucket must be positive");
  std::vector<std::int64_t> last_pos(stream.users.size(), -1);
  std::map<std::int64_t, std::pair<double, std::uint64_t>> acc;
  for (const auto& e : stream.events) {
    auto& prev = last_pos[e.user];
    if (prev >= 0) {
      const auto px = static_cast<double>(prev % stream.width);
      const auto py = static_cast<double>(prev / stream.width);
      const double d = std::hypot(e.x - px, e.y - py);
      auto& slot = acc[floor_div(e.timestamp, bucket_ms)];
      slot.first += d;
      ++slot.second;
    }
    prev = static_cast<std::int64_t>(e.y) * stream.width + e.x;
  }
  std::vector<DistancePoint> out;
  out.reserve(acc.size());
  for (const auto& [bucket, s] : acc)
    out.push_back({bucket, s.first / static_cast<double>(s.second), s.second});
  return out;
}

ActivityHistograms activity_histograms(const EventStream& stream) {
  ActivityHistograms h;
  h.user_clicks.assign(stream.users.size(), 0);
  h.pixel_updates.assign(stream.pixel_count(), 0);
  std::unordered_set<UserId> hour_users;
  for (const auto& e : stream.events) {
    ++h.user_clicks[e.user];
    ++h.pixel_updates[static_cast<std::size_t>(e.y) * stream.width + e.x];
    const std::int64_t hour = floor_div(e.timestamp, kHourMs);
    if (h.hourly.empty() || h.hourly.back().hour != hour) {
      if (!h.hourly.empty()) h.hourly.back().unique_users = hour_users.size();
      hour_users.clear();
      h.hourly.push_back({hour, 0, 0});
    }
    ++h.hourly.back().clicks;
    hour_users.insert(e.user);
  }
  if (!h.hourly.empty()) h.hourly.back().unique_users = hour_users.size();
  return h;
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> count_distribution(
    std::span<const std::uint64_t> counts) {
  std::map<std::uint64_t, std::uint64_t> dist;
  for (const auto c : counts) ++dist[c];
  return {dist.begin(), dist.end()};
}

std::vector<UnusedPoint> unused_space_series(const EventStream& stream, std::int64_t bucket_ms) {
  if (bucket_ms <= 0) throw std::invalid_argument("bucket must be positive");
  std::vector<UnusedPoint> out;
  CanvasGrid grid(stream.width, stream.height);
  for (const auto& e : stream.events) {
    const std::int64_t bucket = floor_div(e.timestamp, bucket_ms);
    if (!out.empty() && out.back().bucket != bucket) out.back().unused_fraction = grid.unused_space_fraction();
    if (out.empty() || out.back().bucket != bucket) out.push_back({bucket, 1.0});
    grid.apply(e);
  }
  if (!out.empty()) out.back().unused_fraction = grid.unused_space_fraction();
  return out;
}

Partition Partition::uniform_tiles(std::int32_t width, std::int32_t height, std::int32_t tile_w,
                                   std::int32_t tile_h) {
  if (width <= 0 || height <= 0 || tile_w <= 0 || tile_h <= 0)
    throw std::invalid_argument("tile and canvas sizes must be positive");
  Partition p;
  const std::int32_t cols = (width + tile_w - 1) / tile_w;
  const std::int32_t rows = (height + tile_h - 1) / tile_h;
  p.region_.resize(static_cast<std::size_t>(width) * height);
  for (std::int32_t y = 0; y < height; ++y)
    for (std::int32_t x = 0; x < width; ++x)
      p.region_[static_cast<std::size_t>(y) * width + x] =
          static_cast<std::uint32_t>((y / tile_h) * cols + x / tile_w);
  for (std::int32_t r = 0; r < rows * cols; ++r) p.names_.push_back(std::to_string(r));
  return p;
}

Partition Partition::from_atlas(const AtlasLabels& atlas) {
  Partition p;
  std::map<std::int64_t, std::uint32_t> ids;
  for (const auto& l : atlas.labels)
    if (l) ids.emplace(*l, 0);
  std::uint32_t next = 0;
  for (auto& [label, id] : ids) {
    id = next++;
    p.names_.push_back(std::to_string(label));
  }
  const std::uint32_t sink = next;
  bool need_sink = false;
  p.region_.resize(atlas.labels.size());
  for (std::size_t i = 0; i < atlas.labels.size(); ++i) {
    if (atlas.labels[i]) {
      p.region_[i] = ids.at(*atlas.labels[i]);
    } else {
      p.region_[i] = sink;
      need_sink = true;
    }
  }
  if (need_sink) p.names_.emplace_back("unannotated");
  return p;
}

std::vector<std::uint64_t> heatmap(const EventStream& stream, const Partition& partition) {
  if (partition.pixel_count() != stream.pixel_count())
    throw std::invalid_argument("partition does not cover the canvas");
  std::vector<std::uint64_t> counts(partition.region_count(), 0);
  for (const auto& e : stream.events)
    ++counts[partition.region_of(static_cast<std::size_t>(e.y) * stream.width + e.x)];
  return counts;
}

void write_stats(const EventStream& stream, const Partition& partition, std::int64_t bucket_ms,
                 const std::filesystem::path& dir) {
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };
  const auto hist = activity_histograms(stream);
  {
    auto out = open("user_hist.csv");
    out << "clicks,users\n";
    for (const auto& [v, n] : count_distribution(hist.user_clicks)) out << v << ',' << n << '\n';
  }
  {
    auto out = open("pixel_hist.csv");
    out << "updates,pixels\n";
    for (const auto& [v, n] : count_distribution(hist.pixel_updates)) out << v << ',' << n << '\n';
  }
  {
    auto out = open("hourly.csv");
    out << "hour,clicks,unique_users\n";
    for (const auto& h : hist.hourly) out << h.hour << ',' << h.clicks << ',' << h.unique_users << '\n';
  }
  {
    auto out = open("unused.csv");
    out << "bucket,unused_fraction\n";
    out.precision(17);
    for (const auto& p : unused_space_series(stream, bucket_ms))
      out << p.bucket << ',' << p.unused_fraction << '\n';
  }
  {
    auto out = open("distance.csv");
    out << "bucket,mean_distance,pairs\n";
    out.precision(17);
    for (const auto& p : subsequent_click_distances(stream, bucket_ms))
      out << p.bucket << ',' << p.mean_distance << ',' << p.pairs << '\n';
  }
  {
    auto out = open("heatmap.csv");
    out << "region,count\n";
    const auto counts = heatmap(stream, partition);
    for (std::size_t r = 0; r < counts.size(); ++r)
      out << partition.region_name(r) << ',' << counts[r] << '\n';
  }
}

}  // namespace collab
