#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "collab/event_log.hpp"

namespace collab {

/// Last updaters of the Moore-adjacent pixels of a position, as a multiset.
class NeighborContext {
 public:
  static constexpr std::size_t kCapacity = 8;

  void push(UserId u) { users_[size_++] = u; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  std::span<const UserId> users() const { return {users_.data(), size_}; }
  const UserId* begin() const { return users_.data(); }
  const UserId* end() const { return users_.data() + size_; }

 private:
  std::array<UserId, kCapacity> users_{};
  std::uint8_t size_ = 0;
};

/// Per-pixel replay state: last updater, last update time and update count.
class CanvasGrid {
 public:
  CanvasGrid(std::int32_t width, std::int32_t height);

  std::int32_t width() const { return width_; }
  std::int32_t height() const { return height_; }
  std::size_t pixel_count() const { return counts_.size(); }
  std::size_t index(std::int32_t x, std::int32_t y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }
  bool in_bounds(std::int32_t x, std::int32_t y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  /// Throws std::out_of_range for events outside the canvas.
  void apply(const PaintEvent& e);

  /// Moore neighbors' last updaters, in fixed scan order (row above, same
  /// row, row below; left to right).
  NeighborContext neighbor_context(std::int32_t x, std::int32_t y) const;

  std::optional<UserId> last_updater(std::int32_t x, std::int32_t y) const;
  std::optional<std::int64_t> last_update_time(std::int32_t x, std::int32_t y) const;
  std::uint32_t update_count(std::int32_t x, std::int32_t y) const { return counts_[index(x, y)]; }

  std::span<const UserId> last_updaters() const { return last_user_; }
  std::span<const std::uint32_t> update_counts() const { return counts_; }

  double unused_space_fraction() const;
  std::uint64_t applied_events() const { return applied_; }

 private:
  std::int32_t width_;
  std::int32_t height_;
  std::vector<UserId> last_user_;
  std::vector<std::int64_t> last_time_;
  std::vector<std::uint32_t> counts_;
  std::size_t unused_;
  std::uint64_t applied_ = 0;
};

/// Replays the whole stream into a fresh grid.
CanvasGrid replay(const EventStream& stream);

struct ContextOptions {
  /// Keep the acting user in the context of its own action.
  bool include_self = true;
  /// Collapse repeated contributors to a single occurrence.
  bool dedup = false;
};

/// Neighbor context of every event, captured strictly before that event was
/// applied. Stored in compressed-row form indexed by event position.
class ActionContexts {
 public:
  ActionContexts() = default;
  static ActionContexts build(const EventStream& stream, ContextOptions options = {});

  std::size_t size() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::span<const UserId> operator[](std::size_t event) const {
    return {users_.data() + offsets_[event], users_.data() + offsets_[event + 1]};
  }
  std::size_t total_contributors() const { return users_.size(); }

 private:
  std::vector<std::uint64_t> offsets_;
  std::vector<UserId> users_;
};

// ---------------------------------------------------------------------------
// Activity statistics.

struct DistancePoint {
  std::int64_t bucket = 0;  // floor(ts / bucket_ms)
  double mean_distance = 0.0;
  std::uint64_t pairs = 0;
};

/// Euclidean distance between consecutive clicks of the same user, averaged
/// per time bucket of the later click.
std::vector<DistancePoint> subsequent_click_distances(const EventStream& stream,
                                                      std::int64_t bucket_ms);

struct HourlyActivity {
  std::int64_t hour = 0;  // floor(ts / 3600000), UTC
  std::uint64_t clicks = 0;
  std::uint64_t unique_users = 0;
};

struct ActivityHistograms {
  std::vector<std::uint64_t> user_clicks;    // indexed by UserId
  std::vector<std::uint64_t> pixel_updates;  // row-major per pixel
  std::vector<HourlyActivity> hourly;
};

ActivityHistograms activity_histograms(const EventStream& stream);

/// Histogram of a count vector: value -> number of entries with that value.
std::vector<std::pair<std::uint64_t, std::uint64_t>> count_distribution(
    std::span<const std::uint64_t> counts);

struct UnusedPoint {
  std::int64_t bucket = 0;
  double unused_fraction = 1.0;
};

/// Unused-space fraction at the end of every bucket that contains an event.
std::vector<UnusedPoint> unused_space_series(const EventStream& stream, std::int64_t bucket_ms);

/// Maps every pixel to a region index. Region `region_count() - 1` may be
/// the sink for unannotated pixels when built from an atlas.
class Partition {
 public:
  static Partition uniform_tiles(std::int32_t width, std::int32_t height,
                                 std::int32_t tile_w, std::int32_t tile_h);
  static Partition from_atlas(const AtlasLabels& atlas);

  std::size_t region_count() const { return names_.size(); }
  std::uint32_t region_of(std::size_t pixel) const { return region_[pixel]; }
  /// Printable region key (tile index, artwork label, or "unannotated").
  const std::string& region_name(std::size_t r) const { return names_[r]; }
  std::size_t pixel_count() const { return region_.size(); }

 private:
  std::vector<std::uint32_t> region_;
  std::vector<std::string> names_;
};

std::vector<std::uint64_t> heatmap(const EventStream& stream, const Partition& partition);

/// Writes the per-figure statistics CSVs into `dir`.
void write_stats(const EventStream& stream, const Partition& partition, std::int64_t bucket_ms,
                 const std::filesystem::path& dir);

}  // namespace collab
