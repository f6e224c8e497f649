#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace collab {

/// Dense index of a user inside an EventStream's user table.
using UserId = std::uint32_t;
inline constexpr UserId kNoUser = 0xFFFFFFFFu;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct PaintEvent {
  std::int64_t timestamp = 0;  // milliseconds since epoch
  UserId user = kNoUser;
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t color = 0;

  friend bool operator==(const PaintEvent&, const PaintEvent&) = default;
};

/// Interns opaque user identifiers to dense ids in first-seen order.
class UserTable {
 public:
  UserId intern(std::string_view name);
  std::optional<UserId> find(std::string_view name) const;
  const std::string& name(UserId id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  friend bool operator==(const UserTable& a, const UserTable& b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, UserId> index_;
};

/// Chronologically ordered paint events on a width x height canvas.
struct EventStream {
  std::int32_t width = 0;
  std::int32_t height = 0;
  UserTable users;
  std::vector<PaintEvent> events;

  std::size_t size() const { return events.size(); }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

/// Per-pixel artwork labels; std::nullopt marks unannotated pixels.
struct AtlasLabels {
  std::int32_t width = 0;
  std::int32_t height = 0;
  std::vector<std::optional<std::int64_t>> labels;  // row-major, y * width + x

  std::size_t annotated_count() const;
  double annotated_fraction() const;
  std::size_t distinct_labels() const;
};

struct ParseOptions {
  /// Skip (and count) out-of-bounds rows instead of failing.
  bool lenient = false;
};

struct ParseResult {
  EventStream stream;
  std::size_t rows = 0;     // data rows read
  std::size_t skipped = 0;  // out-of-bounds rows dropped in lenient mode
};

/// Reads a `ts,user,x,y,color` CSV. When width or height is 0 the canvas
/// size is inferred from the largest coordinates seen.
ParseResult parse_events(const std::filesystem::path& path, std::int32_t width,
                         std::int32_t height, ParseOptions options = {});
ParseResult parse_events_text(std::string_view text, std::int32_t width,
                              std::int32_t height, ParseOptions options = {});

void write_events(const EventStream& stream, const std::filesystem::path& path);
std::string format_events(const EventStream& stream);

/// Reads an `x,y,label` CSV. Duplicate coordinates are rejected.
AtlasLabels load_atlas(const std::filesystem::path& path, std::int32_t width,
                       std::int32_t height);
AtlasLabels parse_atlas_text(std::string_view text, std::int32_t width,
                             std::int32_t height);
void write_atlas(const AtlasLabels& atlas, const std::filesystem::path& path);

struct SynthConfig {
  std::uint32_t num_users = 500;
  std::uint32_t num_groups = 5;
  std::int32_t width = 100;
  std::int32_t height = 100;
  std::uint64_t num_events = 200000;
  double noise = 0.1;
  std::uint64_t seed = 7;
};

struct Rect {
  std::int32_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0,x1) x [y0,y1)
  std::int32_t width() const { return x1 - x0; }
  std::int32_t height() const { return y1 - y0; }
  bool contains(std::int32_t x, std::int32_t y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
};

/// Partitions the canvas into `groups` rectangles: ceil(sqrt(groups)) columns
/// per row, the last row holding the remainder.
std::vector<Rect> group_territories(std::int32_t width, std::int32_t height,
                                    std::uint32_t groups);

struct SyntheticData {
  EventStream stream;
  AtlasLabels atlas;
  std::vector<std::uint32_t> group_of_user;  // indexed by UserId
  std::vector<Rect> territories;
};

SyntheticData generate_synthetic(const SynthConfig& cfg);

/// `user,group` rows in user-id order.
void write_groups(const UserTable& users, std::span<const std::int64_t> groups,
                  const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

}  // namespace collab
