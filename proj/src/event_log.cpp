#include "collab/event_log.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "collab/rng.hpp"

namespace collab {

namespace {

// Splits `line` on commas into exactly `n` fields; returns false otherwise.
bool split_fields(std::string_view line, std::span<std::string_view> out) {
  std::size_t field = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      if (field >= out.size()) return false;
      out[field++] = line.substr(start, i - start);
      start = i + 1;
    }
  }
  return field == out.size();
}

template <typename Int>
bool parse_int(std::string_view s, Int& value) {
  if (s.empty()) return false;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last;
}

// Iterates over lines, stripping a trailing '\r'.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}
  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    const auto end = text_.find('\n', pos_);
    const auto stop = end == std::string_view::npos ? text_.size() : end;
    line = text_.substr(pos_, stop - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = stop + 1;
    ++number_;
    return true;
  }
  std::size_t number() const { return number_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t number_ = 0;
};

std::string line_error(std::size_t line, std::string_view what) {
  return "line " + std::to_string(line) + ": " + std::string(what);
}

}  // namespace

UserId UserTable::intern(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<UserId>(names_.size());
  names_.emplace_back(name);
  index_.emplace(names_.back(), id);
  return id;
}

std::optional<UserId> UserTable::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t AtlasLabels::annotated_count() const {
  return static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); }));
}

double AtlasLabels::annotated_fraction() const {
  if (labels.empty()) return 0.0;
  return static_cast<double>(annotated_count()) / static_cast<double>(labels.size());
}

std::size_t AtlasLabels::distinct_labels() const {
  std::set<std::int64_t> seen;
  for (const auto& l : labels)
    if (l) seen.insert(*l);
  return seen.size();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

ParseResult parse_events_text(std::string_view text, std::int32_t width,
                              std::int32_t height, ParseOptions options) {
  const bool infer = width <= 0 || height <= 0;
  ParseResult result;
  auto& stream = result.stream;
  LineReader lines(text);
  std::string_view line;
  if (!lines.next(line)) throw ParseError("empty file: missing header", 1);
  if (line != "ts,user,x,y,color")
    throw ParseError(line_error(1, "expected header 'ts,user,x,y,color'"), 1);

  std::int32_t max_x = -1;
  std::int32_t max_y = -1;
  std::array<std::string_view, 5> fields;
  while (lines.next(line)) {
    if (line.empty()) continue;
    const auto n = lines.number();
    if (!split_fields(line, fields)) throw ParseError(line_error(n, "expected 5 fields"), n);
    PaintEvent e;
    if (!parse_int(fields[0], e.timestamp)) throw ParseError(line_error(n, "bad ts"), n);
    if (fields[1].empty()) throw ParseError(line_error(n, "empty user"), n);
    if (!parse_int(fields[2], e.x)) throw ParseError(line_error(n, "bad x"), n);
    if (!parse_int(fields[3], e.y)) throw ParseError(line_error(n, "bad y"), n);
    if (!parse_int(fields[4], e.color) || e.color < 0)
      throw ParseError(line_error(n, "bad color"), n);
    ++result.rows;
    const bool in_bounds =
        e.x >= 0 && e.y >= 0 && (infer || (e.x < width && e.y < height));
    if (!in_bounds) {
      if (options.lenient) {
        ++result.skipped;
        continue;
      }
      throw ParseError(line_error(n, "coordinate out of bounds"), n);
    }
    max_x = std::max(max_x, e.x);
    max_y = std::max(max_y, e.y);
    e.user = stream.users.intern(fields[1]);
    stream.events.push_back(e);
  }
  stream.width = infer ? max_x + 1 : width;
  stream.height = infer ? max_y + 1 : height;
  std::stable_sort(stream.events.begin(), stream.events.end(),
                   [](const PaintEvent& a, const PaintEvent& b) { return a.timestamp < b.timestamp; });
  return result;
}

ParseResult parse_events(const std::filesystem::path& path, std::int32_t width,
                         std::int32_t height, ParseOptions options) {
  return parse_events_text(read_file(path), width, height, options);
}

std::string format_events(const EventStream& stream) {
  std::string out = "ts,user,x,y,color\n";
  out.reserve(out.size() + stream.events.size() * 32);
  for (const auto& e : stream.events) {
    out += std::to_string(e.timestamp);
    out += ',';
    out += stream.users.name(e.user);
    out += ',';
    out += std::to_string(e.x);
    out += ',';
    out += std::to_string(e.y);
    out += ',';
    out += std::to_string(e.color);
    out += '\n';
  }
  return out;
}

void write_events(const EventStream& stream, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_events(stream);
}

AtlasLabels parse_atlas_text(std::string_view text, std::int32_t width, std::int32_t height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("atlas needs canvas dimensions");
  AtlasLabels atlas;
  atlas.width = width;
  atlas.height = height;
  atlas.labels.assign(static_cast<std::size_t>(width) * height, std::nullopt);
  LineReader lines(text);
  std::string_view line;
  if (!lines.next(line) || line != "x,y,label")
    throw ParseError(line_error(1, "expected header 'x,y,label'"), 1);
  std::array<std::string_view, 3> fields;
  while (lines.next(line)) {
    if (line.empty()) continue;
    const auto n = lines.number();
    std::int32_t x = 0, y = 0;
    std::int64_t label = 0;
    if (!split_fields(line, fields) || !parse_int(fields[0], x) || !parse_int(fields[1], y) ||
        !parse_int(fields[2], label))
      throw ParseError(line_error(n, "malformed atlas row"), n);
    if (x < 0 || y < 0 || x >= width || y >= height)
      throw ParseError(line_error(n, "coordinate out of bounds"), n);
    auto& slot = atlas.labels[static_cast<std::size_t>(y) * width + x];
    if (slot) throw ParseError(line_error(n, "overlapping annotation"), n);
    slot = label;
  }
  return atlas;
}

AtlasLabels load_atlas(const std::filesystem::path& path, std::int32_t width,
                       std::int32_t height) {
  return parse_atlas_text(read_file(path), width, height);
}

void write_atlas(const AtlasLabels& atlas, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "x,y,label\n";
  for (std::int32_t y = 0; y < atlas.height; ++y)
    for (std::int32_t x = 0; x < atlas.width; ++x)
      if (const auto& l = atlas.labels[static_cast<std::size_t>(y) * atlas.width + x])
        out << x << ',' << y << ',' << *l << '\n';
}

std::vector<Rect> group_territories(std::int32_t width, std::int32_t height,
                                    std::uint32_t groups) {
  if (groups == 0) throw std::invalid_argument("num_groups must be >= 1");
  const auto cols = static_cast<std::uint32_t>(std::ceil(std::sqrt(static_cast<double>(groups))));
  const std::uint32_t rows = (groups + cols - 1) / cols;
  if (rows > static_cast<std::uint32_t>(height) || cols > static_cast<std::uint32_t>(width))
    throw std::invalid_argument("num_groups " + std::to_string(groups) +
                                " cannot tile a " + std::to_string(width) + "x" +
                                std::to_string(height) + " canvas");
  std::vector<Rect> rects;
  rects.reserve(groups);
  for (std::uint32_t r = 0; r < rows; ++r) {
    const std::uint32_t in_row = std::min(cols, groups - r * cols);
    const auto y0 = static_cast<std::int32_t>(static_cast<std::int64_t>(height) * r / rows);
    const auto y1 = static_cast<std::int32_t>(static_cast<std::int64_t>(height) * (r + 1) / rows);
    for (std::uint32_t c = 0; c < in_row; ++c) {
      Rect rect;
      rect.y0 = y0;
      rect.y1 = y1;
      rect.x0 = static_cast<std::int32_t>(static_cast<std::int64_t>(width) * c / in_row);
      rect.x1 = static_cast<std::int32_t>(static_cast<std::int64_t>(width) * (c + 1) / in_row);
      rects.push_back(rect);
    }
  }
  return rects;
}

SyntheticData generate_synthetic(const SynthConfig& cfg) {
  if (cfg.num_users == 0) throw std::invalid_argument("num_users must be >= 1");
  if (cfg.num_groups > cfg.num_users)
    throw std::invalid_argument("num_groups must not exceed num_users");
  if (cfg.width <= 0 || cfg.height <= 0) throw std::invalid_argument("canvas must be non-empty");
  if (!(cfg.noise >= 0.0 && cfg.noise <= 1.0))
    throw std::invalid_argument("noise must lie in [0, 1]");

  SyntheticData data;
  data.territories = group_territories(cfg.width, cfg.height, cfg.num_groups);
  Rng rng(cfg.seed);

  auto& stream = data.stream;
  stream.width = cfg.width;
  stream.height = cfg.height;
  data.group_of_user.resize(cfg.num_users);
  for (std::uint32_t u = 0; u < cfg.num_users; ++u) {
    stream.users.intern("u" + std::to_string(u));
    data.group_of_user[u] = static_cast<std::uint32_t>(rng.below(cfg.num_groups));
  }

  // 100 ms spacing keeps timestamps strictly increasing at any event count.
  constexpr std::int64_t kStart = 1490979600000;  // 2017-03-31T17:00:00Z
  constexpr std::int64_t kStep = 100;
  stream.events.reserve(cfg.num_events);
  for (std::uint64_t i = 0; i < cfg.num_events; ++i) {
    PaintEvent e;
    e.timestamp = kStart + static_cast<std::int64_t>(i) * kStep;
    e.user = static_cast<UserId>(rng.below(cfg.num_users));
    if (rng.bernoulli(cfg.noise)) {
      e.x = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(cfg.width)));
      e.y = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(cfg.height)));
    } else {
      const Rect& r = data.territories[data.group_of_user[e.user]];
      e.x = r.x0 + static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(r.width())));
      e.y = r.y0 + static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(r.height())));
    }
    e.color = static_cast<std::int32_t>(rng.below(16));
    stream.events.push_back(e);
  }

  data.atlas.width = cfg.width;
  data.atlas.height = cfg.height;
  data.atlas.labels.assign(stream.pixel_count(), std::nullopt);
  for (std::size_t g = 0; g < data.territories.size(); ++g) {
    const Rect& r = data.territories[g];
    for (std::int32_t y = r.y0; y < r.y1; ++y)
      for (std::int32_t x = r.x0; x < r.x1; ++x)
        data.atlas.labels[static_cast<std::size_t>(y) * cfg.width + x] = static_cast<std::int64_t>(g);
  }
  return data;
}

void write_groups(const UserTable& users, std::span<const std::int64_t> groups,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "user,group\n";
  for (std::size_t u = 0; u < groups.size(); ++u) out << users.name(static_cast<UserId>(u)) << ',' << groups[u] << '\n';
}

}  // namespace collab
