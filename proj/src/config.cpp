#include "collab/config.hpp"

#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace collab {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string join_errors(const std::vector<std::string>& errors) {
  std::string out = "invalid configuration";
  for (const auto& e : errors) out += "\n  " + e;
  return out;
}

template <typename T>
bool parse_integer(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, out);
  return r.ec == std::errc() && r.ptr == end;
}

bool parse_real(std::string_view s, double& out) {
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, out);
  return r.ec == std::errc() && r.ptr == end && std::isfinite(out);
}

bool parse_bool(std::string_view s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") {
    out = true;
    return true;
  }
  if (s == "false" || s == "0" || s == "no" || s == "off") {
    out = false;
    return true;
  }
  return false;
}

bool parse_size_list(std::string_view s, std::vector<std::size_t>& out) {
  out.clear();
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto end = s.find(',', pos);
    if (end == std::string_view::npos) end = s.size();
    const auto item = trim(s.substr(pos, end - pos));
    pos = end + 1;
    if (item.empty()) continue;
    const auto dash = item.find('-');
    std::size_t lo = 0, hi = 0;
    if (dash == std::string_view::npos) {
      if (!parse_integer(item, lo)) return false;
      hi = lo;
    } else if (!parse_integer(trim(item.substr(0, dash)), lo) ||
               !parse_integer(trim(item.substr(dash + 1)), hi) || hi < lo) {
      return false;
    }
    for (auto c = lo; c <= hi; ++c) out.push_back(c);
  }
  return true;
}

bool writable_target(const std::filesystem::path& dir, std::string& why) {
  std::error_code ec;
  auto probe = std::filesystem::absolute(dir, ec);
  if (ec) {
    why = ec.message();
    return false;
  }
  while (!std::filesystem::exists(probe, ec)) {
    if (!probe.has_parent_path() || probe.parent_path() == probe) {
      why = "no existing ancestor";
      return false;
    }
    probe = probe.parent_path();
  }
  if (!std::filesystem::is_directory(probe, ec)) {
    why = probe.string() + " is not a directory";
    return false;
  }
  if (::access(probe.c_str(), W_OK) != 0) {
    why = probe.string() + " is not writable";
    return false;
  }
  return true;
}

struct Checker {
  const KeyValues& values;
  std::vector<std::string> errors;

  const std::string* get(std::string_view key) const {
    const auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  }
  void fail(std::string_view key, std::string_view why) {
    errors.push_back(std::string(key) + ": " + std::string(why));
  }

  template <typename T>
  void integer(std::string_view key, T& field, T lo, T hi = std::numeric_limits<T>::max()) {
    const auto* v = get(key);
    if (!v) return;
    T parsed{};
    if (!parse_integer(trim(*v), parsed)) return fail(key, "expected an integer, got '" + *v + "'");
    if (parsed < lo || parsed > hi) {
      std::ostringstream msg;
      msg << "must lie in [" << lo << ", " << hi << "], got " << parsed;
      return fail(key, msg.str());
    }
    field = parsed;
  }

  /// `ok` returns an empty string or the reason the value is rejected.
  void real(std::string_view key, double& field, const std::function<std::string(double)>& ok) {
    const auto* v = get(key);
    if (!v) return;
    double parsed = 0.0;
    if (!parse_real(trim(*v), parsed)) return fail(key, "expected a finite number, got '" + *v + "'");
    if (auto why = ok(parsed); !why.empty()) return fail(key, why);
    field = parsed;
  }

  void boolean(std::string_view key, bool& field) {
    const auto* v = get(key);
    if (!v) return;
    if (!parse_bool(trim(*v), field)) fail(key, "expected true or false, got '" + *v + "'");
  }

  void input_path(std::string_view key, std::filesystem::path& field) {
    const auto* v = get(key);
    if (!v || trim(*v).empty()) return;
    field = std::string(trim(*v));
    std::error_code ec;
    if (!std::filesystem::exists(field, ec)) fail(key, "no such file '" + field.string() + "'");
  }
};

std::string positive(double v) { return v > 0.0 ? "" : "must be > 0"; }
std::string non_negative(double v) { return v >= 0.0 ? "" : "must be >= 0"; }

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error(join_errors(errors)), errors_(std::move(errors)) {}

KeyValues parse_config_text(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("line " + std::to_string(line_no) + ": expected key = value", line_no);
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty key", line_no);
    out[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

KeyValues load_config_file(const std::filesystem::path& path) { return parse_config_text(read_file(path)); }

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "events", "atlas", "model", "communities", "out", "width", "height", "lenient",
      "alpha", "lambda", "k", "epochs", "seed", "include_self", "dedup_context", "init_scale",
      "probe_size", "min_actions", "warmup_fraction", "split_seed", "baselines",
      "adjacency_multiplicity", "ties", "mf_rank", "mf_regularization", "mf_confidence",
      "mf_sweeps", "mf_seed", "lp_max_iter", "lp_seed", "clusters", "candidates", "eps",
      "min_pts", "window", "normalize_embeddings", "project", "project_dims", "tile", "bucket_ms", "synth_users",
      "synth_groups", "synth_events", "synth_seed", "noise",
  };
  return keys;
}

PipelineConfig validate_config(const KeyValues& values) {
  PipelineConfig cfg;
  Checker c{values, {}};
  const auto& keys = config_keys();
  for (const auto& [key, value] : values)
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) c.fail(key, "unknown key");

  c.input_path("events", cfg.events);
  c.input_path("atlas", cfg.atlas);
  c.input_path("model", cfg.model);
  c.input_path("communities", cfg.communities);
  if (const auto* v = c.get("out")) {
    if (trim(*v).empty()) c.fail("out", "must not be empty");
    else cfg.out = std::string(trim(*v));
  }
  if (std::string why; !writable_target(cfg.out, why)) c.fail("out", why);
  c.integer<std::int32_t>("width", cfg.width, 0);
  c.integer<std::int32_t>("height", cfg.height, 0);
  c.boolean("lenient", cfg.lenient);

  auto& t = cfg.train;
  c.real("alpha", t.alpha, positive);
  c.real("lambda", t.lambda, non_negative);
  c.integer<std::size_t>("k", t.dim, 1, 4096);
  c.integer<std::size_t>("epochs", t.epochs, 1);
  c.integer<std::uint64_t>("seed", t.seed, 0);
  c.boolean("include_self", t.include_self);
  c.boolean("dedup_context", t.dedup_context);
  c.real("init_scale", t.init_scale, positive);
  c.integer<std::size_t>("probe_size", t.probe_size, 0);

  c.integer<std::size_t>("min_actions", cfg.split.min_actions, 1);
  c.real("warmup_fraction", cfg.split.warmup_fraction,
         [](double v) -> std::string { return v >= 0.0 && v < 1.0 ? "" : "must lie in [0, 1)"; });
  c.integer<std::uint64_t>("split_seed", cfg.split.seed, 0);

  if (const auto* v = c.get("baselines")) {
    try {
      cfg.baselines = parse_methods(*v);
    } catch (const std::exception& ex) {
      c.fail("baselines", ex.what());
    }
  }
  c.boolean("adjacency_multiplicity", cfg.adjacency_multiplicity);
  if (const auto* v = c.get("ties")) {
    const auto s = trim(*v);
    if (s == "half") cfg.ties = TieRule::kHalf;
    else if (s == "zero") cfg.ties = TieRule::kZero;
    else c.fail("ties", "expected half or zero, got '" + *v + "'");
  }
  c.integer<std::size_t>("mf_rank", cfg.mf.rank, 1, 1024);
  c.real("mf_regularization", cfg.mf.regularization, positive);
  c.real("mf_confidence", cfg.mf.confidence, non_negative);
  c.integer<std::size_t>("mf_sweeps", cfg.mf.sweeps, 1);
  c.integer<std::uint64_t>("mf_seed", cfg.mf.seed, 0);
  c.integer<std::size_t>("lp_max_iter", cfg.label_propagation.max_iter, 1);
  c.integer<std::uint64_t>("lp_seed", cfg.label_propagation.seed, 0);

  c.integer<std::size_t>("clusters", cfg.clusters, 0);
  if (const auto* v = c.get("candidates")) {
    if (!parse_size_list(*v, cfg.candidates)) c.fail("candidates", "expected a list such as 2-8,16,32");
    else if (std::find(cfg.candidates.begin(), cfg.candidates.end(), 0u) != cfg.candidates.end())
      c.fail("candidates", "cluster counts must be >= 1");
  }
  c.real("eps", cfg.eps, non_negative);
  c.integer<std::size_t>("min_pts", cfg.min_pts, 1);
  c.integer<std::size_t>("window", cfg.window, 1);
  c.boolean("normalize_embeddings", cfg.normalize_embeddings);
  c.boolean("project", cfg.project);
  c.integer<std::size_t>("project_dims", cfg.project_dims, 0, 4096);
  c.integer<std::int32_t>("tile", cfg.tile, 1);
  c.integer<std::int64_t>("bucket_ms", cfg.bucket_ms, 1);

  c.integer<std::uint32_t>("synth_users", cfg.synth.num_users, 1);
  c.integer<std::uint32_t>("synth_groups", cfg.synth.num_groups, 1);
  c.integer<std::uint64_t>("synth_events", cfg.synth.num_events, 0);
  c.integer<std::uint64_t>("synth_seed", cfg.synth.seed, 0);
  c.real("noise", cfg.synth.noise,
         [](double v) -> std::string { return v >= 0.0 && v <= 1.0 ? "" : "must lie in [0, 1]"; });
  if (cfg.width > 0) cfg.synth.width = cfg.width;
  if (cfg.height > 0) cfg.synth.height = cfg.height;

  if (!c.errors.empty()) throw ConfigError(std::move(c.errors));
  return cfg;
}

}  // namespace collab
