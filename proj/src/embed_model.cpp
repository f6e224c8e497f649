#include "collab/embed_model.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>

#include "collab/auc.hpp"

namespace collab {

ActionPool::ActionPool(const EventStream& stream, std::span<const std::size_t> actions)
    : actions_(actions.begin(), actions.end()), per_user_(stream.users.size(), 0) {
  actors_.reserve(actions_.size());
  for (const auto a : actions_) {
    const UserId u = stream.events.at(a).user;
    actors_.push_back(u);
    ++per_user_[u];
  }
}

std::size_t sample_negative(Rng& rng, const ActionPool& pool, UserId u) {
  if (pool.size() == 0) throw std::invalid_argument("negative pool is empty");
  if (pool.count_by(u) == pool.size())
    throw std::invalid_argument("negative pool holds no action by another user");
  for (;;) {
    const auto i = static_cast<std::size_t>(rng.below(pool.size()));
    if (pool.actor(i) != u) return pool.action(i);
  }
}

void TrainConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (dim < 1) throw std::invalid_argument("K must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(init_scale > 0.0)) throw std::invalid_argument("init_scale must be > 0");
}

TrainResult train(const EventStream& stream, const ActionContexts& contexts,
                  std::span<const std::size_t> training_actions, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.validate();
  if (training_actions.empty()) throw std::invalid_argument("empty training set");
  if (contexts.size() != stream.size())
    throw std::invalid_argument("contexts were not built from this stream");

  TrainResult result;
  result.table = EmbeddingTable(stream.users.names(), cfg.dim);
  auto& table = result.table;
  Rng rng(cfg.seed);
  table.randomize(rng, cfg.init_scale);

  const ActionPool pool(stream, training_actions);

  struct ProbeItem {
    UserId user;
    std::size_t positive;
    std::size_t negative;
  };
  std::vector<ProbeItem> probe;
  {
    Rng probe_rng(cfg.seed ^ 0xA5A5A5A5DEADBEEFULL);
    const std::size_t n = std::min(cfg.probe_size, training_actions.size());
    probe.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = training_actions[probe_rng.below(training_actions.size())];
      const UserId u = stream.events[a].user;
      probe.push_back({u, a, sample_negative(probe_rng, pool, u)});
    }
  }

  SgdWorkspace<float> ws;
  ws.reserve(cfg.dim);
  const StepParams params{cfg.alpha, cfg.lambda};
  std::vector<double> diffs(probe.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch + 1;
    double ll = 0.0;
    for (const auto a : training_actions) {
      const UserId u = stream.events[a].user;
      const auto neg = sample_negative(rng, pool, u);
      const Triplet t{u, contexts[a], contexts[neg]};
      if (t.positive.empty() && t.negative.empty()) {
        ++stats.skipped;
        continue;
      }
      ll += log_sigmoid(sgd_step(table, t, params, ws));
      ++stats.steps;
    }
    stats.mean_log_likelihood = stats.steps ? ll / static_cast<double>(stats.steps) : 0.0;
    if (!probe.empty()) {
      for (std::size_t i = 0; i < probe.size(); ++i)
        diffs[i] = score_difference(table, {probe[i].user, contexts[probe[i].positive], contexts[probe[i].negative]});
      stats.probe_auc = auc_from_differences(diffs).auc;
    }
    result.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.append(bytes.data(), bytes.size());
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    std::array<char, sizeof(T)> b;
    std::memcpy(b.data(), bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, b.data(), sizeof(T));
    return value;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("truncated model file");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_model(const EmbeddingTable& table) {
  std::string out = "CLB1";
  put_le<std::uint32_t>(out, kModelVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim()));
  put_le<std::uint64_t>(out, table.rows());
  for (const auto& u : table.users()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(u.size()));
    out += u;
  }
  out.reserve(out.size() + table.values().size() * sizeof(float));
  for (const float v : table.values()) put_le<float>(out, v);
  return out;
}

EmbeddingTable deserialize_model(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != "CLB1") throw std::runtime_error("bad model magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kModelVersion) throw std::runtime_error("unsupported model version " + std::to_string(version));
  const auto dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  std::vector<std::string> users;
  users.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    users.emplace_back(r.take(len));
  }
  EmbeddingTable table(std::move(users), dim);
  for (auto& v : table.values()) v = r.get<float>();
  if (!r.done()) throw std::runtime_error("trailing bytes in model file");
  return table;
}

void save_model(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto bytes = serialize_model(table);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

EmbeddingTable load_model(const std::filesystem::path& path) {
  return deserialize_model(read_file(path));
}

void export_embeddings_csv(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "user";
  for (std::size_t d = 0; d < table.dim(); ++d) out << ",v" << d;
  out << '\n';
  std::array<char, 32> buf;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    out << table.users()[r];
    for (const float v : table.row(r)) {
      auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
      out << ',' << std::string_view(buf.data(), static_cast<std::size_t>(end - buf.data()));
    }
    out << '\n';
  }
}

std::size_t align_to_users(const EmbeddingTable& table, const UserTable& users,
                           EmbeddingTable& aligned) {
  aligned = EmbeddingTable(users.names(), table.dim());
  std::size_t missing = 0;
  for (std::size_t u = 0; u < users.size(); ++u) {
    const auto& name = users.name(static_cast<UserId>(u));
    if (!table.contains(name)) {
      ++missing;
      continue;
    }
    const auto src = table.row(table.row_of(name));
    std::copy(src.begin(), src.end(), aligned.row(u).begin());
  }
  return missing;
}

}  // namespace collab
