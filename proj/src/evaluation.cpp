#include "collab/evaluation.hpp"

#include <cctype>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "collab/rng.hpp"

namespace collab {

void SplitSpec::validate() const {
  if (min_actions < 1) throw std::invalid_argument("min_actions must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw std::invalid_argument("warmup_fraction must lie in [0, 1)");
}

Holdout build_holdout(const EventStream& stream, const SplitSpec& spec) {
  spec.validate();
  Holdout h;
  h.warmup_events = static_cast<std::size_t>(
      std::floor(spec.warmup_fraction * static_cast<double>(stream.size())));

  const std::size_t users = stream.users.size();
  std::vector<std::vector<std::size_t>> by_user(users);
  for (std::size_t i = h.warmup_events; i < stream.size(); ++i) by_user[stream.events[i].user].push_back(i);

  Rng rng(spec.seed);
  std::vector<bool> held(stream.size(), false);
  for (std::size_t u = 0; u < users; ++u) {
    const auto& acts = by_user[u];
    if (acts.size() < spec.min_actions || acts.empty()) continue;
    const auto pick = acts[rng.below(acts.size())];
    held[pick] = true;
    h.triplets.push_back({static_cast<UserId>(u), pick, 0});
  }
  if (h.triplets.size() < 2)
    throw std::invalid_argument("holdout needs at least two eligible users, found " +
                                std::to_string(h.triplets.size()));

  // Negative: another eligible user's held-out action, uniformly.
  const std::size_t n = h.triplets.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto j = static_cast<std::size_t>(rng.below(n - 1));
    if (j >= i) ++j;
    h.triplets[i].negative = h.triplets[j].positive;
  }

  for (std::size_t u = 0; u < users; ++u) {
    const auto& acts = by_user[u];
    if (acts.size() < spec.min_actions || acts.empty()) continue;
    for (const auto a : acts)
      if (!held[a]) h.training.push_back(a);
  }
  std::sort(h.training.begin(), h.training.end());
  return h;
}

AucResult auc(std::span<const EvalTriplet> triplets, const ActionScorer& scorer, TieRule ties) {
  if (triplets.empty()) throw std::invalid_argument("AUC of an empty triplet set");
  std::vector<double> diffs;
  diffs.reserve(triplets.size());
  for (const auto& t : triplets) diffs.push_back(scorer(t.user, t.positive) - scorer(t.user, t.negative));
  return auc_from_differences(diffs, ties);
}

const char* method_name(Method m) {
  switch (m) {
    case Method::kEmbedding: return "embedding";
    case Method::kMedian: return "median";
    case Method::kCount: return "count";
    case Method::kCommunity: return "community";
    case Method::kMF: return "mf";
  }
  return "?";
}

std::vector<Method> parse_methods(std::string_view list) {
  std::vector<Method> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    auto end = list.find(',', pos);
    if (end == std::string_view::npos) end = list.size();
    auto name = list.substr(pos, end - pos);
    pos = end + 1;
    while (!name.empty() && std::isspace(static_cast<unsigned char>(name.front()))) name.remove_prefix(1);
    while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back()))) name.remove_suffix(1);
    if (name.empty()) continue;
    Method m;
    if (name == "embedding") m = Method::kEmbedding;
    else if (name == "median") m = Method::kMedian;
    else if (name == "count") m = Method::kCount;
    else if (name == "community") m = Method::kCommunity;
    else if (name == "mf") m = Method::kMF;
    else throw std::invalid_argument("unknown method '" + std::string(name) + "'");
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return out;
}

bool EvalReport::any_failed() const {
  return std::any_of(rows.begin(), rows.end(), [](const MethodResult& r) { return !r.result; });
}

const MethodResult* EvalReport::find(Method m) const {
  for (const auto& r : rows)
    if (r.method == m) return &r;
  return nullptr;
}

EvalReport run_benchmark(const EventStream& stream, const Holdout& holdout,
                         const BenchmarkConfig& config,
                         const std::function<void(const std::string&)>& log) {
  auto note = [&](const std::string& msg) {
    if (log) log(msg);
  };
  std::vector<Method> methods;
  if (config.include_embedding) methods.push_back(Method::kEmbedding);
  for (const auto m : config.baselines)
    if (m != Method::kEmbedding || !config.include_embedding) methods.push_back(m);

  const ContextOptions baseline_opts{};
  const auto model_opts = config.train.context_options();
  const auto contexts = ActionContexts::build(stream, baseline_opts);
  std::optional<ActionContexts> model_contexts;
  auto contexts_for_model = [&]() -> const ActionContexts& {
    if (model_opts.include_self == baseline_opts.include_self && model_opts.dedup == baseline_opts.dedup)
      return contexts;
    if (!model_contexts) model_contexts = ActionContexts::build(stream, model_opts);
    return *model_contexts;
  };
  std::optional<AdjacencyCounts> adjacency;
  auto adjacency_counts = [&]() -> const AdjacencyCounts& {
    if (!adjacency)
      adjacency = AdjacencyCounts::build(stream, contexts, holdout.training, config.adjacency_multiplicity);
    return *adjacency;
  };

  EvalReport report;
  for (const auto m : methods) {
    MethodResult row;
    row.method = m;
    try {
      switch (m) {
        case Method::kEmbedding: {
          const auto& ctx = contexts_for_model();
          EmbeddingTable table;
          if (config.model) {
            const auto missing = align_to_users(*config.model, stream.users, table);
            if (missing) note("embedding: " + std::to_string(missing) + " users absent from model");
          } else {
            table = train(stream, ctx, holdout.training, config.train, [&](const EpochStats& s) {
                      std::ostringstream msg;
                      msg << "embedding: epoch " << s.epoch << " probe_auc=" << s.probe_auc;
                      note(msg.str());
                    }).table;
          }
          row.result = auc(holdout.triplets,
                           [&](UserId u, std::size_t e) { return score(table, u, ctx[e]); }, config.ties);
          break;
        }
        case Method::kMedian: {
          const auto model = MedianModel::fit(stream, holdout.training);
          row.result = auc(
              holdout.triplets,
              [&](UserId u, std::size_t e) { return model.score(u, stream.events[e].x, stream.events[e].y); },
              config.ties);
          break;
        }
        case Method::kCount: {
          const auto& adj = adjacency_counts();
          row.result = auc(holdout.triplets,
                           [&](UserId u, std::size_t e) { return count_score(adj, u, contexts[e]); }, config.ties);
          break;
        }
        case Method::kCommunity: {
          const CommunityAssignment c =
              config.communities ? *config.communities
                                 : detect_communities(adjacency_counts(), config.label_propagation);
          note("community: " + std::to_string(c.communities()) + " communities");
          row.result = auc(holdout.triplets,
                           [&](UserId u, std::size_t e) { return community_score(c, u, contexts[e]); },
                           config.ties);
          break;
        }
        case Method::kMF: {
          const auto model = mf_train(stream, holdout.training, config.mf);
          row.result = auc(
              holdout.triplets,
              [&](UserId u, std::size_t e) { return model.score(u, stream.events[e].x, stream.events[e].y); },
              config.ties);
          break;
        }
      }
      std::ostringstream msg;
      msg << method_name(m) << ": auc=" << row.result->auc << " +/- " << row.result->ci95;
      note(msg.str());
    } catch (const std::exception& ex) {
      row.result.reset();
      row.error = ex.what();
      note(std::string(method_name(m)) + ": failed: " + ex.what());
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out << "method,auc,ci95,n\n";
  out.precision(10);
  for (const auto& r : report.rows) {
    out << method_name(r.method) << ',';
    if (r.result) {
      out << r.result->auc << ',' << r.result->ci95 << ',' << r.result->n << '\n';
    } else {
      out << "nan,nan,0\n";
    }
  }
  return out.str();
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_report(report);
}

}  // namespace collab
