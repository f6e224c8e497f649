#include "collab/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "collab/canvas_state.hpp"
#include "collab/config.hpp"
#include "collab/group_analysis.hpp"
#include "collab/segmentation.hpp"

namespace collab {

namespace {

struct Flag {
  const char* name;
  const char* key;
  const char* help;
  bool switch_only = false;  // takes no value; presence means "true"
};

const std::vector<Flag> kInputFlags = {
    {"--events", "events", "paint-event CSV (ts,user,x,y,color)"},
    {"--width", "width", "canvas width, inferred when 0"},
    {"--height", "height", "canvas height, inferred when 0"},
    {"--lenient", "lenient", "skip out-of-bounds rows instead of failing", true},
};

const std::vector<Flag> kSplitFlags = {
    {"--min-actions", "min_actions", "minimum post-warmup actions for a user to be evaluated"},
    {"--warmup-fraction", "warmup_fraction", "leading share of events used only for canvas state"},
    {"--split-seed", "split_seed", "seed of the leave-one-out split"},
};

const std::vector<Flag> kTrainFlags = {
    {"--k", "k", "embedding dimension"},
    {"--lr", "alpha", "learning rate"},
    {"--reg", "lambda", "regularization weight"},
    {"--epochs", "epochs", "passes over the training actions"},
    {"--seed", "seed", "training seed"},
    {"--include-self", "include_self", "keep the actor in its own context (true/false)"},
    {"--dedup-context", "dedup_context", "collapse repeated context users (true/false)"},
    {"--init-scale", "init_scale", "standard deviation of the initial embeddings"},
    {"--probe-size", "probe_size", "training triplets re-scored after every epoch"},
};

const std::vector<Flag> kEvalFlags = {
    {"--model", "model", "trained model file; trained in-process when absent"},
    {"--baselines", "baselines", "comma list of median,count,community,mf"},
    {"--communities", "communities", "user,community CSV replacing label propagation"},
    {"--ties", "ties", "score-tie credit: half or zero"},
    {"--adjacency-multiplicity", "adjacency_multiplicity", "count repeated co-occurrences (true/false)"},
    {"--mf-rank", "mf_rank", "matrix-factorization rank"},
    {"--mf-reg", "mf_regularization", "matrix-factorization regularization"},
    {"--mf-confidence", "mf_confidence", "confidence weight c in 1 + c * count"},
    {"--mf-sweeps", "mf_sweeps", "alternating least-squares sweeps"},
    {"--mf-seed", "mf_seed", "matrix-factorization seed"},
    {"--lp-max-iter", "lp_max_iter", "label-propagation passes"},
    {"--lp-seed", "lp_seed", "label-propagation seed"},
};

struct Subcommand {
  const char* name;
  const char* help;
  std::vector<Flag> flags;
};

std::vector<Flag> concat(std::initializer_list<const std::vector<Flag>*> parts) {
  std::vector<Flag> out;
  for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

std::vector<Subcommand> subcommands() {
  const std::vector<Flag> synth = {
      {"--users", "synth_users", "number of users"},
      {"--groups", "synth_groups", "number of planted groups"},
      {"--width", "width", "canvas width (default 100)"},
      {"--height", "height", "canvas height (default 100)"},
      {"--events", "synth_events", "number of events"},
      {"--noise", "noise", "probability of a click outside the group territory"},
      {"--seed", "synth_seed", "generator seed"},
  };
  const std::vector<Flag> stats = {
      {"--atlas", "atlas", "x,y,label CSV used as heatmap regions"},
      {"--tile", "tile", "tile size of the uniform heatmap when no atlas is given"},
      {"--bucket-ms", "bucket_ms", "time bucket for the series, in milliseconds"},
  };
  const std::vector<Flag> segment = {
      {"--model", "model", "trained model file"},
      {"--atlas", "atlas", "ground-truth x,y,label CSV for the cluster-count search"},
      {"--clusters", "clusters", "fixed cluster count; 0 searches against the atlas"},
      {"--candidates", "candidates", "cluster counts to try, e.g. 2-8,16"},
  };
  const std::vector<Flag> groups = {
      {"--model", "model", "trained model file"},
      {"--eps", "eps", "DBSCAN radius; 0 picks the k-distance elbow"},
      {"--min-pts", "min_pts", "DBSCAN core-point threshold, counting the point itself"},
      {"--window", "window", "trailing events drawn into the trace map"},
      {"--normalize", "normalize_embeddings", "cluster unit-length embeddings (true/false)"},
      {"--project", "project", "cluster principal components instead of raw rows (true/false)"},
      {"--project-dims", "project_dims", "principal components kept; 0 cuts at the spectral gap"},
  };
  return {
      {"synth", "generate a planted-group event log", synth},
      {"stats", "activity statistics and heatmaps", concat({&kInputFlags, &stats})},
      {"train", "train user embeddings", concat({&kInputFlags, &kSplitFlags, &kTrainFlags})},
      {"eval", "leave-one-out AUC benchmark",
       concat({&kInputFlags, &kSplitFlags, &kTrainFlags, &kEvalFlags})},
      {"segment", "segment the final canvas", concat({&kInputFlags, &segment})},
      {"groups", "density grouping of users and trace map", concat({&kInputFlags, &groups})},
  };
}

class Log {
 public:
  Log(std::ostream& out, std::string cmd) : out_(out), cmd_(std::move(cmd)) {}
  void operator()(const std::string& msg) const { out_ << "collab " << cmd_ << ": " << msg << '\n'; }

 private:
  std::ostream& out_;
  std::string cmd_;
};

template <typename... Parts>
std::string cat(const Parts&... parts) {
  std::ostringstream s;
  s.precision(6);
  (s << ... << parts);
  return s.str();
}

EventStream load_stream(const PipelineConfig& cfg, const Log& log) {
  if (cfg.events.empty()) throw std::runtime_error("--events is required");
  ParseOptions opts;
  opts.lenient = cfg.lenient;
  auto parsed = parse_events(cfg.events, cfg.width, cfg.height, opts);
  log(cat("read ", parsed.stream.size(), " events, ", parsed.stream.users.size(), " users, canvas ",
          parsed.stream.width, "x", parsed.stream.height,
          parsed.skipped ? cat(", skipped ", parsed.skipped, " out-of-bounds rows") : std::string()));
  return std::move(parsed.stream);
}

EmbeddingTable require_model(const PipelineConfig& cfg) {
  if (cfg.model.empty()) throw std::runtime_error("--model is required");
  return load_model(cfg.model);
}

void run_synth(const PipelineConfig& cfg, const Log& log) {
  const auto data = generate_synthetic(cfg.synth);
  write_events(data.stream, cfg.out / "events.csv");
  write_atlas(data.atlas, cfg.out / "atlas.csv");
  const std::vector<std::int64_t> groups(data.group_of_user.begin(), data.group_of_user.end());
  write_groups(data.stream.users, groups, cfg.out / "groups.csv");
  log(cat("wrote ", data.stream.size(), " events for ", data.stream.users.size(), " users in ",
          data.territories.size(), " territories"));
}

void run_stats(const PipelineConfig& cfg, const Log& log) {
  const auto stream = load_stream(cfg, log);
  const auto partition = cfg.atlas.empty()
                             ? Partition::uniform_tiles(stream.width, stream.height, cfg.tile, cfg.tile)
                             : Partition::from_atlas(load_atlas(cfg.atlas, stream.width, stream.height));
  write_stats(stream, partition, cfg.bucket_ms, cfg.out);
  log(cat("heatmap over ", partition.region_count(), " regions"));
}

void run_train(const PipelineConfig& cfg, const Log& log) {
  const auto stream = load_stream(cfg, log);
  const auto holdout = build_holdout(stream, cfg.split);
  log(cat(holdout.triplets.size(), " held-out users, ", holdout.training.size(), " training actions, ",
          holdout.warmup_events, " warmup events"));
  const auto t0 = std::chrono::steady_clock::now();
  const auto contexts = ActionContexts::build(stream, cfg.train.context_options());
  std::ofstream epochs(cfg.out / "train_log.csv", std::ios::binary);
  epochs << "epoch,steps,skipped,mean_log_likelihood,probe_auc\n";
  epochs.precision(10);
  auto result = train(stream, contexts, holdout.training, cfg.train, [&](const EpochStats& s) {
    epochs << s.epoch << ',' << s.steps << ',' << s.skipped << ',' << s.mean_log_likelihood << ','
           << s.probe_auc << '\n';
    log(cat("epoch ", s.epoch, " steps=", s.steps, " skipped=", s.skipped,
            " mean_ll=", s.mean_log_likelihood, " probe_auc=", s.probe_auc));
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_model(result.table, cfg.out / "model.bin");
  export_embeddings_csv(result.table, cfg.out / "embeddings.csv");
  log(cat("trained ", result.table.rows(), " users, K=", result.table.dim(), " in ", secs, " s"));
}

/// Returns false when any method failed.
bool run_eval(const PipelineConfig& cfg, const Log& log) {
  const auto stream = load_stream(cfg, log);
  const auto holdout = build_holdout(stream, cfg.split);
  log(cat(holdout.triplets.size(), " evaluation triplets"));

  BenchmarkConfig bench;
  bench.train = cfg.train;
  bench.baselines = cfg.baselines;
  bench.mf = cfg.mf;
  bench.label_propagation = cfg.label_propagation;
  bench.adjacency_multiplicity = cfg.adjacency_multiplicity;
  bench.ties = cfg.ties;
  if (!cfg.model.empty()) bench.model = load_model(cfg.model);

  const bool wants_community =
      std::find(cfg.baselines.begin(), cfg.baselines.end(), Method::kCommunity) != cfg.baselines.end();
  if (wants_community) {
    if (!cfg.communities.empty()) {
      bench.communities = load_communities(cfg.communities, stream.users);
    } else {
      const auto contexts = ActionContexts::build(stream, ContextOptions{});
      const auto adj = AdjacencyCounts::build(stream, contexts, holdout.training, cfg.adjacency_multiplicity);
      bench.communities = detect_communities(adj, cfg.label_propagation);
      save_communities(*bench.communities, stream.users, cfg.out / "communities.csv");
    }
  }

  const auto report = run_benchmark(stream, holdout, bench, log);
  write_report(report, cfg.out / "report.csv");
  return !report.any_failed();
}

std::vector<std::size_t> default_candidates(const Dendrogram& d, const AtlasLabels& atlas) {
  const std::size_t lo = std::max<std::size_t>(2, d.min_clusters());
  const std::size_t labels = std::max<std::size_t>(1, atlas.distinct_labels());
  const std::size_t hi = std::min(d.leaves(), std::max<std::size_t>(8, 4 * labels));
  if (lo > hi) return {d.min_clusters()};
  return geometric_candidates(lo, hi, 16);
}

void run_segment(const PipelineConfig& cfg, const Log& log) {
  const auto stream = load_stream(cfg, log);
  const auto table = require_model(cfg);
  const auto grid = replay(stream);
  const auto fp = fingerprint_canvas(grid, stream.users, table);
  if (fp.unknown_painters) log(cat(fp.unknown_painters, " painted pixels have painters missing from the model"));
  if (cfg.atlas.empty() && cfg.clusters == 0) throw std::runtime_error("--clusters is required without --atlas");

  const auto dendrogram = Dendrogram::build(fp);
  SegmentationResult seg;
  if (!cfg.atlas.empty()) {
    const auto atlas = load_atlas(cfg.atlas, stream.width, stream.height);
    ClusterSearch search;
    if (cfg.clusters > 0) {
      const std::size_t only[] = {cfg.clusters};
      search = search_cluster_count(dendrogram, atlas, only);
    } else if (!cfg.candidates.empty()) {
      search = search_cluster_count(dendrogram, atlas, cfg.candidates);
    } else {
      const auto coarse = default_candidates(dendrogram, atlas);
      search = search_cluster_count(dendrogram, atlas, coarse);
      const auto radius = std::max<std::size_t>(2, search.best_clusters / 8);
      auto fine = local_candidates(search.best_clusters, radius, dendrogram.leaves());
      fine.insert(fine.end(), coarse.begin(), coarse.end());
      search = search_cluster_count(dendrogram, atlas, fine);
    }
    write_ari_curve(search, cfg.out / "ari_curve.csv");
    log(cat("best C=", search.best_clusters, " ARI=", search.best_ari, " over ", search.curve.size(),
            " candidates"));
    seg = dendrogram.cut(search.best_clusters);
  } else {
    seg = dendrogram.cut(cfg.clusters);
  }
  write_segmentation_csv(seg, cfg.out / "segmentation.csv");
  write_label_pgm(seg, cfg.out / "segmentation.pgm");
  log(cat("wrote ", seg.clusters, " clusters"));
}

void run_groups(const PipelineConfig& cfg, const Log& log) {
  const auto stream = load_stream(cfg, log);
  const auto raw = require_model(cfg);
  if (raw.rows() < 2) throw std::runtime_error("model needs at least two users");
  auto table = cfg.normalize_embeddings ? normalized_rows(raw) : raw;
  if (cfg.project) {
    table = principal_projection(table, cfg.project_dims);
    log(cat("clustering ", table.dim(), " principal components"));
  }

  double eps = cfg.eps;
  if (eps == 0.0) {
    const auto k = std::min(cfg.min_pts, table.rows() - 1);
    const auto curve = k_distances(table, std::max<std::size_t>(1, k));
    eps = k_distance_elbow(curve);
    std::ofstream out(cfg.out / "k_distances.csv", std::ios::binary);
    out.precision(10);
    out << "rank,distance\n";
    for (std::size_t i = 0; i < curve.size(); ++i) out << i << ',' << curve[i] << '\n';
    log(cat("k-distance elbow eps=", eps));
    if (!(eps > 0.0)) throw std::runtime_error("k-distance elbow is zero; pass --eps");
  }
  const auto labels = dbscan_groups(table, eps, cfg.min_pts);
  log(cat(labels.groups, " groups, ", labels.noise_count(), " noise users, eps=", eps));

  UserTable model_users;
  for (const auto& name : table.users()) model_users.intern(name);
  write_groups(model_users, labels.group, cfg.out / "groups.csv");

  std::vector<std::int64_t> group_of_user(stream.users.size(), GroupLabels::kNoise);
  for (std::size_t u = 0; u < stream.users.size(); ++u) {
    const auto& name = stream.users.name(static_cast<UserId>(u));
    if (table.contains(name)) group_of_user[u] = labels.group[table.row_of(name)];
  }
  const std::size_t begin = stream.size() > cfg.window ? stream.size() - cfg.window : 0;
  const auto raster = trace_map(stream, begin, stream.size(), group_of_user);
  write_trace_ppm(raster, stream.width, stream.height, cfg.out / "traces.ppm");
  log(cat("trace map over events [", begin, ", ", stream.size(), ")"));
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& log) {
  CLI::App app{"Collaboration structure from paint-event logs", "collab"};
  app.require_subcommand(1, 1);
  app.fallthrough(false);

  const auto specs = subcommands();
  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, std::map<std::string, bool>> switches;
  std::map<std::string, std::string> config_file;
  std::map<std::string, CLI::App*> apps;
  for (const auto& spec : specs) {
    auto* sub = app.add_subcommand(spec.name, spec.help);
    apps[spec.name] = sub;
    sub->add_option("--config", config_file[spec.name], "flat key = value file; flags override it");
    sub->add_option("--out", values[spec.name]["out"], "output directory (default out)");
    for (const auto& f : spec.flags) {
      if (f.switch_only) sub->add_flag(f.name, switches[spec.name][f.key], f.help);
      else sub->add_option(f.name, values[spec.name][f.key], f.help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, log, log);
    log << "error: " << e.what() << "\n\n";
    const CLI::App* context = &app;
    for (const auto& [name, sub] : apps)
      if (sub->parsed()) context = sub;
    log << context->help();
    return 2;
  }

  const auto* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  const Log logger(log, name);

  KeyValues kv;
  try {
    if (!config_file[name].empty()) kv = load_config_file(config_file[name]);
  } catch (const std::exception& ex) {
    log << "collab " << name << ": config " << config_file[name] << ": " << ex.what() << '\n';
    return 2;
  }
  for (const auto& [key, value] : values[name])
    if (!value.empty()) kv[key] = value;
  for (const auto& [key, on] : switches[name])
    if (on) kv[key] = "true";

  PipelineConfig cfg;
  try {
    cfg = validate_config(kv);
  } catch (const ConfigError& ex) {
    for (const auto& e : ex.errors()) log << "collab " << name << ": config error: " << e << '\n';
    return 2;
  }

  try {
    std::filesystem::create_directories(cfg.out);
    if (name == "synth") run_synth(cfg, logger);
    else if (name == "stats") run_stats(cfg, logger);
    else if (name == "train") run_train(cfg, logger);
    else if (name == "eval") {
      if (!run_eval(cfg, logger)) {
        logger("one or more methods failed");
        return 1;
      }
    } else if (name == "segment") run_segment(cfg, logger);
    else if (name == "groups") run_groups(cfg, logger);
  } catch (const std::exception& ex) {
    logger(std::string("error: ") + ex.what());
    return 1;
  }
  return 0;
}

int dispatch(const std::vector<std::string>& args, std::ostream& log) {
  std::vector<const char*> argv{"collab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data(), log);
}

}  // namespace collab
