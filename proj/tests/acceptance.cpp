// One PASS/FAIL line per acceptance criterion; exit status is nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "collab/baselines.hpp"
#include "collab/canvas_state.hpp"
#include "collab/cli.hpp"
#include "collab/embed_model.hpp"
#include "collab/evaluation.hpp"
#include "collab/event_log.hpp"
#include "collab/rng.hpp"
#include "collab/segmentation.hpp"

using namespace collab;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("%s %d %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

template <typename... Args>
std::string cat(const Args&... args) {
  std::ostringstream out;
  out.precision(6);
  (out << ... << args);
  return out.str();
}

std::vector<std::size_t> all_events(const EventStream& s) {
  std::vector<std::size_t> out(s.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

// 1. Analytic triplet gradient against central differences of an independent scorer.
void gradient_oracle() {
  using Table = BasicEmbeddingTable<double>;
  const auto t0 = Clock::now();
  Rng rng(2024);
  const double h = 1e-5;
  double worst = 0.0;
  int instances = 0;
  for (const std::size_t dim : {2u, 4u, 8u}) {
    for (int trial = 0; trial < 40; ++trial, ++instances) {
      const std::size_t users = 2 + rng.below(6);
      std::vector<std::string> names;
      for (std::size_t i = 0; i < users; ++i) names.push_back("u" + std::to_string(i));
      Table table(names, dim);
      for (auto& v : table.values()) v = rng.normal();
      const auto u = static_cast<UserId>(rng.below(users));
      std::vector<UserId> pos, neg;
      for (std::uint64_t i = 0, n = 1 + rng.below(8); i < n; ++i) pos.push_back(static_cast<UserId>(rng.below(users)));
      for (std::uint64_t i = 0, n = rng.below(9); i < n; ++i) neg.push_back(static_cast<UserId>(rng.below(users)));

      std::vector<double> theta(table.values().begin(), table.values().end());
      auto objective = [&] {
        auto side = [&](const std::vector<UserId>& ctx) {
          double s = 0.0;
          for (const UserId k : ctx) {
            double n2 = 0.0, d = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
              n2 += theta[k * dim + i] * theta[k * dim + i];
              d += theta[u * dim + i] * theta[k * dim + i];
            }
            if (n2 > 0.0) s += d / std::sqrt(n2);
          }
          return s;
        };
        return -std::log1p(std::exp(-(side(pos) - side(neg))));
      };
      const auto g = triplet_gradient(table, Triplet{u, pos, neg});
      std::vector<double> analytic(theta.size(), 0.0);
      for (std::size_t r = 0; r < g.rows.size(); ++r)
        for (std::size_t d = 0; d < dim; ++d) analytic[g.rows[r] * dim + d] += g.grad[r * dim + d];
      double diff = 0.0, scale = 1e-6;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + h;
        const double up = objective();
        theta[i] = keep - h;
        const double down = objective();
        theta[i] = keep;
        const double numeric = (up - down) / (2 * h);
        diff = std::max(diff, std::abs(numeric - analytic[i]));
        scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
      }
      worst = std::max(worst, diff / scale);
    }
  }
  const double secs = seconds_since(t0);
  report(1, "gradient_oracle", worst <= 1e-4 && secs < 10.0,
         cat(instances, " instances, K in {2,4,8}, max rel err ", worst, " (<= 1e-4), ", secs, " s (< 10)"));
}

// 2. AUC against pairwise brute force on random triplets with ties.
void auc_oracle() {
  const auto t0 = Clock::now();
  Rng rng(99);
  const std::size_t n = 1000;
  std::vector<double> scores(2 * n);
  for (auto& v : scores) v = static_cast<double>(rng.below(5));
  std::vector<EvalTriplet> triplets(n);
  for (std::size_t i = 0; i < n; ++i) triplets[i] = {0, 2 * i, 2 * i + 1};
  const auto got = auc(triplets, [&](UserId, std::size_t e) { return scores[e]; });
  double brute = 0.0;
  std::size_t ties = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = scores[2 * i], b = scores[2 * i + 1];
    brute += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    ties += a == b;
  }
  brute /= static_cast<double>(n);
  const double secs = seconds_since(t0);
  report(2, "auc_oracle", got.auc == brute && secs < 1.0,
         cat("module ", got.auc, " brute ", brute, " (", ties, " ties), exact=", got.auc == brute ? "yes" : "no", ", ",
             secs, " s (< 1)"));
}

// 3. Planted-group benchmark.
void planted_benchmark() {
  const auto t0 = Clock::now();
  const auto data = generate_synthetic(SynthConfig{});
  const auto holdout = build_holdout(data.stream, SplitSpec{});
  BenchmarkConfig bc;
  bc.baselines = {Method::kMedian, Method::kCount, Method::kCommunity, Method::kMF};
  const auto r = run_benchmark(data.stream, holdout, bc);
  const double secs = seconds_since(t0);
  if (r.any_failed()) {
    report(3, "planted_benchmark", false, "a method failed to run");
    return;
  }
  auto value = [&](Method m) { return r.find(m)->result->auc; };
  const double emb = value(Method::kEmbedding), count = value(Method::kCount);
  const double community = value(Method::kCommunity), median = value(Method::kMedian), mf = value(Method::kMF);
  const bool floor_ok = emb >= 0.85;
  const bool margin_ok = emb - count >= 0.02;
  const bool mf_ok = mf < std::min({emb, count, community});
  report(3, "planted_benchmark", floor_ok && margin_ok && mf_ok && secs < 300.0,
         cat("embedding ", emb, " median ", median, " count ", count, " community ", community, " mf ", mf,
             "; emb>=0.85 ", floor_ok ? "ok" : "NO", ", emb-count=", emb - count, " >= 0.02 ",
             margin_ok ? "ok" : "NO", ", mf below social ", mf_ok ? "ok" : "NO", ", n=", holdout.triplets.size(),
             ", ", secs, " s (< 300)"));
}

// 4. ARI against pair counting.
void ari_oracle() {
  Rng rng(31);
  double worst = 0.0;
  bool self_exact = true;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(29);
    const std::uint64_t ka = 1 + rng.below(6), kb = 1 + rng.below(6);
    std::vector<std::int64_t> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<std::int64_t>(rng.below(ka));
      b[i] = static_cast<std::int64_t>(rng.below(kb));
    }
    double n11 = 0, same_a = 0, same_b = 0, pairs = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        n11 += a[i] == a[j] && b[i] == b[j];
        same_a += a[i] == a[j];
        same_b += b[i] == b[j];
        ++pairs;
      }
    const double expected = same_a * same_b / pairs, max_index = 0.5 * (same_a + same_b);
    const double brute = max_index == expected ? 1.0 : (n11 - expected) / (max_index - expected);
    worst = std::max(worst, std::abs(adjusted_rand_index(a, b) - brute));
    self_exact = self_exact && adjusted_rand_index(a, a) == 1.0;
  }
  report(4, "ari_oracle", worst <= 1e-12 && self_exact,
         cat("50 pairs n<=30, max |diff| ", worst, " (<= 1e-12), ARI(P,P)=1 exactly: ", self_exact ? "yes" : "no"));
}

// 5. Four-quadrant segmentation recovery from a trained model.
void segmentation_recovery() {
  const auto t0 = Clock::now();
  SynthConfig cfg;
  cfg.num_groups = 4;
  cfg.noise = 0.0;
  const auto data = generate_synthetic(cfg);
  const auto ctx = ActionContexts::build(data.stream);
  const auto model = train(data.stream, ctx, all_events(data.stream), TrainConfig{}).table;
  const auto fp = fingerprint_canvas(replay(data.stream), data.stream.users, model);
  const auto dendrogram = Dendrogram::build(fp);
  const auto seg = dendrogram.cut(4);
  std::vector<std::int64_t> labels(seg.labels.begin(), seg.labels.end()), truth;
  for (const auto& l : data.atlas.labels) truth.push_back(l.value_or(-1));
  const double ari = adjusted_rand_index(labels, truth, fp.present);
  const std::vector<std::size_t> candidates{2, 3, 4, 5, 6, 7, 8};
  const auto search = search_cluster_count(dendrogram, data.atlas, candidates);
  const double secs = seconds_since(t0);
  report(5, "segmentation_recovery", ari >= 0.9 && search.best_clusters == 4 && secs < 120.0,
         cat("ARI at C=4 ", ari, " (>= 0.9), search {2..8} best C=", search.best_clusters, " (ARI ",
             search.best_ari, "), ", secs, " s (< 120)"));
}

// 6. Connectivity of every cluster on random fingerprint maps.
void connectivity() {
  Rng rng(77);
  std::size_t checked = 0, connected = 0;
  for (int trial = 0; trial < 20; ++trial) {
    FingerprintMap fp;
    fp.width = 8 + static_cast<std::int32_t>(rng.below(25));
    fp.height = 8 + static_cast<std::int32_t>(rng.below(25));
    fp.dim = 1 + rng.below(4);
    for (std::int32_t p = 0; p < fp.width * fp.height; ++p) {
      for (std::size_t d = 0; d < fp.dim; ++d) fp.values.push_back(static_cast<double>(rng.below(3)));
      fp.present.push_back(1);
    }
    const auto dendrogram = Dendrogram::build(fp);
    for (const std::size_t c : {1ul, 2ul, 5ul, 17ul, dendrogram.leaves() / 3}) {
      ++checked;
      connected += clusters_connected(dendrogram.cut(c));
    }
  }
  report(6, "connectivity", connected == checked,
         cat(connected, "/", checked, " segmentations fully 4-connected over 20 random maps"));
}

// 7. Two end-to-end runs, byte-identical outputs.
void determinism() {
  const auto root = std::filesystem::temp_directory_path() / "collab_acceptance_determinism";
  std::filesystem::remove_all(root);
  std::ostringstream log;
  auto run = [&](const std::filesystem::path& out) {
    const auto data = (root / "data").string();
    const auto events = (root / "data" / "events.csv").string();
    const auto atlas = (root / "data" / "atlas.csv").string();
    const auto o = out.string();
    int rc = 0;
    rc |= dispatch({"train", "--events", events, "--k", "32", "--epochs", "3", "--out", o}, log);
    rc |= dispatch({"eval", "--events", events, "--model", o + "/model.bin", "--out", o}, log);
    rc |= dispatch({"segment", "--events", events, "--model", o + "/model.bin", "--atlas", atlas, "--out", o}, log);
    return rc;
  };
  int rc = dispatch({"synth", "--users", "200", "--width", "50", "--height", "50", "--events", "40000", "--out",
                     (root / "data").string()},
                    log);
  rc |= run(root / "a");
  rc |= run(root / "b");
  std::vector<std::string> differing;
  for (const char* f : {"model.bin", "report.csv", "segmentation.csv", "ari_curve.csv"}) {
    const auto pa = root / "a" / f, pb = root / "b" / f;
    if (!std::filesystem::exists(pa) || !std::filesystem::exists(pb) || read_file(pa) != read_file(pb))
      differing.push_back(f);
  }
  std::string detail = rc ? "pipeline exited nonzero; " : "";
  detail += differing.empty() ? "model.bin, report.csv, segmentation.csv, ari_curve.csv identical" : "differ:";
  for (const auto& f : differing) detail += " " + f;
  report(7, "determinism", rc == 0 && differing.empty(), detail);
  std::filesystem::remove_all(root);
}

// 8. Replay + context throughput at 1000x1000 and SGD throughput at K=120.
void throughput() {
  SynthConfig big;
  big.num_users = 5000;
  big.num_groups = 16;
  big.width = 1000;
  big.height = 1000;
  big.num_events = 2000000;
  const auto data = generate_synthetic(big);
  auto t0 = Clock::now();
  const auto ctx = ActionContexts::build(data.stream);
  const double replay_rate = static_cast<double>(data.stream.size()) / seconds_since(t0);

  const auto planted = generate_synthetic(SynthConfig{});
  const auto pctx = ActionContexts::build(planted.stream);
  TrainConfig tc;
  tc.epochs = 3;
  t0 = Clock::now();
  const auto result = train(planted.stream, pctx, all_events(planted.stream), tc);
  const double secs = seconds_since(t0);
  std::size_t steps = 0;
  for (const auto& e : result.epochs) steps += e.steps;
  const double step_rate = static_cast<double>(steps) / secs;
  report(8, "throughput", replay_rate >= 200000.0 && step_rate >= 50000.0 && ctx.size() == data.stream.size(),
         cat("replay+contexts ", replay_rate, " events/s (>= 200000) at 1000x1000; SGD ", step_rate,
             " steps/s (>= 50000) at K=120"));
}

}  // namespace

int main() {
  gradient_oracle();
  auc_oracle();
  planted_benchmark();
  ari_oracle();
  segmentation_recovery();
  connectivity();
  determinism();
  throughput();
  std::printf("SKIP 9 full_dump_reproduction: optional offline check, needs the 2017 dump\n");
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
