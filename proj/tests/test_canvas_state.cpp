#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "collab/canvas_state.hpp"
#include "collab/rng.hpp"
#include "test_util.hpp"

using namespace collab;
using collab::testing::Click;
using collab::testing::make_stream;
using collab::testing::TempDir;

TEST(CanvasGrid, FirstEvent) {
  CanvasGrid g(4, 5);
  EXPECT_DOUBLE_EQ(g.unused_space_fraction(), 1.0);
  g.apply({100, 0, 0, 0, 1});
  EXPECT_EQ(g.update_count(0, 0), 1u);
  EXPECT_EQ(g.last_updater(0, 0), UserId{0});
  EXPECT_EQ(g.last_update_time(0, 0), 100);
  EXPECT_DOUBLE_EQ(g.unused_space_fraction(), 1.0 - 1.0 / 20.0);
  EXPECT_FALSE(g.last_updater(1, 0).has_value());
  EXPECT_FALSE(g.last_update_time(1, 0).has_value());
}

TEST(CanvasGrid, LastWriterWins) {
  CanvasGrid g(3, 3);
  g.apply({1, 0, 1, 1, 0});
  g.apply({2, 1, 1, 1, 0});
  EXPECT_EQ(g.last_updater(1, 1), UserId{1});
  EXPECT_EQ(g.update_count(1, 1), 2u);
}

TEST(CanvasGrid, OutOfBoundsThrows) {
  CanvasGrid g(3, 3);
  EXPECT_THROW(g.apply({1, 0, 3, 0, 0}), std::out_of_range);
  EXPECT_THROW(g.apply({1, 0, 0, -1, 0}), std::out_of_range);
}

TEST(CanvasGrid, ConservationAndMonotoneUnusedSpace) {
  SynthConfig cfg;
  cfg.num_users = 50;
  cfg.width = 30;
  cfg.height = 20;
  cfg.num_events = 3000;
  const auto stream = generate_synthetic(cfg).stream;
  CanvasGrid g(stream.width, stream.height);
  double prev = g.unused_space_fraction();
  for (const auto& e : stream.events) {
    g.apply(e);
    const double now = g.unused_space_fraction();
    ASSERT_LE(now, prev);
    prev = now;
  }
  const auto counts = g.update_counts();
  EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}), stream.size());
  for (std::size_t p = 0; p < counts.size(); ++p)
    ASSERT_EQ(counts[p] > 0, g.last_updaters()[p] != kNoUser);

  const auto again = replay(stream);
  EXPECT_TRUE(std::equal(again.last_updaters().begin(), again.last_updaters().end(),
                         g.last_updaters().begin()));
  EXPECT_TRUE(std::equal(again.update_counts().begin(), again.update_counts().end(), counts.begin()));
}

TEST(CanvasGrid, FullCoverage) {
  CanvasGrid g(2, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) g.apply({0, 0, x, y, 0});
  EXPECT_DOUBLE_EQ(g.unused_space_fraction(), 0.0);
}

TEST(NeighborContext, EmptyGrid) {
  CanvasGrid g(5, 5);
  EXPECT_TRUE(g.neighbor_context(2, 2).empty());
}

TEST(NeighborContext, InteriorMultiset) {
  CanvasGrid g(3, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x)
      if (x != 1 || y != 1) g.apply({0, 7, x, y, 0});
  const auto ctx = g.neighbor_context(1, 1);
  ASSERT_EQ(ctx.size(), 8u);
  for (const auto u : ctx) EXPECT_EQ(u, 7u);
}

TEST(NeighborContext, CornerTruncation) {
  CanvasGrid g(3, 3);
  g.apply({0, 1, 1, 0, 0});
  g.apply({0, 2, 0, 1, 0});
  g.apply({0, 3, 1, 1, 0});
  g.apply({0, 4, 2, 2, 0});  // not adjacent to (0,0)
  const auto ctx = g.neighbor_context(0, 0);
  ASSERT_EQ(ctx.size(), 3u);
  EXPECT_EQ(std::vector<UserId>(ctx.begin(), ctx.end()), (std::vector<UserId>{1, 2, 3}));
}

TEST(NeighborContext, SizeBoundsOnRandomGrids) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = static_cast<std::int32_t>(2 + rng.below(8));
    const auto h = static_cast<std::int32_t>(2 + rng.below(8));
    CanvasGrid g(w, h);
    for (int i = 0; i < 100; ++i)
      g.apply({i, static_cast<UserId>(rng.below(5)), static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(w))),
               static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(h))), 0});
    for (std::int32_t y = 0; y < h; ++y)
      for (std::int32_t x = 0; x < w; ++x) {
        const bool edge_x = x == 0 || x == w - 1;
        const bool edge_y = y == 0 || y == h - 1;
        const std::size_t bound = edge_x && edge_y ? 3 : (edge_x || edge_y ? 5 : 8);
        ASSERT_LE(g.neighbor_context(x, y).size(), bound);
      }
  }
}

TEST(ActionContexts, CapturedBeforeEachEvent) {
  const auto s = make_stream(3, 3, {{1, "a", 0, 0}, {2, "b", 1, 0}, {3, "a", 0, 1}, {4, "c", 1, 1}});
  const auto ctx = ActionContexts::build(s);
  ASSERT_EQ(ctx.size(), 4u);
  EXPECT_TRUE(ctx[0].empty());
  EXPECT_EQ(std::vector<UserId>(ctx[1].begin(), ctx[1].end()), (std::vector<UserId>{0}));
  EXPECT_EQ(std::vector<UserId>(ctx[2].begin(), ctx[2].end()), (std::vector<UserId>{0, 1}));
  EXPECT_EQ(std::vector<UserId>(ctx[3].begin(), ctx[3].end()), (std::vector<UserId>{0, 1, 0}));
}

TEST(ActionContexts, SelfExclusionAndDedup) {
  const auto s = make_stream(3, 3, {{1, "a", 0, 0}, {2, "a", 2, 0}, {3, "b", 0, 1}, {4, "a", 1, 1}});
  ContextOptions no_self;
  no_self.include_self = false;
  const auto excl = ActionContexts::build(s, no_self);
  EXPECT_EQ(std::vector<UserId>(excl[3].begin(), excl[3].end()), (std::vector<UserId>{1}));
  ContextOptions dedup;
  dedup.dedup = true;
  const auto d = ActionContexts::build(s, dedup);
  std::vector<UserId> got(d[3].begin(), d[3].end());
  std::sort(got.begin(), got.end());
  EXPECT_EQ(got, (std::vector<UserId>{0, 1}));
  const auto full = ActionContexts::build(s);
  EXPECT_EQ(full[3].size(), 3u);
}

TEST(Stats, SubsequentClickDistance) {
  const auto s = make_stream(10, 10, {{0, "a", 0, 0}, {10, "a", 3, 4}});
  const auto d = subsequent_click_distances(s, 3600000);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_DOUBLE_EQ(d[0].mean_distance, 5.0);
  EXPECT_EQ(d[0].pairs, 1u);
}

TEST(Stats, RepeatedPixelGivesZeroDistances) {
  std::vector<Click> clicks;
  for (int i = 0; i < 40; ++i) clicks.push_back({i * 1000000LL, i % 2 ? "a" : "b", 4, 4});
  for (const auto& p : subsequent_click_distances(make_stream(10, 10, clicks), 3600000))
    EXPECT_EQ(p.mean_distance, 0.0);
}

TEST(Stats, NoiseFreeDistancesBoundedByTerritoryDiagonal) {
  SynthConfig cfg;
  cfg.num_users = 60;
  cfg.num_groups = 4;
  cfg.num_events = 20000;
  cfg.noise = 0.0;
  const auto data = generate_synthetic(cfg);
  double max_diag = 0.0;
  for (const auto& r : data.territories)
    max_diag = std::max(max_diag, std::hypot(r.width() - 1, r.height() - 1));
  // brute-force maximum over every consecutive pair of the same user
  std::vector<std::optional<PaintEvent>> last(data.stream.users.size());
  double brute = 0.0;
  for (const auto& e : data.stream.events) {
    if (auto& l = last[e.user]) brute = std::max(brute, std::hypot(e.x - l->x, e.y - l->y));
    last[e.user] = e;
  }
  EXPECT_LE(brute, max_diag + 1e-12);
  for (const auto& p : subsequent_click_distances(data.stream, 60000)) EXPECT_LE(p.mean_distance, max_diag);
}

TEST(Stats, Histograms) {
  const auto s = make_stream(4, 4, {{0, "a", 0, 0}, {1, "a", 1, 0}, {3600000, "a", 1, 0}, {3600001, "b", 2, 2}});
  const auto h = activity_histograms(s);
  EXPECT_EQ(h.user_clicks[0], 3u);
  EXPECT_EQ(h.user_clicks[1], 1u);
  EXPECT_EQ(h.pixel_updates[1], 2u);
  ASSERT_EQ(h.hourly.size(), 2u);
  EXPECT_EQ(h.hourly[0].clicks, 2u);
  EXPECT_EQ(h.hourly[0].unique_users, 1u);
  EXPECT_EQ(h.hourly[1].clicks, 2u);
  EXPECT_EQ(h.hourly[1].unique_users, 2u);
  std::uint64_t total = 0;
  for (const auto& b : h.hourly) total += b.clicks;
  EXPECT_EQ(total, s.size());
  const auto dist = count_distribution(h.user_clicks);
  EXPECT_EQ(dist, (std::vector<std::pair<std::uint64_t, std::uint64_t>>{{1, 1}, {3, 1}}));
}

TEST(Stats, UnusedSeries) {
  const auto s = make_stream(2, 1, {{0, "a", 0, 0}, {5, "a", 0, 0}, {10, "b", 1, 0}});
  const auto series = unused_space_series(s, 10);
  ASSERT_EQ(series.size(), 2u);
  EXPECT_DOUBLE_EQ(series[0].unused_fraction, 0.5);
  EXPECT_DOUBLE_EQ(series[1].unused_fraction, 0.0);
}

TEST(Heatmap, SingleRegionAndTiles) {
  const auto s = make_stream(2, 2, {{0, "a", 0, 0}, {1, "a", 1, 0}, {2, "b", 0, 1}, {3, "b", 1, 1}});
  EXPECT_EQ(heatmap(s, Partition::uniform_tiles(2, 2, 2, 2)), (std::vector<std::uint64_t>{4}));
  EXPECT_EQ(heatmap(s, Partition::uniform_tiles(2, 2, 1, 1)), (std::vector<std::uint64_t>{1, 1, 1, 1}));
}

TEST(Heatmap, AtlasRegionsConserveEvents) {
  SynthConfig cfg;
  cfg.num_events = 5000;
  const auto data = generate_synthetic(cfg);
  auto atlas = data.atlas;
  for (std::size_t p = 0; p < atlas.labels.size(); p += 3) atlas.labels[p].reset();
  const auto part = Partition::from_atlas(atlas);
  const auto counts = heatmap(data.stream, part);
  EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}), data.stream.size());
  EXPECT_EQ(part.region_name(part.region_count() - 1), "unannotated");
}

TEST(Stats, WritesAllFiles) {
  SynthConfig cfg;
  cfg.num_events = 2000;
  const auto data = generate_synthetic(cfg);
  TempDir dir;
  write_stats(data.stream, Partition::uniform_tiles(cfg.width, cfg.height, 10, 10), 3600000, dir.path());
  for (const char* f : {"user_hist.csv", "pixel_hist.csv", "hourly.csv", "unused.csv", "distance.csv", "heatmap.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
}
