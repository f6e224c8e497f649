#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "collab/embed_model.hpp"
#include "collab/event_log.hpp"

namespace collab {

struct GroupLabels {
  static constexpr std::int64_t kNoise = -1;
  std::vector<std::int64_t> group;  // per table row; kNoise for noise points
  std::size_t groups = 0;

  std::size_t noise_count() const;
};

/// DBSCAN over table rows with the Euclidean metric. Rows are scanned in
/// ascending order; a border point joins the first cluster that reaches it.
/// `min_pts` counts the point itself.
GroupLabels dbscan_groups(const EmbeddingTable& table, double eps, std::size_t min_pts);

/// Copy of `table` with every nonzero row scaled to unit length, the form in
/// which users enter neighbor contexts.
EmbeddingTable normalized_rows(const EmbeddingTable& table);

/// Rank at the largest ratio between consecutive singular values
/// (descending input); 1 when fewer than two values are positive.
std::size_t spectral_gap_rank(std::span<const double> singular_values);

/// Rows centered and projected onto the leading `dims` principal axes.
/// `dims == 0` picks spectral_gap_rank of the centered table.
EmbeddingTable principal_projection(const EmbeddingTable& table, std::size_t dims = 0);

/// Distance from every row to its k-th nearest other row, ascending.
std::vector<double> k_distances(const EmbeddingTable& table, std::size_t k);

/// Elbow of the sorted k-distance curve: the point farthest from the chord
/// joining its endpoints, with both axes scaled to [0, 1].
double k_distance_elbow(std::span<const double> sorted_distances);

inline constexpr std::int64_t kBackground = -2;

/// Group of the last painter of every pixel within events [begin, end);
/// kBackground for pixels untouched in the window. `group_of_user` is
/// indexed by the stream's UserId.
std::vector<std::int64_t> trace_map(const EventStream& stream, std::size_t begin, std::size_t end,
                                    std::span<const std::int64_t> group_of_user);

/// Binary PPM using a fixed palette; noise is gray and background white.
void write_trace_ppm(std::span<const std::int64_t> raster, std::int32_t width, std::int32_t height,
                     const std::filesystem::path& path);

}  // namespace collab
