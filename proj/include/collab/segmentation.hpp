#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "collab/canvas_state.hpp"
#include "collab/embed_model.hpp"
#include "collab/event_log.hpp"

namespace collab {

/// Per-pixel embedding of the pixel's final painter. Never-painted pixels
/// carry a zero vector and present == 0.
struct FingerprintMap {
  std::int32_t width = 0;
  std::int32_t height = 0;
  std::size_t dim = 0;
  std::vector<double> values;          // pixel-major, dim per pixel
  std::vector<std::uint8_t> present;   // 1 iff the pixel was ever updated
  std::size_t unknown_painters = 0;    // painted pixels whose painter is not in the model

  std::size_t pixel_count() const { return present.size(); }
  std::span<const double> at(std::size_t pixel) const { return {values.data() + pixel * dim, dim}; }
};

FingerprintMap fingerprint_canvas(const CanvasGrid& grid, const UserTable& users,
                                  const EmbeddingTable& table);

struct SegmentationResult {
  std::int32_t width = 0;
  std::int32_t height = 0;
  std::vector<std::uint32_t> labels;  // row-major, in [0, clusters)
  std::size_t clusters = 0;
};

struct MergeStep {
  std::uint32_t a = 0;  // any member pixel of each merged cluster
  std::uint32_t b = 0;
  double cost = 0.0;    // increase of the total within-cluster sum of squares
};

/// Sequence of Ward merges restricted to 4-adjacent clusters. The cheapest
/// admissible merge is taken first; equal costs are ordered by the
/// lexicographically smallest (x, y) member of each cluster.
class Dendrogram {
 public:
  /// Merges until `stop_at` clusters remain (1 builds the full hierarchy).
  static Dendrogram build(const FingerprintMap& fp, std::size_t stop_at = 1);

  std::size_t leaves() const { return leaves_; }
  std::span<const MergeStep> merges() const { return merges_; }
  std::size_t min_clusters() const { return leaves_ - merges_.size(); }

  /// Partition after the first leaves - clusters merges. Labels are numbered
  /// by first appearance in row-major order.
  SegmentationResult cut(std::size_t clusters) const;
  /// Cuts at several cluster counts in one pass over the merges.
  std::vector<SegmentationResult> cuts(std::span<const std::size_t> clusters) const;

 private:
  std::int32_t width_ = 0;
  std::int32_t height_ = 0;
  std::size_t leaves_ = 0;
  std::vector<MergeStep> merges_;
};

/// Throws std::invalid_argument unless 1 <= clusters <= pixel count.
SegmentationResult agglomerate(const FingerprintMap& fp, std::size_t clusters);

/// Sum over clusters of squared distances to the cluster mean.
double within_cluster_ss(const FingerprintMap& fp, std::span<const std::uint32_t> labels);

/// Adjusted Rand index over the positions where `mask` is nonzero (all
/// positions when `mask` is empty). Returns 1 when both partitions are
/// trivial in the same way.
double adjusted_rand_index(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                           std::span<const std::uint8_t> mask = {});

/// ARI of a segmentation against the annotated pixels of an atlas.
double segmentation_ari(const SegmentationResult& seg, const AtlasLabels& atlas);

struct ClusterSearch {
  std::size_t best_clusters = 0;
  double best_ari = 0.0;
  std::vector<std::pair<std::size_t, double>> curve;  // (C, ARI), ascending C
};

/// One dendrogram, one cut per candidate; ties keep the smaller C.
ClusterSearch search_cluster_count(const FingerprintMap& fp, const AtlasLabels& atlas,
                                   std::span<const std::size_t> candidates);

ClusterSearch search_cluster_count(const Dendrogram& dendrogram, const AtlasLabels& atlas,
                                   std::span<const std::size_t> candidates);

/// Geometric candidates between lo and hi (inclusive), roughly `steps` values.
std::vector<std::size_t> geometric_candidates(std::size_t lo, std::size_t hi, std::size_t steps);
/// Every integer within +-radius of center, clipped to [1, max].
std::vector<std::size_t> local_candidates(std::size_t center, std::size_t radius, std::size_t max);

/// True iff every label forms one 4-connected region.
bool clusters_connected(const SegmentationResult& seg);

void write_segmentation_csv(const SegmentationResult& seg, const std::filesystem::path& path);
void write_ari_curve(const ClusterSearch& search, const std::filesystem::path& path);
/// Binary PGM with labels spread over the gray range.
void write_label_pgm(const SegmentationResult& seg, const std::filesystem::path& path);

}  // namespace collab
