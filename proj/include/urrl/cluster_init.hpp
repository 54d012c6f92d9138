#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "urrl/tensor.hpp"

namespace urrl {

/// One agglomeration step. Ids follow the usual linkage-matrix convention:
/// < N are points, N + s is the cluster created at step s.
struct WardMerge {
  Index left;
  Index right;
  double cost;  // increase of the within-cluster sum of squares
  Index size;
};

/// Ward linkage via nearest-neighbor chains and Lance-Williams updates,
/// returned in non-decreasing cost order.
std::vector<WardMerge> ward_linkage(const RowMatrix& points);

/// Cuts the Ward dendrogram into `n_clusters` flat clusters. Labels are
/// numbered by first appearance.
std::vector<int> ward_labels(const RowMatrix& points, int n_clusters);

/// Lloyd iterations from a k-means++ seeding.
std::vector<int> kmeans(const RowMatrix& points, int n_clusters, std::mt19937_64& rng, int max_iter = 100,
                        RowMatrix* centers = nullptr);

enum class CenterInit { kWard, kKmeansPlusPlus };

/// Cluster centers as per-cluster means. Inputs larger than `cap` rows are
/// uniformly subsampled first.
RowMatrix init_centers(const RowMatrix& embeddings, int n_clusters, CenterInit method, Index cap = 10000,
                       std::uint64_t seed = 0);

}  // namespace urrl
