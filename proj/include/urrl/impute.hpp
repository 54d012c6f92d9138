#pragma once

// Cross-view KNN imputation and the KIDA augmentation pipeline.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "urrl/dataset.hpp"

namespace urrl {

using MaskRow = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>;
// k x V, 1 = slot holds a real vector.
using ValidityMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Cosine distance 1 - cos(a, b); 2 when either vector is zero.
template <class A, class B>
double cosine_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 2.0;
  return 1.0 - a.dot(b) / (na * nb);
}

/// Ranked per-view neighbor lists over available samples.
///
/// For view v and sample i with M(i,v)=1 the list holds other samples j with
/// M(j,v)=1 by ascending cosine distance, ties by ascending id.
class KnnIndex {
 public:
  KnnIndex() = default;
  KnnIndex(std::vector<std::vector<std::vector<Index>>> lists) : lists_(std::move(lists)) {}

  Index num_views() const { return static_cast<Index>(lists_.size()); }
  std::span<const Index> neighbors(Index view, Index sample) const {
    return lists_[static_cast<std::size_t>(view)][static_cast<std::size_t>(sample)];
  }

 private:
  std::vector<std::vector<std::vector<Index>>> lists_;  // [view][sample] -> ranked ids
};

// max_neighbors < 0 keeps complete rankings.
KnnIndex build_knn_index(const MultiViewDataset& ds, Index max_neighbors = -1);

struct ImputedView {
  RowMatrix rows;                                      // k x d_v
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1> validity;  // k
};

/// Neighbor stack for view `v` of sample `i`.
///
/// `effective` is the sample's own mask row (possibly reduced by view
/// dropout); neighbor availability always comes from the dataset mask.
ImputedView knn_impute(Index i, Index v, Index k, const MultiViewDataset& ds, const KnnIndex& index,
                       const MaskRow& effective);

struct AugmentationParams {
  double phi1 = 0.15;    // view dropout probability
  double phi2 = 0.05;    // gaussian noise scale
  double phi3 = 0.05;    // elementwise dropout probability
  double epsilon = 0.15; // floor of the phi1 schedule
};

/// epsilon + (1 - epsilon) * missing_fraction(M)^2
double phi1_schedule(const ViewMask& effective_mask, double epsilon = 0.15);

/// Drops each available view with probability phi1; redraws until at least
/// one view survives.
MaskRow view_dropout(const MaskRow& m, double phi1, std::mt19937_64& rng);

/// x += phi2 * N(0,1), then each element zeroed with probability phi3.
void noise_and_dropout(RowMatrix& x, double phi2, double phi3, std::mt19937_64& rng);

struct KidaOptions {
  Index k = 4;
  AugmentationParams aug;
  bool knn_imputation = true;  // off: own vector only, missing views stay empty
  bool augmentation = true;
};

struct KidaSample {
  std::vector<RowMatrix> clean;      // per view, k x d_v
  std::vector<RowMatrix> augmented;  // per view, k x d_v
  ValidityMatrix clean_validity;     // k x V
  ValidityMatrix aug_validity;       // k x V
  MaskRow view_mask;                 // original mask row
  MaskRow aug_view_mask;             // after view dropout
};

KidaSample kida(Index i, const MultiViewDataset& ds, const KnnIndex& index, const KidaOptions& opts,
                std::mt19937_64& rng, bool training);

}  // namespace urrl
