#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "urrl/tensor.hpp"

namespace urrl {

// N x V availability matrix; 1 = view present.
using ViewMask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// An incomplete multi-view dataset.
///
/// Every sample has at least one available view, and features of missing
/// views are zero. Labels are optional and only read by evaluation.
struct MultiViewDataset {
  std::vector<RowMatrix> views;  // V matrices, N x d_v
  ViewMask mask;                 // N x V
  std::optional<std::vector<int>> labels;
  int num_clusters = 0;  // 0 when unknown

  Index num_samples() const { return mask.rows(); }
  Index num_views() const { return mask.cols(); }
  Index view_dim(Index v) const { return views[static_cast<std::size_t>(v)].cols(); }
  bool available(Index i, Index v) const { return mask(i, v) != 0; }

  // Throws FormatError naming the offending field.
  void validate() const;
  // Zeroes features wherever the mask says missing.
  void zero_missing();
  // Copy with `new_mask` applied to the complete features.
  MultiViewDataset with_mask(const ViewMask& new_mask) const;
};

struct MissingProtocol {
  double missing_rate = 0.0;  // fraction of incomplete samples, in [0, 1]
  int missing_per_sample = 1; // views dropped per incomplete sample, < V
  std::uint64_t seed = 0;
};

/// floor(N * m_r) samples chosen uniformly without replacement lose m_n
/// distinct uniformly chosen views each; all other rows stay complete.
ViewMask generate_missing_mask(Index num_samples, Index num_views, const MissingProtocol& protocol);

/// 1 - sum(M) / (N * V).
double missing_fraction(const ViewMask& mask);

struct SyntheticSpec {
  Index num_samples = 600;
  Index num_views = 2;
  int num_clusters = 3;
  Index view_dim = 20;
  Index latent_dim = 8;
  double separation = 6.0;   // pairwise latent center distance, in latent std units
  double view_noise = 0.1;
  std::uint64_t seed = 0;
};

/// Gaussian clusters in a shared latent space, one random linear map per view.
/// Labels are assigned round-robin, so cluster sizes differ by at most one.
MultiViewDataset synthesize(const SyntheticSpec& spec);

// Binary MVDS container (little-endian, see README).
void save_dataset(const MultiViewDataset& ds, const std::filesystem::path& path);
MultiViewDataset load_dataset(const std::filesystem::path& path);

// Headerless CSV directory: view_<v>.csv, mask.csv, labels.csv (optional).
void save_dataset_csv(const MultiViewDataset& ds, const std::filesystem::path& dir);
MultiViewDataset load_dataset_csv(const std::filesystem::path& dir);

}  // namespace urrl
