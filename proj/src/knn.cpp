#include <algorithm>
#include <numeric>
#include <utility>

#include "urrl/errors.hpp"
#include "urrl/impute.hpp"

namespace urrl {

KnnIndex build_knn_index(const MultiViewDataset& ds, Index max_neighbors) {
  const Index n = ds.num_samples();
  std::vector<std::vector<std::vector<Index>>> lists(static_cast<std::size_t>(ds.num_views()));
  for (Index v = 0; v < ds.num_views(); ++v) {
    auto& per_sample = lists[static_cast<std::size_t>(v)];
    per_sample.resize(static_cast<std::size_t>(n));
    const RowMatrix& x = ds.views[static_cast<std::size_t>(v)];
    std::vector<Index> avail;
    for (Index i = 0; i < n; ++i) {
      if (ds.available(i, v)) avail.push_back(i);
    }
    if (avail.size() < 2) continue;
    std::vector<std::pair<double, Index>> cand;
    cand.reserve(avail.size());
    for (Index i : avail) {
      cand.clear();
      for (Index j : avail) {
        if (j != i) cand.emplace_back(cosine_distance(x.row(i), x.row(j)), j);
      }
      const auto keep = max_neighbors < 0 ? cand.size()
                                          : std::min(cand.size(), static_cast<std::size_t>(max_neighbors));
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end());
      auto& out = per_sample[static_cast<std::size_t>(i)];
      out.reserve(keep);
      for (std::size_t r = 0; r < keep; ++r) out.push_back(cand[r].second);
    }
  }
  return KnnIndex(std::move(lists));
}

ImputedView knn_impute(Index i, Index v, Index k, const MultiViewDataset& ds, const KnnIndex& index,
                       const MaskRow& effective) {
  if (k < 1) throw ContractError("knn_impute: k must be positive");
  const RowMatrix& x = ds.views[static_cast<std::size_t>(v)];
  ImputedView out{RowMatrix::Zero(k, x.cols()), Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>::Zero(k)};
  std::vector<Index> picked;
  if (effective(v)) {
    out.rows.row(0) = x.row(i);
    out.validity(0) = 1;
    const auto nn = index.neighbors(v, i);
    const Index take = std::min<Index>(k - 1, static_cast<Index>(nn.size()));
    for (Index r = 0; r < take; ++r) {
      out.rows.row(r + 1) = x.row(nn[static_cast<std::size_t>(r)]);
      out.validity(r + 1) = 1;
    }
    return out;
  }
  // Rank-major sweep over the sample's remaining views.
  for (Index a = 0; a < k; ++a) {
    for (Index b = 0; b < ds.num_views(); ++b) {
      if (b == v || !effective(b)) continue;
      const auto nn = index.neighbors(b, i);
      if (a >= static_cast<Index>(nn.size())) continue;
      const Index j = nn[static_cast<std::size_t>(a)];
      if (!ds.available(j, v)) continue;
      if (std::find(picked.begin(), picked.end(), j) != picked.end()) continue;
      picked.push_back(j);
    }
  }
  const Index take = std::min<Index>(k, static_cast<Index>(picked.size()));
  for (Index r = 0; r < take; ++r) {
    out.rows.row(r) = x.row(picked[static_cast<std::size_t>(r)]);
    out.validity(r) = 1;
  }
  return out;
}

}  // namespace urrl
