#include <algorithm>

#include "urrl/errors.hpp"
#include "urrl/impute.hpp"

namespace urrl {

namespace {

ImputedView impute_view(Index i, Index v, const MultiViewDataset& ds, const KnnIndex& index,
                        const KidaOptions& opts, const MaskRow& m) {
  if (opts.knn_imputation) return knn_impute(i, v, opts.k, ds, index, m);
  // Ablation: the sample's own vector only, no cross-view hints.
  const RowMatrix& x = ds.views[static_cast<std::size_t>(v)];
  ImputedView out{RowMatrix::Zero(opts.k, x.cols()), Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>::Zero(opts.k)};
  if (m(v)) {
    out.rows.row(0) = x.row(i);
    out.validity(0) = 1;
  }
  return out;
}

void impute_all(Index i, const MultiViewDataset& ds, const KnnIndex& index, const KidaOptions& opts,
                const MaskRow& m, std::vector<RowMatrix>& rows, ValidityMatrix& validity) {
  rows.clear();
  validity.resize(opts.k, ds.num_views());
  for (Index v = 0; v < ds.num_views(); ++v) {
    ImputedView iv = impute_view(i, v, ds, index, opts, m);
    validity.col(v) = iv.validity;
    rows.push_back(std::move(iv.rows));
  }
}

}  // namespace

double phi1_schedule(const ViewMask& effective_mask, double epsilon) {
  if (epsilon < 0.0 || epsilon >= 1.0) throw ContractError("phi1_schedule: epsilon must lie in [0, 1)");
  const double f = missing_fraction(effective_mask);
  return epsilon + (1.0 - epsilon) * f * f;
}

MaskRow view_dropout(const MaskRow& m, double phi1, std::mt19937_64& rng) {
  if (m.cast<int>().sum() == 0) throw ContractError("view_dropout: mask row has no available view");
  if (phi1 <= 0.0) return m;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (phi1 >= 1.0) {
    // Everything would drop; keep one available view at random.
    std::vector<Index> avail;
    for (Index v = 0; v < m.size(); ++v) {
      if (m(v)) avail.push_back(v);
    }
    std::uniform_int_distribution<std::size_t> pick(0, avail.size() - 1);
    MaskRow out = MaskRow::Zero(m.size());
    out(avail[pick(rng)]) = 1;
    return out;
  }
  MaskRow out(m.size());
  for (;;) {
    int kept = 0;
    for (Index v = 0; v < m.size(); ++v) {
      const bool drop = m(v) && unit(rng) < phi1;
      out(v) = (m(v) && !drop) ? 1 : 0;
      kept += out(v);
    }
    if (kept > 0) return out;
  }
}

void noise_and_dropout(RowMatrix& x, double phi2, double phi3, std::mt19937_64& rng) {
  if (phi2 == 0.0 && phi3 == 0.0) return;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index k = 0; k < x.size(); ++k) {
    double& e = x.data()[k];
    if (phi2 != 0.0) e += phi2 * normal(rng);
    if (phi3 != 0.0 && unit(rng) < phi3) e = 0.0;
  }
}

KidaSample kida(Index i, const MultiViewDataset& ds, const KnnIndex& index, const KidaOptions& opts,
                std::mt19937_64& rng, bool training) {
  KidaSample s;
  s.view_mask = ds.mask.row(i).transpose();
  impute_all(i, ds, index, opts, s.view_mask, s.clean, s.clean_validity);
  if (!training || !opts.augmentation) {
    s.augmented = s.clean;
    s.aug_validity = s.clean_validity;
    s.aug_view_mask = s.view_mask;
    return s;
  }
  s.aug_view_mask = view_dropout(s.view_mask, opts.aug.phi1, rng);
  impute_all(i, ds, index, opts, s.aug_view_mask, s.augmented, s.aug_validity);
  for (RowMatrix& x : s.augmented) noise_and_dropout(x, opts.aug.phi2, opts.aug.phi3, rng);
  return s;
}

}  // namespace urrl
