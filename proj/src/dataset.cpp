#include "urrl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "urrl/errors.hpp"

namespace urrl {

void MultiViewDataset::validate() const {
  const Index n = mask.rows();
  if (mask.cols() != static_cast<Index>(views.size())) {
    throw FormatError("mask: " + std::to_string(mask.cols()) + " columns for " + std::to_string(views.size()) +
                      " views");
  }
  if (views.empty()) throw FormatError("views: dataset has no views");
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].rows() != n) {
      throw FormatError("view " + std::to_string(v) + ": " + std::to_string(views[v].rows()) + " rows, expected " +
                        std::to_string(n));
    }
    if (views[v].cols() <= 0) throw FormatError("view " + std::to_string(v) + ": zero dimension");
  }
  for (Index i = 0; i < n; ++i) {
    int present = 0;
    for (Index v = 0; v < mask.cols(); ++v) {
      if (mask(i, v) > 1) throw FormatError("mask: non-binary entry at sample " + std::to_string(i));
      present += mask(i, v);
    }
    if (present == 0) throw FormatError("mask: sample " + std::to_string(i) + " has no available view");
  }
  if (labels) {
    if (static_cast<Index>(labels->size()) != n) throw FormatError("labels: length differs from sample count");
    for (int l : *labels) {
      if (l < 0 || (num_clusters > 0 && l >= num_clusters)) {
        throw FormatError("labels: value " + std::to_string(l) + " out of range");
      }
    }
  }
}

void MultiViewDataset::zero_missing() {
  for (Index v = 0; v < num_views(); ++v) {
    for (Index i = 0; i < num_samples(); ++i) {
      if (!mask(i, v)) views[static_cast<std::size_t>(v)].row(i).setZero();
    }
  }
}

MultiViewDataset MultiViewDataset::with_mask(const ViewMask& new_mask) const {
  if (new_mask.rows() != num_samples() || new_mask.cols() != num_views()) {
    throw ContractError("with_mask: mask shape mismatch");
  }
  MultiViewDataset out = *this;
  out.mask = new_mask;
  out.zero_missing();
  out.validate();
  return out;
}

ViewMask generate_missing_mask(Index num_samples, Index num_views, const MissingProtocol& protocol) {
  if (num_views < 1) throw ProtocolError("missing protocol: need at least one view");
  if (protocol.missing_rate < 0.0 || protocol.missing_rate > 1.0) {
    throw ProtocolError("missing protocol: missing rate must lie in [0, 1]");
  }
  if (protocol.missing_per_sample < 1 || protocol.missing_per_sample >= num_views) {
    throw ProtocolError("missing protocol: need 1 <= m_n < V, got m_n=" + std::to_string(protocol.missing_per_sample) +
                        " with V=" + std::to_string(num_views));
  }
  ViewMask mask = ViewMask::Ones(num_samples, num_views);
  const auto incomplete = static_cast<Index>(std::floor(static_cast<double>(num_samples) * protocol.missing_rate));
  if (incomplete == 0) return mask;
  std::mt19937_64 rng(protocol.seed);
  std::vector<Index> samples(static_cast<std::size_t>(num_samples));
  std::iota(samples.begin(), samples.end(), Index{0});
  std::shuffle(samples.begin(), samples.end(), rng);
  std::vector<Index> views(static_cast<std::size_t>(num_views));
  for (Index s = 0; s < incomplete; ++s) {
    std::iota(views.begin(), views.end(), Index{0});
    std::shuffle(views.begin(), views.end(), rng);
    for (int j = 0; j < protocol.missing_per_sample; ++j) {
      mask(samples[static_cast<std::size_t>(s)], views[static_cast<std::size_t>(j)]) = 0;
    }
  }
  return mask;
}

double missing_fraction(const ViewMask& mask) {
  if (mask.size() == 0) return 0.0;
  return 1.0 - static_cast<double>(mask.cast<long>().sum()) / static_cast<double>(mask.size());
}

MultiViewDataset synthesize(const SyntheticSpec& spec) {
  if (spec.num_samples < 1 || spec.num_views < 1 || spec.view_dim < 1 || spec.num_clusters < 1) {
    throw ContractError("synthesize: sizes must be positive");
  }
  if (spec.separation < 0.0 || spec.view_noise < 0.0) {
    throw ContractError("synthesize: separation and noise must be non-negative");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index latent = std::max<Index>(spec.latent_dim, spec.num_clusters);

  // Scaled basis vectors: every pair of centers is `separation` apart.
  RowMatrix centers = RowMatrix::Zero(spec.num_clusters, latent);
  for (int c = 0; c < spec.num_clusters; ++c) centers(c, c) = spec.separation / std::sqrt(2.0);

  std::vector<RowMatrix> maps;
  for (Index v = 0; v < spec.num_views; ++v) {
    RowMatrix a(latent, spec.view_dim);
    for (Index r = 0; r < a.rows(); ++r) {
      for (Index c = 0; c < a.cols(); ++c) a(r, c) = normal(rng) / std::sqrt(static_cast<double>(latent));
    }
    maps.push_back(std::move(a));
  }

  MultiViewDataset ds;
  ds.num_clusters = spec.num_clusters;
  ds.mask = ViewMask::Ones(spec.num_samples, spec.num_views);
  std::vector<int> labels(static_cast<std::size_t>(spec.num_samples));
  RowMatrix z(spec.num_samples, latent);
  for (Index i = 0; i < spec.num_samples; ++i) {
    const int c = static_cast<int>(i % spec.num_clusters);
    labels[static_cast<std::size_t>(i)] = c;
    for (Index d = 0; d < latent; ++d) z(i, d) = centers(c, d) + normal(rng);
  }
  for (Index v = 0; v < spec.num_views; ++v) {
    RowMatrix x = z * maps[static_cast<std::size_t>(v)];
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index d = 0; d < x.cols(); ++d) x(i, d) += spec.view_noise * normal(rng);
    }
    ds.views.push_back(std::move(x));
  }
  ds.labels = std::move(labels);
  return ds;
}

}  // namespace urrl
