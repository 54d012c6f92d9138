#pragma once

// Losses, optimizer and the two-stage training loop.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "urrl/cluster_init.hpp"
#include "urrl/dataset.hpp"
#include "urrl/impute.hpp"
#include "urrl/network.hpp"

namespace urrl {

/// Masked reconstruction error: sum over views of ||x_hat - x||^2 * m_v,
/// averaged over the batch. `x` and `x_hat` hold one [B, d_v] tensor per view.
Tensor loss_rec(std::span<const Tensor> x, std::span<const Tensor> x_hat, const ViewMask& mask);

/// In-batch cross entropy pulling z'_i towards z_i, with the other clean
/// embeddings as negatives. Distances are Euclidean, not squared.
Tensor loss_aug(const Tensor& z, const Tensor& z_aug);

/// KL(p || q) summed over the batch. `p` is a constant; 0 log 0 = 0.
Tensor loss_clu(const Tensor& q, const RowMatrix& p);

struct LossTerms {
  Tensor rec, aug, clu, total;
};

/// rec + lambda1 * aug + lambda2 * clu; `clu` may be undefined when lambda2 is 0.
Tensor total_loss(const Tensor& rec, const Tensor& aug, const Tensor& clu, double lambda1, double lambda2);

/// Adam moments with decoupled weight decay.
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// `frozen[i]` skips parameter i entirely (no moments, no decay).
  void step(ParamStore& params, std::span<const Eigen::VectorXd> grads, const std::vector<bool>& frozen);
  long steps() const { return t_; }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Eigen::VectorXd> m_, v_;
};

struct TrainConfig {
  int pretrain_epochs = 100;  // E_p
  int joint_epochs = 100;     // E_j
  Index batch_size = 64;
  double learning_rate = 3e-4;
  double weight_decay = 4e-5;
  double lambda1 = 0.001;
  double lambda2 = 0.1;
  KidaOptions kida;
  bool adaptive_phi1 = true;  // phi1 from the dataset's missing fraction
  bool clustering_module = true;
  // Architecture; view_dims and k are taken from the data and `kida.k`.
  // num_clusters <= 0 means the dataset's cluster count; hidden widths <= 0
  // follow embed_dim.
  ModelConfig model = [] {
    ModelConfig m;
    m.num_clusters = 0;
    m.vde_hidden = 0;
    m.decoder_hidden = 0;
    return m;
  }();
  CenterInit center_init = CenterInit::kWard;
  Index center_init_cap = 10000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossRecord {
  int epoch = 0;
  long iter = 0;  // global iteration counter
  double l_rec = 0.0;
  double l_aug = 0.0;
  double l_clu = 0.0;
  double total = 0.0;
};

struct FitResult {
  UrrlModel model;
  std::vector<LossRecord> history;
  bool stage2_skipped = false;
  double phi1 = 0.0;  // view dropout probability actually used
};

/// Deterministic stream seed from a base seed and a tuple of counters.
std::uint64_t mix_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

/// Architecture the trainer builds for `ds` under `cfg`.
ModelConfig resolve_model_config(const MultiViewDataset& ds, const TrainConfig& cfg);

/// Training loop; `on_record` (optional) sees every iteration as it happens.
FitResult fit(const MultiViewDataset& ds, const TrainConfig& cfg,
              const std::function<void(const LossRecord&)>& on_record = {});

/// Clean embeddings of every sample, N x d_e.
RowMatrix embed_dataset(const UrrlModel& model, const MultiViewDataset& ds, const KnnIndex& index,
                        const KidaOptions& opts, Index batch_size = 64);

struct Prediction {
  std::vector<int> labels;  // argmax of q, ties to the lowest cluster index
  RowMatrix q;
  RowMatrix embeddings;
};

Prediction predict(const UrrlModel& model, const MultiViewDataset& ds, const KidaOptions& opts,
                   Index batch_size = 64);

/// Row-wise argmax with ties resolved to the lowest index.
std::vector<int> hard_labels(const RowMatrix& q);

}  // namespace urrl
