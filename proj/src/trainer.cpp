#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "urrl/errors.hpp"
#include "urrl/training.hpp"

namespace urrl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Salts for the independent random streams of a run.
enum Stream : std::uint64_t { kInit = 1, kShuffle = 2, kSample = 3, kCenters = 4 };

struct Batch {
  EncoderInput clean;
  EncoderInput augmented;
  std::vector<Tensor> targets;  // per view [B, d_v]
  ViewMask mask;                // original availability of the batch rows
};

Batch make_batch(const MultiViewDataset& ds, std::span<const Index> ids, std::span<const KidaSample> samples,
                 bool augmented) {
  Batch b;
  b.clean = make_encoder_input(samples, false);
  if (augmented) b.augmented = make_encoder_input(samples, true);
  const Index B = static_cast<Index>(ids.size());
  b.mask.resize(B, ds.num_views());
  for (Index r = 0; r < B; ++r) b.mask.row(r) = ds.mask.row(ids[static_cast<std::size_t>(r)]);
  for (Index v = 0; v < ds.num_views(); ++v) {
    const RowMatrix& x = ds.views[static_cast<std::size_t>(v)];
    RowMatrix t(B, x.cols());
    for (Index r = 0; r < B; ++r) t.row(r) = x.row(ids[static_cast<std::size_t>(r)]);
    b.targets.push_back(Tensor::constant(t));
  }
  return b;
}

void require_finite(const Tensor& t, const char* term, int epoch, long iter) {
  if (t.defined() && !std::isfinite(t.item())) {
    throw DivergenceError(std::string("non-finite ") + term + " at epoch " + std::to_string(epoch) + ", iteration " +
                          std::to_string(iter));
  }
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

void TrainConfig::validate() const {
  if (pretrain_epochs < 0 || joint_epochs < 0) throw ContractError("train: epoch counts must be non-negative");
  if (batch_size < 1) throw ContractError("train: batch size must be positive");
  if (!(learning_rate > 0.0)) throw ContractError("train: learning rate must be positive");
  if (weight_decay < 0.0 || lambda1 < 0.0 || lambda2 < 0.0) {
    throw ContractError("train: weight decay and loss weights must be non-negative");
  }
  if (kida.k < 1) throw ContractError("train: k must be positive");
  const AugmentationParams& a = kida.aug;
  if (a.phi1 < 0.0 || a.phi1 > 1.0 || a.phi3 < 0.0 || a.phi3 > 1.0 || a.phi2 < 0.0) {
    throw ContractError("train: augmentation probabilities must lie in [0, 1] and phi2 >= 0");
  }
  if (a.epsilon < 0.0 || a.epsilon >= 1.0) throw ContractError("train: epsilon must lie in [0, 1)");
  if (center_init_cap < 1) throw ContractError("train: center init cap must be positive");
}

ModelConfig resolve_model_config(const MultiViewDataset& ds, const TrainConfig& cfg) {
  ModelConfig mc = cfg.model;
  mc.view_dims.clear();
  for (Index v = 0; v < ds.num_views(); ++v) mc.view_dims.push_back(ds.view_dim(v));
  mc.k = cfg.kida.k;
  if (mc.vde_hidden <= 0) mc.vde_hidden = mc.embed_dim;
  if (mc.decoder_hidden <= 0) mc.decoder_hidden = mc.embed_dim;
  if (mc.num_clusters <= 0) {
    if (ds.num_clusters <= 0) throw ContractError("train: cluster count unknown; set num_clusters");
    mc.num_clusters = ds.num_clusters;
  }
  mc.init_seed = mix_seed(cfg.seed, {kInit});
  mc.validate();
  return mc;
}

FitResult fit(const MultiViewDataset& ds, const TrainConfig& cfg,
              const std::function<void(const LossRecord&)>& on_record) {
  cfg.validate();
  ds.validate();
  KidaOptions opts = cfg.kida;
  if (cfg.adaptive_phi1) opts.aug.phi1 = phi1_schedule(ds.mask, opts.aug.epsilon);
  FitResult result{UrrlModel(resolve_model_config(ds, cfg)), {}, false, opts.aug.phi1};
  UrrlModel& model = result.model;
  const int d_c = model.config().num_clusters;
  if (ds.num_samples() < d_c) throw ContractError("train: fewer samples than clusters");

  const KnnIndex index = build_knn_index(ds, opts.k);
  const Index N = ds.num_samples();
  const Index B = std::min(cfg.batch_size, N);
  const int joint_epochs = cfg.clustering_module ? cfg.joint_epochs : 0;
  result.stage2_skipped = joint_epochs == 0;

  AdamW opt(cfg.learning_rate, cfg.weight_decay);
  std::vector<bool> frozen(model.params().size(), false);
  long iter = 0;

  auto run_epoch = [&](int epoch, bool joint) {
    std::vector<Index> order(static_cast<std::size_t>(N));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, {kShuffle, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    frozen[model.centers_param()] = !joint;
    for (Index start = 0; start < N; start += B) {
      const std::span<const Index> ids(order.data() + start, static_cast<std::size_t>(std::min(B, N - start)));
      std::vector<KidaSample> samples;
      samples.reserve(ids.size());
      for (Index id : ids) {
        std::mt19937_64 rng(mix_seed(cfg.seed, {kSample, static_cast<std::uint64_t>(epoch),
                                                static_cast<std::uint64_t>(iter), static_cast<std::uint64_t>(id)}));
        samples.push_back(kida(id, ds, index, opts, rng, true));
      }
      const Batch batch = make_batch(ds, ids, samples, opts.augmentation);

      Tape tape;
      const std::vector<Tensor> p = model.params().bind(tape);
      const Tensor z = model.encode(p, batch.clean);
      const Tensor z_aug = opts.augmentation ? model.encode(p, batch.augmented) : z;
      const std::vector<Tensor> x_hat = model.decode(p, z_aug);

      const Tensor rec = loss_rec(batch.targets, x_hat, batch.mask);
      const Tensor aug = loss_aug(z, z_aug);
      Tensor clu;
      if (joint) {
        const Tensor q = model.assign(p, z_aug);
        clu = loss_clu(q, target_distribution(q.matrix()));
      }
      const Tensor total = total_loss(rec, aug, clu, cfg.lambda1, joint ? cfg.lambda2 : 0.0);
      require_finite(rec, "L_rec", epoch, iter);
      require_finite(aug, "L_aug", epoch, iter);
      require_finite(clu, "L_clu", epoch, iter);
      require_finite(total, "total loss", epoch, iter);

      tape.backward(total);
      std::vector<Eigen::VectorXd> grads;
      grads.reserve(p.size());
      for (const Tensor& t : p) grads.push_back(tape.grad(t));
      opt.step(model.params(), grads, frozen);

      const LossRecord rec_row{epoch, iter, rec.item(), aug.item(), clu.defined() ? clu.item() : 0.0, total.item()};
      result.history.push_back(rec_row);
      if (on_record) on_record(rec_row);
      ++iter;
    }
  };

  for (int e = 0; e < cfg.pretrain_epochs; ++e) run_epoch(e, false);

  const RowMatrix emb = embed_dataset(model, ds, index, opts, B);
  const RowMatrix centers =
      init_centers(emb, d_c, cfg.center_init, cfg.center_init_cap, mix_seed(cfg.seed, {kCenters}));
  model.params().set(model.centers_param(), Eigen::Map<const Eigen::VectorXd>(centers.data(), centers.size()));

  for (int e = 0; e < joint_epochs; ++e) run_epoch(cfg.pretrain_epochs + e, true);
  return result;
}

RowMatrix embed_dataset(const UrrlModel& model, const MultiViewDataset& ds, const KnnIndex& index,
                        const KidaOptions& opts, Index batch_size) {
  const Index N = ds.num_samples();
  const Index B = std::max<Index>(1, batch_size);
  RowMatrix out(N, model.config().embed_dim);
  std::mt19937_64 unused(0);
  for (Index start = 0; start < N; start += B) {
    const Index n = std::min(B, N - start);
    std::vector<KidaSample> samples;
    samples.reserve(static_cast<std::size_t>(n));
    for (Index i = start; i < start + n; ++i) samples.push_back(kida(i, ds, index, opts, unused, false));
    const Tensor z = model.encode(model.params().constants(), make_encoder_input(samples, false));
    out.middleRows(start, n) = z.matrix();
  }
  return out;
}

std::vector<int> hard_labels(const RowMatrix& q) {
  std::vector<int> labels(static_cast<std::size_t>(q.rows()));
  for (Index i = 0; i < q.rows(); ++i) {
    int best = 0;
    for (Index j = 1; j < q.cols(); ++j) {
      if (q(i, j) > q(i, best)) best = static_cast<int>(j);
    }
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

Prediction predict(const UrrlModel& model, const MultiViewDataset& ds, const KidaOptions& opts, Index batch_size) {
  ds.validate();
  KidaOptions o = opts;
  o.k = model.config().k;
  const KnnIndex index = build_knn_index(ds, o.k);
  Prediction pred;
  pred.embeddings = embed_dataset(model, ds, index, o, batch_size);
  const Tensor q =
      soft_assign(Tensor::constant(pred.embeddings), model.params().value(model.centers_param()));
  pred.q = q.matrix();
  pred.labels = hard_labels(pred.q);
  return pred;
}

}  // namespace urrl
