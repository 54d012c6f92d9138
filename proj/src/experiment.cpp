#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "urrl/errors.hpp"
#include "urrl/experiment.hpp"

#ifndef URRL_BUILD_ID
#define URRL_BUILD_ID "unknown"
#endif

namespace urrl {

std::string build_id() { return URRL_BUILD_ID; }

MultiViewDataset prepare_dataset(const MultiViewDataset& base, double missing_rate, int missing_per_sample,
                                 std::uint64_t seed) {
  if (missing_rate == 0.0) return base;
  if ((base.mask.array() == 0).any()) {
    throw ProtocolError("missing protocol needs a complete dataset; this one already has missing views");
  }
  const MissingProtocol protocol{missing_rate, missing_per_sample, seed};
  return base.with_mask(generate_missing_mask(base.num_samples(), base.num_views(), protocol));
}

RunResult run_single(const MultiViewDataset& base, const ExperimentSpec& spec, std::uint64_t seed,
                     double missing_rate, std::optional<UrrlModel>* model_out) {
  if (!base.labels) throw ContractError("run: dataset has no labels to evaluate against");
  const MultiViewDataset ds = prepare_dataset(base, missing_rate, spec.missing.missing_per_sample, seed);
  TrainConfig cfg = spec.train;
  cfg.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  FitResult fitted = fit(ds, cfg);
  const Prediction pred = predict(fitted.model, ds, cfg.kida, cfg.batch_size);
  const auto t1 = std::chrono::steady_clock::now();

  RunResult r;
  r.seed = seed;
  r.missing_rate = missing_rate;
  r.scores = evaluate(*ds.labels, pred.labels);
  r.stage2_skipped = fitted.stage2_skipped;
  r.phi1 = fitted.phi1;
  r.seconds = std::chrono::duration<double>(t1 - t0).count();
  r.history = std::move(fitted.history);
  if (model_out) model_out->emplace(std::move(fitted.model));
  return r;
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

// ---------------------------------------------------------------------------

namespace {

RowMatrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  RowMatrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(shape_size(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = n(rng);
  return Tensor::constant(std::move(shape), std::move(v));
}

ModelConfig toy_model(std::uint64_t seed) {
  ModelConfig mc;
  mc.view_dims = {4, 4};
  mc.k = 4;
  mc.embed_dim = 8;
  mc.vde_hidden = 8;
  mc.decoder_hidden = 8;
  mc.num_clusters = 2;
  mc.init_seed = seed;
  return mc;
}

// Weighted sum, so that every output element gets a distinct gradient.
Tensor probe(const Tensor& out, const Tensor& weights) { return sum(mul(out, weights)); }

}  // namespace

std::vector<GradCheckRow> gradcheck_suite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckRow> rows;

  {
    const Tensor x = random_tensor({5, 3}, rng);
    const std::vector<Tensor> params{random_tensor({3, 4}, rng), random_tensor({4}, rng)};
    const Tensor w = random_tensor({5, 4}, rng);
    const auto r = grad_check(
        [&](std::span<const Tensor> p) { return probe(add(matmul(x, p[0]), p[1]), w); }, params);
    rows.push_back({"linear", r.max_rel_error, 1e-6});
  }

  const UrrlModel model(toy_model(seed));
  const std::vector<Tensor>& params = model.params().constants();

  {
    const Index G = 3, k = 4, D = model.config().nde_width(0);
    const Tensor tokens = random_tensor({G, k, D}, rng);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(G * k);
    m[2] = m[3] = -std::numeric_limits<double>::infinity();  // group 0: two padded slots
    m[k + 3] = -std::numeric_limits<double>::infinity();
    const Tensor mask = Tensor::constant({G, 1, k}, m);
    const Tensor w = random_tensor({G, D}, rng);
    const auto r = grad_check(
        [&](std::span<const Tensor> p) { return probe(model.nde_forward(p, 0, tokens, mask), w); }, params);
    rows.push_back({"nde", r.max_rel_error, 1e-4});
  }

  {
    const Index B = 4, V = 2;
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    // Row 2 has view 1 imputed, row 3 lacks view 1 entirely.
    const std::vector<std::vector<Index>> present{{0, 1, 2, 3}, {0, 1, 2}};
    std::vector<Tensor> nde_out;
    for (Index v = 0; v < V; ++v) {
      nde_out.push_back(random_tensor({static_cast<Index>(present[static_cast<std::size_t>(v)].size()),
                                       model.config().nde_width(v)},
                                      rng));
    }
    RowMatrix mask = RowMatrix::Zero(B, V);
    mask(2, 1) = model.config().gamma;
    mask(3, 1) = kNegInf;
    const Tensor w = random_tensor({B, model.config().embed_dim}, rng);
    const auto r = grad_check(
        [&](std::span<const Tensor> p) { return probe(model.vde_forward(p, nde_out, present, mask), w); }, params);
    rows.push_back({"vde", r.max_rel_error, 1e-4});
  }

  {
    const Tensor z = random_tensor({4, model.config().embed_dim}, rng);
    std::vector<Tensor> w;
    for (Index d : model.config().view_dims) w.push_back(random_tensor({4, d}, rng));
    const auto r = grad_check(
        [&](std::span<const Tensor> p) {
          const std::vector<Tensor> out = model.decode(p, z);
          Tensor acc = probe(out[0], w[0]);
          for (std::size_t v = 1; v < out.size(); ++v) acc = add(acc, probe(out[v], w[v]));
          return acc;
        },
        params);
    rows.push_back({"decoder", r.max_rel_error, 1e-4});
  }

  {
    // 4 samples, 2 views; sample 3 lacks view 1. Augmentation draws are
    // fixed up front so the loss is a deterministic function of parameters.
    MultiViewDataset ds;
    ds.views = {random_matrix(4, 4, rng), random_matrix(4, 4, rng)};
    ds.mask = ViewMask::Ones(4, 2);
    ds.mask(3, 1) = 0;
    ds.labels = std::vector<int>{0, 1, 0, 1};
    ds.num_clusters = 2;
    ds.zero_missing();
    KidaOptions opts;
    opts.k = 4;
    opts.aug.phi1 = 0.5;
    const KnnIndex index = build_knn_index(ds, opts.k);
    std::vector<KidaSample> samples;
    for (Index i = 0; i < 4; ++i) {
      std::mt19937_64 srng(seed + static_cast<std::uint64_t>(i));
      samples.push_back(kida(i, ds, index, opts, srng, true));
    }
    const EncoderInput clean = make_encoder_input(samples, false);
    const EncoderInput aug = make_encoder_input(samples, true);
    std::vector<Tensor> targets;
    for (const RowMatrix& x : ds.views) targets.push_back(Tensor::constant(x));

    std::vector<Tensor> full = params;
    full[model.centers_param()] = random_tensor({2, model.config().embed_dim}, rng);
    const RowMatrix p_target =
        target_distribution(model.assign(full, model.encode(full, aug)).matrix());
    const auto loss = [&](std::span<const Tensor> p) {
      const Tensor z = model.encode(p, clean);
      const Tensor z_aug = model.encode(p, aug);
      const Tensor rec = loss_rec(targets, model.decode(p, z_aug), ds.mask);
      return total_loss(rec, loss_aug(z, z_aug), loss_clu(model.assign(p, z_aug), p_target), 1.0, 1.0);
    };
    const auto r = grad_check(loss, full);
    rows.push_back({"full_loss", r.max_rel_error, 1e-4});
  }
  return rows;
}

}  // namespace urrl
