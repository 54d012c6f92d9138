#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "urrl/errors.hpp"
#include "urrl/training.hpp"

using namespace urrl;

namespace {

RowMatrix randn(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  RowMatrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Tensor mat(Index r, Index c, std::initializer_list<double> v) {
  return Tensor::constant({r, c}, Eigen::Map<const Eigen::VectorXd>(v.begin(), static_cast<Index>(v.size())));
}

// Greedy agglomeration: at every step merge the pair with the smallest
// increase in within-cluster sum of squares, scanning all pairs.
std::vector<std::pair<std::set<Index>, double>> greedy_ward(const RowMatrix& x) {
  std::vector<std::set<Index>> clusters;
  for (Index i = 0; i < x.rows(); ++i) clusters.push_back({i});
  const auto sse = [&](const std::set<Index>& s) {
    Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(x.cols());
    for (Index i : s) mu += x.row(i);
    mu /= static_cast<double>(s.size());
    double t = 0;
    for (Index i : s) t += (x.row(i) - mu).squaredNorm();
    return t;
  };
  std::vector<std::pair<std::set<Index>, double>> merges;
  while (clusters.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        std::set<Index> u = clusters[a];
        u.insert(clusters[b].begin(), clusters[b].end());
        const double inc = sse(u) - sse(clusters[a]) - sse(clusters[b]);
        if (inc < best) {
          best = inc;
          ba = a;
          bb = b;
        }
      }
    }
    std::set<Index> u = clusters[ba];
    u.insert(clusters[bb].begin(), clusters[bb].end());
    merges.emplace_back(u, best);
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
    clusters[ba] = u;
  }
  return merges;
}

// Member sets of each linkage step, reconstructed from the id convention.
std::vector<std::set<Index>> merge_sets(const std::vector<WardMerge>& merges, Index n) {
  std::vector<std::set<Index>> members;
  for (Index i = 0; i < n; ++i) members.push_back({i});
  std::vector<std::set<Index>> out;
  for (const WardMerge& m : merges) {
    std::set<Index> u = members[static_cast<std::size_t>(m.left)];
    const auto& r = members[static_cast<std::size_t>(m.right)];
    u.insert(r.begin(), r.end());
    members.push_back(u);
    out.push_back(u);
  }
  return out;
}

MultiViewDataset tiny_dataset(std::uint64_t seed, Index n = 48) {
  SyntheticSpec s;
  s.num_samples = n;
  s.view_dim = 6;
  s.seed = seed;
  MultiViewDataset ds = synthesize(s);
  return ds.with_mask(generate_missing_mask(n, 2, {0.5, 1, seed}));
}

TrainConfig tiny_config(int ep, int ej) {
  TrainConfig c;
  c.pretrain_epochs = ep;
  c.joint_epochs = ej;
  c.batch_size = 16;
  c.model.embed_dim = 16;
  c.kida.k = 2;  // d_v + k = 8, divisible by 4 heads
  return c;
}

}  // namespace

TEST(LossRec, Examples) {
  const std::vector<Tensor> x{mat(1, 2, {1, 0})}, perfect{mat(1, 2, {1, 0})}, off{mat(1, 2, {0, 0})};
  const ViewMask m = ViewMask::Ones(1, 1);
  EXPECT_DOUBLE_EQ(loss_rec(x, perfect, m).item(), 0.0);
  EXPECT_DOUBLE_EQ(loss_rec(x, off, m).item(), 1.0);
  EXPECT_DOUBLE_EQ(loss_rec(x, off, ViewMask::Zero(1, 1)).item(), 0.0);
}

TEST(LossRec, AveragesOverBatchAndSumsOverViews) {
  const std::vector<Tensor> x{mat(2, 1, {0, 0}), mat(2, 2, {0, 0, 0, 0})};
  const std::vector<Tensor> xh{mat(2, 1, {1, 2}), mat(2, 2, {1, 1, 3, 0})};
  ViewMask m(2, 2);
  m << 1, 1, 1, 0;
  // (1 + 2) + (4 + 0) over two samples.
  EXPECT_DOUBLE_EQ(loss_rec(x, xh, m).item(), 3.5);
}

TEST(LossAug, Examples) {
  EXPECT_DOUBLE_EQ(loss_aug(mat(1, 2, {1, 2}), mat(1, 2, {5, -1})).item(), 0.0);
  // z'_1 = z_1, z_2 one unit away; z'_2 far from everything but z_2.
  const Tensor z = mat(2, 1, {0, 1});
  const Tensor za = mat(2, 1, {0, 1});
  const double term = std::log(1 + std::exp(-1.0));
  EXPECT_NEAR(term, 0.3133, 5e-5);
  EXPECT_NEAR(loss_aug(z, za).item(), term, 1e-15);
  const Tensor far = mat(3, 1, {0, 1e4, -1e4});
  EXPECT_NEAR(loss_aug(far, far).item(), 0.0, 1e-15);
}

TEST(LossClu, Examples) {
  RowMatrix p(1, 2);
  p << 1, 0;
  EXPECT_NEAR(loss_clu(mat(1, 2, {0.5, 0.5}), p).item(), std::log(2.0), 1e-15);
  RowMatrix q(2, 3);
  q << 0.2, 0.3, 0.5, 0.6, 0.1, 0.3;
  EXPECT_NEAR(loss_clu(Tensor::constant(q), q).item(), 0.0, 1e-15);
}

TEST(LossClu, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const Tensor q = soft_assign(Tensor::constant(randn(6, 3, rng)), Tensor::constant(randn(4, 3, rng)));
    const RowMatrix p = target_distribution(soft_assign(Tensor::constant(randn(6, 3, rng)),
                                                        Tensor::constant(randn(4, 3, rng)))
                                                .matrix());
    EXPECT_GE(loss_clu(q, p).item(), -1e-15);
  }
}

TEST(LossClu, TargetIsDetached) {
  std::mt19937_64 rng(3);
  const Tensor centers = Tensor::constant(randn(3, 4, rng));
  const Tensor z0 = Tensor::constant(randn(5, 4, rng));
  const RowMatrix p_fixed = target_distribution(soft_assign(z0, centers).matrix());

  // Analytic gradient with p computed inside the graph from q's values...
  Tape tape;
  const Tensor z = tape.variable(z0);
  const Tensor q = soft_assign(z, centers);
  const Tensor loss = loss_clu(q, target_distribution(q.matrix()));
  tape.backward(loss);
  const Eigen::VectorXd analytic = tape.grad(z);

  // ...equals finite differences of the loss with p held fixed.
  const double h = 1e-6;
  for (Index i = 0; i < z0.size(); ++i) {
    Eigen::VectorXd plus = z0.values(), minus = z0.values();
    plus[i] += h;
    minus[i] -= h;
    const double fp = loss_clu(soft_assign(Tensor::constant(z0.shape(), plus), centers), p_fixed).item();
    const double fm = loss_clu(soft_assign(Tensor::constant(z0.shape(), minus), centers), p_fixed).item();
    EXPECT_NEAR(analytic[i], (fp - fm) / (2 * h), 1e-7);
  }

  // Perturbing p moves the value only.
  RowMatrix p2 = p_fixed;
  p2.row(0) = p2.row(0).reverse().eval();
  EXPECT_NE(loss_clu(soft_assign(z0, centers), p2).item(), loss_clu(soft_assign(z0, centers), p_fixed).item());
}

TEST(TotalLoss, Weighting) {
  const Tensor rec = Tensor::scalar(2.0), aug = Tensor::scalar(3.0), clu = Tensor::scalar(5.0);
  EXPECT_DOUBLE_EQ(total_loss(rec, aug, clu, 0.0, 0.0).item(), 2.0);
  EXPECT_DOUBLE_EQ(total_loss(rec, aug, Tensor{}, 0.001, 0.0).item(), 2.0 + 0.001 * 3.0);
  EXPECT_DOUBLE_EQ(total_loss(rec, aug, clu, 0.001, 0.1).item(), 2.0 + 0.001 * 3.0 + 0.1 * 5.0);
  EXPECT_THROW(total_loss(rec, aug, Tensor{}, 0.001, 0.1), ContractError);
}

TEST(AdamW, FirstStepMatchesHandComputation) {
  ParamStore ps;
  ps.add("a", Tensor::constant({2}, Eigen::Vector2d(1.0, -2.0)));
  ps.add("b", Tensor::constant({1}, Eigen::VectorXd::Constant(1, 3.0)));
  AdamW opt(0.1, 0.01);
  const std::vector<Eigen::VectorXd> g{Eigen::Vector2d(0.5, -4.0), Eigen::VectorXd::Constant(1, 1.0)};
  opt.step(ps, g, {false, true});
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  const double eps = 1e-8;
  EXPECT_DOUBLE_EQ(ps.value(0)[0], 1.0 * (1 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + eps));
  EXPECT_DOUBLE_EQ(ps.value(0)[1], -2.0 * (1 - 0.1 * 0.01) - 0.1 * -4.0 / (4.0 + eps));
  EXPECT_EQ(ps.value(1)[0], 3.0);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(AdamW, SecondStepUsesBiasCorrectedMoments) {
  ParamStore ps;
  ps.add("w", Tensor::constant({1}, Eigen::VectorXd::Constant(1, 0.0)));
  AdamW opt(1.0, 0.0);
  opt.step(ps, std::vector<Eigen::VectorXd>{Eigen::VectorXd::Constant(1, 1.0)}, {false});
  opt.step(ps, std::vector<Eigen::VectorXd>{Eigen::VectorXd::Constant(1, 3.0)}, {false});
  const double m = (0.9 * 0.1 * 1 + 0.1 * 3) / (1 - 0.81);
  const double v = (0.999 * 0.001 * 1 + 0.001 * 9) / (1 - 0.999 * 0.999);
  EXPECT_NEAR(ps.value(0)[0], -1.0 / (1.0 + 1e-8) - m / (std::sqrt(v) + 1e-8), 1e-12);
}

TEST(Ward, FivePointLineMergeOrder) {
  RowMatrix x(5, 1);
  x << 0, 1, 3, 6, 10;
  const auto merges = ward_linkage(x);
  const auto oracle = greedy_ward(x);
  ASSERT_EQ(merges.size(), 4u);
  const auto sets = merge_sets(merges, 5);
  for (std::size_t s = 0; s < 4; ++s) {
    EXPECT_EQ(sets[s], oracle[s].first) << "step " << s;
    EXPECT_NEAR(merges[s].cost, oracle[s].second, 1e-12);
    EXPECT_EQ(merges[s].size, static_cast<Index>(sets[s].size()));
  }
  EXPECT_EQ(merges[0].left, 0);
  EXPECT_EQ(merges[0].right, 1);
}

TEST(Ward, MatchesGreedyOracleOnRandomPoints) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 40; ++t) {
    const Index n = 2 + t % 9;
    const RowMatrix x = randn(n, 3, rng);
    const auto merges = ward_linkage(x);
    const auto oracle = greedy_ward(x);
    const auto sets = merge_sets(merges, n);
    for (std::size_t s = 0; s < oracle.size(); ++s) {
      EXPECT_EQ(sets[s], oracle[s].first) << "instance " << t << " step " << s;
      EXPECT_NEAR(merges[s].cost, oracle[s].second, 1e-9);
    }
  }
}

TEST(Ward, LabelsNumberedByFirstAppearance) {
  RowMatrix x(6, 1);
  x << 10, 0, 10.5, 0.2, 20, 0.1;
  EXPECT_EQ(ward_labels(x, 3), (std::vector<int>{0, 1, 0, 1, 2, 1}));
}

TEST(InitCenters, OnePointPerCluster) {
  std::mt19937_64 rng(1);
  const RowMatrix x = randn(4, 3, rng);
  EXPECT_EQ(init_centers(x, 4, CenterInit::kWard), x);
  EXPECT_THROW(init_centers(x, 5, CenterInit::kWard), ContractError);
}

TEST(InitCenters, TwoBlobs) {
  std::mt19937_64 rng(5);
  RowMatrix x = randn(200, 2, rng) * 0.3;
  x.bottomRows(100).col(0).array() += 10.0;
  const Eigen::RowVectorXd m0 = x.topRows(100).colwise().mean(), m1 = x.bottomRows(100).colwise().mean();
  for (CenterInit method : {CenterInit::kWard, CenterInit::kKmeansPlusPlus}) {
    RowMatrix c = init_centers(x, 2, method, 10000, 3);
    if (c(0, 0) > c(1, 0)) c.row(0).swap(c.row(1));
    EXPECT_LT((c.row(0) - m0).norm(), 0.1);
    EXPECT_LT((c.row(1) - m1).norm(), 0.1);
  }
  // Subsampled: still close to the blob means.
  RowMatrix c = init_centers(x, 2, CenterInit::kWard, 50, 3);
  if (c(0, 0) > c(1, 0)) c.row(0).swap(c.row(1));
  EXPECT_LT((c.row(0) - m0).norm(), 0.3);
  EXPECT_LT((c.row(1) - m1).norm(), 0.3);
}

TEST(Predict, HardLabelTies) {
  RowMatrix q(3, 2);
  q << 0.7, 0.3, 0.5, 0.5, 0.2, 0.8;
  EXPECT_EQ(hard_labels(q), (std::vector<int>{0, 0, 1}));
  EXPECT_EQ(hard_labels(q * 3.7), hard_labels(q));
}

TEST(MixSeed, DistinctStreams) {
  EXPECT_EQ(mix_seed(1, {2, 3}), mix_seed(1, {2, 3}));
  EXPECT_NE(mix_seed(1, {2, 3}), mix_seed(1, {3, 2}));
  EXPECT_NE(mix_seed(1, {2}), mix_seed(2, {2}));
}

TEST(Fit, NoEpochsGivesEmptyHistory) {
  const MultiViewDataset ds = tiny_dataset(0);
  const FitResult r = fit(ds, tiny_config(0, 0));
  EXPECT_TRUE(r.history.empty());
  EXPECT_TRUE(r.stage2_skipped);
  EXPECT_TRUE(r.model.params().value(r.model.centers_param()).values().allFinite());
  const UrrlModel fresh(resolve_model_config(ds, tiny_config(0, 0)));
  for (std::size_t i = 0; i < fresh.params().size(); ++i) {
    if (i == fresh.centers_param()) continue;
    EXPECT_EQ(r.model.params().value(i).values(), fresh.params().value(i).values());
  }
}

TEST(Fit, HiddenWidthsFollowEmbedding) {
  const ModelConfig mc = resolve_model_config(tiny_dataset(0), tiny_config(1, 1));
  EXPECT_EQ(mc.vde_hidden, 16);
  EXPECT_EQ(mc.decoder_hidden, 16);
  EXPECT_EQ(mc.num_clusters, 3);
  EXPECT_EQ(mc.k, 2);
}

TEST(Fit, BitwiseDeterministic) {
  const MultiViewDataset ds = tiny_dataset(1);
  const TrainConfig cfg = tiny_config(2, 2);
  const FitResult a = fit(ds, cfg), b = fit(ds, cfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].total, b.history[i].total);
    EXPECT_EQ(a.history[i].l_clu, b.history[i].l_clu);
  }
  for (std::size_t i = 0; i < a.model.params().size(); ++i) {
    EXPECT_EQ(a.model.params().value(i).values(), b.model.params().value(i).values());
  }
}

TEST(Fit, HistoryShapeAndStages) {
  const MultiViewDataset ds = tiny_dataset(2);
  std::vector<LossRecord> seen;
  const FitResult r = fit(ds, tiny_config(2, 1), [&](const LossRecord& rec) { seen.push_back(rec); });
  // ceil(48 / 16) iterations per epoch, three epochs.
  ASSERT_EQ(r.history.size(), 9u);
  EXPECT_EQ(seen.size(), 9u);
  for (const LossRecord& rec : r.history) {
    EXPECT_TRUE(std::isfinite(rec.total));
    EXPECT_GE(rec.l_rec, 0.0);
    EXPECT_GE(rec.l_clu, 0.0);
    if (rec.epoch < 2) {
      EXPECT_EQ(rec.l_clu, 0.0);
    }
  }
  EXPECT_GT(r.history.back().l_clu, 0.0);
  EXPECT_EQ(r.history.back().iter, 8);
  EXPECT_FALSE(r.stage2_skipped);
}

TEST(Fit, CentersFrozenDuringPretraining) {
  const MultiViewDataset ds = tiny_dataset(3);
  TrainConfig cfg = tiny_config(2, 0);
  const FitResult a = fit(ds, cfg);
  // Centers come from the post-stage-1 embeddings, never from gradient steps.
  const RowMatrix emb = embed_dataset(a.model, ds, build_knn_index(ds, cfg.kida.k), [&] {
    KidaOptions o = cfg.kida;
    o.aug.phi1 = a.phi1;
    return o;
  }(), cfg.batch_size);
  const RowMatrix expect = init_centers(emb, 3, CenterInit::kWard, 10000, mix_seed(cfg.seed, {4}));
  EXPECT_EQ(a.model.params().value(a.model.centers_param()).values(),
            Eigen::Map<const Eigen::VectorXd>(expect.data(), expect.size()));
}

TEST(Fit, ClusteringModuleOffSkipsStageTwo) {
  TrainConfig cfg = tiny_config(1, 3);
  cfg.clustering_module = false;
  const FitResult r = fit(tiny_dataset(4), cfg);
  EXPECT_TRUE(r.stage2_skipped);
  EXPECT_EQ(r.history.size(), 3u);
}

TEST(Fit, AdaptivePhi1FollowsMissingFraction) {
  const MultiViewDataset ds = tiny_dataset(5);
  const FitResult r = fit(ds, tiny_config(0, 0));
  EXPECT_DOUBLE_EQ(r.phi1, phi1_schedule(ds.mask, 0.15));
  TrainConfig fixed = tiny_config(0, 0);
  fixed.adaptive_phi1 = false;
  fixed.kida.aug.phi1 = 0.4;
  EXPECT_DOUBLE_EQ(fit(ds, fixed).phi1, 0.4);
}

TEST(Fit, ReconstructionLossFallsOverFirstFiveEpochs) {
  SyntheticSpec spec;
  const MultiViewDataset base = synthesize(spec);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MultiViewDataset ds = base.with_mask(generate_missing_mask(600, 2, {0.5, 1, seed}));
    TrainConfig cfg;
    cfg.pretrain_epochs = 5;
    cfg.joint_epochs = 0;
    cfg.seed = seed;
    std::map<int, std::pair<double, int>> per_epoch;
    fit(ds, cfg, [&](const LossRecord& r) {
      per_epoch[r.epoch].first += r.l_rec;
      per_epoch[r.epoch].second += 1;
    });
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& [epoch, acc] : per_epoch) {
      const double mean = acc.first / acc.second;
      EXPECT_LT(mean, prev) << "seed " << seed << " epoch " << epoch;
      prev = mean;
    }
  }
}

TEST(Fit, RejectsBadConfig) {
  TrainConfig cfg = tiny_config(1, 1);
  cfg.batch_size = 0;
  EXPECT_THROW(fit(tiny_dataset(0), cfg), ContractError);
  cfg = tiny_config(1, 1);
  cfg.kida.k = 3;  // 6 + 3 is not divisible by 4 heads
  EXPECT_THROW(fit(tiny_dataset(0), cfg), ContractError);
}

TEST(Predict, ShapesAndLabelsInRange) {
  const MultiViewDataset ds = tiny_dataset(6);
  const FitResult r = fit(ds, tiny_config(1, 1));
  const Prediction p = predict(r.model, ds, KidaOptions{});
  EXPECT_EQ(p.embeddings.rows(), ds.num_samples());
  EXPECT_EQ(p.embeddings.cols(), 16);
  EXPECT_EQ(p.q.cols(), 3);
  for (int l : p.labels) {
    EXPECT_GE(l, 0);
    EXPECT_LT(l, 3);
  }
}
