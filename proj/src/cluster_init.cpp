#include "urrl/cluster_init.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "urrl/errors.hpp"

namespace urrl {

namespace {

// Upper-triangular pairwise storage.
class Condensed {
 public:
  explicit Condensed(Index n) : n_(n), d_(static_cast<std::size_t>(n * (n - 1) / 2)) {}
  double& operator()(Index i, Index j) {
    if (i > j) std::swap(i, j);
    return d_[static_cast<std::size_t>(i * n_ - i * (i + 1) / 2 + j - i - 1)];
  }

 private:
  Index n_;
  std::vector<double> d_;
};

struct UnionFind {
  explicit UnionFind(Index n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
  Index find(Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  Index unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(b)] = a;
    return a;
  }
  std::vector<Index> parent;
};

void check_points(const RowMatrix& points, int n_clusters, const char* who) {
  if (n_clusters < 1) throw ContractError(std::string(who) + ": need at least one cluster");
  if (points.rows() < n_clusters) {
    throw ContractError(std::string(who) + ": " + std::to_string(n_clusters) + " clusters requested for " +
                        std::to_string(points.rows()) + " points");
  }
}

}  // namespace

std::vector<WardMerge> ward_linkage(const RowMatrix& points) {
  const Index n = points.rows();
  if (n < 2) return {};
  Condensed dist(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) dist(i, j) = 0.5 * (points.row(i) - points.row(j)).squaredNorm();
  }
  std::vector<Index> size(static_cast<std::size_t>(n), 1);
  std::vector<char> active(static_cast<std::size_t>(n), 1);
  std::vector<Index> chain;
  struct Raw {
    Index a, b;
    double cost;
  };
  std::vector<Raw> raw;
  raw.reserve(static_cast<std::size_t>(n - 1));

  for (Index step = 0; step < n - 1; ++step) {
    if (chain.empty()) {
      for (Index i = 0; i < n; ++i) {
        if (active[static_cast<std::size_t>(i)]) {
          chain.push_back(i);
          break;
        }
      }
    }
    Index a = 0, b = 0;
    for (;;) {
      a = chain.back();
      const Index prev = chain.size() >= 2 ? chain[chain.size() - 2] : -1;
      double best = std::numeric_limits<double>::infinity();
      b = -1;
      if (prev >= 0) {
        best = dist(a, prev);
        b = prev;
      }
      for (Index c = 0; c < n; ++c) {
        if (c == a || !active[static_cast<std::size_t>(c)]) continue;
        const double d = dist(a, c);
        if (d < best) {
          best = d;
          b = c;
        }
      }
      if (b == prev) break;
      chain.push_back(b);
    }
    chain.pop_back();
    chain.pop_back();
    if (a > b) std::swap(a, b);
    const double dab = dist(a, b);
    raw.push_back({a, b, dab});
    // Merged cluster lives in slot a.
    const double na = static_cast<double>(size[static_cast<std::size_t>(a)]);
    const double nb = static_cast<double>(size[static_cast<std::size_t>(b)]);
    active[static_cast<std::size_t>(b)] = 0;
    for (Index c = 0; c < n; ++c) {
      if (c == a || !active[static_cast<std::size_t>(c)]) continue;
      const double nc = static_cast<double>(size[static_cast<std::size_t>(c)]);
      dist(a, c) = ((na + nc) * dist(a, c) + (nb + nc) * dist(b, c) - nc * dab) / (na + nb + nc);
    }
    size[static_cast<std::size_t>(a)] += size[static_cast<std::size_t>(b)];
  }

  std::stable_sort(raw.begin(), raw.end(), [](const Raw& x, const Raw& y) { return x.cost < y.cost; });
  UnionFind uf(n);
  std::vector<Index> label(static_cast<std::size_t>(n));
  std::iota(label.begin(), label.end(), 0);
  std::vector<Index> csize(static_cast<std::size_t>(n), 1);
  std::vector<WardMerge> merges;
  merges.reserve(raw.size());
  for (std::size_t s = 0; s < raw.size(); ++s) {
    const Index x = uf.find(raw[s].a);
    const Index y = uf.find(raw[s].b);
    Index l = label[static_cast<std::size_t>(x)], r = label[static_cast<std::size_t>(y)];
    if (l > r) std::swap(l, r);
    const Index merged = csize[static_cast<std::size_t>(x)] + csize[static_cast<std::size_t>(y)];
    const Index root = uf.unite(x, y);
    label[static_cast<std::size_t>(root)] = n + static_cast<Index>(s);
    csize[static_cast<std::size_t>(root)] = merged;
    merges.push_back({l, r, raw[s].cost, merged});
  }
  return merges;
}

std::vector<int> ward_labels(const RowMatrix& points, int n_clusters) {
  check_points(points, n_clusters, "ward_labels");
  const Index n = points.rows();
  const std::vector<WardMerge> merges = ward_linkage(points);
  // Linkage ids -> a representative point, so the cut can run on points.
  std::vector<Index> rep(static_cast<std::size_t>(2 * n));
  std::iota(rep.begin(), rep.begin() + n, 0);
  UnionFind uf(n);
  for (std::size_t s = 0; s < merges.size(); ++s) {
    const Index a = rep[static_cast<std::size_t>(merges[s].left)];
    const Index b = rep[static_cast<std::size_t>(merges[s].right)];
    rep[static_cast<std::size_t>(n) + s] = a;
    if (static_cast<Index>(s) < n - n_clusters) uf.unite(a, b);
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  std::vector<int> id_of_root(static_cast<std::size_t>(n), -1);
  int next = 0;
  for (Index i = 0; i < n; ++i) {
    int& id = id_of_root[static_cast<std::size_t>(uf.find(i))];
    if (id < 0) id = next++;
    labels[static_cast<std::size_t>(i)] = id;
  }
  return labels;
}

std::vector<int> kmeans(const RowMatrix& points, int n_clusters, std::mt19937_64& rng, int max_iter,
                        RowMatrix* centers_out) {
  check_points(points, n_clusters, "kmeans");
  const Index n = points.rows();
  RowMatrix centers(n_clusters, points.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centers.row(0) = points.row(first(rng));
  Eigen::VectorXd d2(n);
  for (Index i = 0; i < n; ++i) d2[i] = (points.row(i) - centers.row(0)).squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < n_clusters; ++c) {
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0.0) {
      double r = unit(rng) * total;
      for (pick = 0; pick < n - 1; ++pick) {
        r -= d2[pick];
        if (r < 0.0) break;
      }
    } else {
      pick = first(rng);
    }
    centers.row(c) = points.row(pick);
    for (Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (points.row(i) - centers.row(c)).squaredNorm());
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (labels[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;
    RowMatrix sums = RowMatrix::Zero(n_clusters, points.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_clusters);
    for (Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
      counts[labels[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (int c = 0; c < n_clusters; ++c) {
      if (counts[c] > 0.0) centers.row(c) = sums.row(c) / counts[c];
    }
  }
  if (centers_out) *centers_out = centers;
  return labels;
}

RowMatrix init_centers(const RowMatrix& embeddings, int n_clusters, CenterInit method, Index cap,
                       std::uint64_t seed) {
  check_points(embeddings, n_clusters, "init_centers");
  std::mt19937_64 rng(seed);
  RowMatrix points = embeddings;
  if (cap > 0 && embeddings.rows() > cap) {
    std::vector<Index> idx(static_cast<std::size_t>(embeddings.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(std::max<Index>(cap, n_clusters)));
    std::sort(idx.begin(), idx.end());
    points.resize(static_cast<Index>(idx.size()), embeddings.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) points.row(static_cast<Index>(r)) = embeddings.row(idx[r]);
  }
  RowMatrix fallback = points.topRows(n_clusters);
  const std::vector<int> labels = method == CenterInit::kWard ? ward_labels(points, n_clusters)
                                                              : kmeans(points, n_clusters, rng, 100, &fallback);
  RowMatrix centers = RowMatrix::Zero(n_clusters, points.cols());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_clusters);
  for (Index i = 0; i < points.rows(); ++i) {
    centers.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
    counts[labels[static_cast<std::size_t>(i)]] += 1.0;
  }
  for (int c = 0; c < n_clusters; ++c) {
    if (counts[c] > 0.0) {
      centers.row(c) /= counts[c];
    } else {
      centers.row(c) = fallback.row(c);
    }
  }
  return centers;
}

}  // namespace urrl
