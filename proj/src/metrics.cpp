#include "urrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "urrl/errors.hpp"

namespace urrl {

namespace {

using Index = Eigen::Index;

void check_labels(std::span<const int> truth, std::span<const int> pred) {
  if (truth.empty()) throw ContractError("metrics: empty labeling");
  if (truth.size() != pred.size()) {
    throw ContractError("metrics: label lengths differ (" + std::to_string(truth.size()) + " vs " +
                        std::to_string(pred.size()) + ")");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || pred[i] < 0) throw ContractError("metrics: labels must be non-negative");
  }
}

double entropy(const Eigen::VectorXd& counts, double n) {
  double h = 0.0;
  for (Index i = 0; i < counts.size(); ++i) {
    if (counts[i] > 0.0) {
      const double p = counts[i] / n;
      h -= p * std::log(p);
    }
  }
  return h;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

ContingencyTable contingency(std::span<const int> truth, std::span<const int> pred) {
  check_labels(truth, pred);
  const int t = *std::max_element(truth.begin(), truth.end()) + 1;
  const int p = *std::max_element(pred.begin(), pred.end()) + 1;
  ContingencyTable c{Eigen::MatrixXd::Zero(t, p), static_cast<long>(truth.size())};
  for (std::size_t i = 0; i < truth.size(); ++i) c.counts(truth[i], pred[i]) += 1.0;
  return c;
}

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw DimensionError("hungarian: cost matrix must be square");
  if (n == 0) return {};
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials formulation; column 0 is a sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
  }
  return row_to_col;
}

double accuracy(std::span<const int> truth, std::span<const int> pred) {
  const ContingencyTable c = contingency(truth, pred);
  const Index n = std::max(c.counts.rows(), c.counts.cols());
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(n, n);
  cost.topLeftCorner(c.counts.rows(), c.counts.cols()) = -c.counts;
  const std::vector<int> assign = hungarian(cost);
  double matched = 0.0;
  for (Index r = 0; r < n; ++r) matched -= cost(r, assign[static_cast<std::size_t>(r)]);
  return matched / static_cast<double>(c.total);
}

double nmi(std::span<const int> truth, std::span<const int> pred) {
  const ContingencyTable c = contingency(truth, pred);
  const double n = static_cast<double>(c.total);
  const Eigen::VectorXd rows = c.counts.rowwise().sum();
  const Eigen::VectorXd cols = c.counts.colwise().sum().transpose();
  const double ht = entropy(rows, n);
  const double hp = entropy(cols, n);
  if (ht + hp == 0.0) return 1.0;
  double mi = 0.0;
  for (Index i = 0; i < c.counts.rows(); ++i) {
    for (Index j = 0; j < c.counts.cols(); ++j) {
      const double nij = c.counts(i, j);
      if (nij > 0.0) mi += nij / n * std::log(n * nij / (rows[i] * cols[j]));
    }
  }
  return std::clamp(mi / (0.5 * (ht + hp)), 0.0, 1.0);
}

double ari(std::span<const int> truth, std::span<const int> pred) {
  const ContingencyTable c = contingency(truth, pred);
  if (c.total < 2) throw ContractError("ari: needs at least two samples");
  double sum_ij = 0.0;
  for (Index i = 0; i < c.counts.size(); ++i) sum_ij += comb2(c.counts.data()[i]);
  double sum_a = 0.0, sum_b = 0.0;
  const Eigen::VectorXd rows = c.counts.rowwise().sum();
  const Eigen::VectorXd cols = c.counts.colwise().sum().transpose();
  for (Index i = 0; i < rows.size(); ++i) sum_a += comb2(rows[i]);
  for (Index j = 0; j < cols.size(); ++j) sum_b += comb2(cols[j]);
  // Scaled by the pair count so that integer inputs stay exact.
  const double pairs = comb2(static_cast<double>(c.total));
  const double expected = sum_a * sum_b;
  const double max_index = 0.5 * (sum_a + sum_b) * pairs;
  if (max_index == expected) return 1.0;
  return (sum_ij * pairs - expected) / (max_index - expected);
}

ClusterScores evaluate(std::span<const int> truth, std::span<const int> pred) {
  return {accuracy(truth, pred), nmi(truth, pred), ari(truth, pred)};
}

}  // namespace urrl
