#pragma once

// Clustering evaluation: Hungarian-matched accuracy, NMI and ARI.

#include <span>
#include <vector>

#include <Eigen/Core>

namespace urrl {

/// Co-occurrence counts, rows = true classes, columns = predicted clusters.
struct ContingencyTable {
  Eigen::MatrixXd counts;
  long total = 0;
};

ContingencyTable contingency(std::span<const int> truth, std::span<const int> pred);

/// Minimum-cost perfect matching on a square matrix (O(n^3)). Returns the
/// column assigned to each row.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

double accuracy(std::span<const int> truth, std::span<const int> pred);
/// Arithmetic-mean normalisation, natural logarithms.
double nmi(std::span<const int> truth, std::span<const int> pred);
double ari(std::span<const int> truth, std::span<const int> pred);

struct ClusterScores {
  double acc = 0.0;
  double nmi = 0.0;
  double ari = 0.0;
};

ClusterScores evaluate(std::span<const int> truth, std::span<const int> pred);

}  // namespace urrl
