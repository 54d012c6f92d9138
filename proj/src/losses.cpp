#include <cmath>
#include <string>

#include "urrl/errors.hpp"
#include "urrl/training.hpp"

namespace urrl {

Tensor loss_rec(std::span<const Tensor> x, std::span<const Tensor> x_hat, const ViewMask& mask) {
  if (x.size() != x_hat.size() || static_cast<Index>(x.size()) != mask.cols()) {
    throw DimensionError("loss_rec: view counts differ");
  }
  const Index B = mask.rows();
  Tensor acc;
  for (std::size_t v = 0; v < x.size(); ++v) {
    if (x[v].shape() != x_hat[v].shape() || x[v].dim(0) != B) {
      throw DimensionError("loss_rec: view " + std::to_string(v) + " target " + shape_string(x[v].shape()) +
                           " vs reconstruction " + shape_string(x_hat[v].shape()));
    }
    const Tensor m = Tensor::constant({B}, mask.col(static_cast<Index>(v)).cast<double>());
    const Tensor err = sum(mul(sum_axis(square(sub(x_hat[v], x[v])), -1), m));
    acc = acc.defined() ? add(acc, err) : err;
  }
  return scale(acc, 1.0 / static_cast<double>(B));
}

Tensor loss_aug(const Tensor& z, const Tensor& z_aug) {
  if (z.rank() != 2 || z.shape() != z_aug.shape()) {
    throw DimensionError("loss_aug: z " + shape_string(z.shape()) + " vs z' " + shape_string(z_aug.shape()));
  }
  const Index B = z.dim(0), D = z.dim(1);
  // dist(i, j) = ||z'_i - z_j||
  const Tensor dist = l2_norm(sub(reshape(z_aug, {B, 1, D}), z));
  const Tensor logp = log_softmax(scale(dist, -1.0));
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(B, B);
  const Tensor diag = Tensor::constant({B, B}, Eigen::Map<const Eigen::VectorXd>(eye.data(), B * B));
  return scale(sum(mul(logp, diag)), -1.0 / static_cast<double>(B));
}

Tensor loss_clu(const Tensor& q, const RowMatrix& p) {
  if (q.rank() != 2 || q.dim(0) != p.rows() || q.dim(1) != p.cols()) {
    throw DimensionError("loss_clu: q " + shape_string(q.shape()) + " vs p " + std::to_string(p.rows()) + "x" +
                         std::to_string(p.cols()));
  }
  double entropy_term = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const double pi = p.data()[i];
    if (pi > 0.0) entropy_term += pi * std::log(pi);
  }
  // Zero-probability targets would pair 0 with log q; drop them from the product.
  Eigen::VectorXd pv = Eigen::Map<const Eigen::VectorXd>(p.data(), p.size());
  Eigen::VectorXd safe_q = q.values();
  for (Index i = 0; i < pv.size(); ++i) {
    if (pv[i] == 0.0) safe_q[i] = 1.0;
  }
  const Tensor pt = Tensor::constant(q.shape(), pv);
  const Tensor shift = Tensor::constant(q.shape(), safe_q - q.values());
  const Tensor cross = sum(mul(pt, log(add(q, shift))));
  return add_scalar(scale(cross, -1.0), entropy_term);
}

Tensor total_loss(const Tensor& rec, const Tensor& aug, const Tensor& clu, double lambda1, double lambda2) {
  Tensor t = rec;
  if (lambda1 != 0.0) t = add(t, scale(aug, lambda1));
  if (lambda2 != 0.0) {
    if (!clu.defined()) throw ContractError("total_loss: lambda2 set but no clustering loss");
    t = add(t, scale(clu, lambda2));
  }
  return t;
}

void AdamW::step(ParamStore& params, std::span<const Eigen::VectorXd> grads, const std::vector<bool>& frozen) {
  if (grads.size() != params.size() || frozen.size() != params.size()) {
    throw DimensionError("AdamW: gradient count differs from parameter count");
  }
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.push_back(Eigen::VectorXd::Zero(params.value(i).size()));
      v_.push_back(Eigen::VectorXd::Zero(params.value(i).size()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (frozen[i]) continue;
    const Eigen::VectorXd& g = grads[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    Eigen::VectorXd w = params.value(i).values() * (1.0 - lr_ * wd_);
    w.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    params.set(i, std::move(w));
  }
}

}  // namespace urrl
