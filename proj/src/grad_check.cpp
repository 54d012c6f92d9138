#include <algorithm>
#include <cmath>
#include <vector>

#include "urrl/errors.hpp"
#include "urrl/tensor.hpp"

namespace urrl {

namespace {

double evaluate(const TensorProgram& f, const std::vector<Tensor>& params) {
  const Tensor out = f(params);
  if (out.size() != 1) throw ContractError("grad_check: program must return a scalar");
  return out.item();
}

}  // namespace

GradCheckResult grad_check(const TensorProgram& f, std::span<const Tensor> params, double h) {
  std::vector<Tensor> base(params.begin(), params.end());
  const double f0 = evaluate(f, base);
  if (evaluate(f, base) != f0) throw ContractError("grad_check: program is not deterministic");

  Tape tape;
  std::vector<Tensor> vars;
  vars.reserve(base.size());
  for (const Tensor& p : base) vars.push_back(tape.variable(p));
  const Tensor loss = f(vars);
  if (!loss.on_tape()) throw ContractError("grad_check: loss does not depend on any parameter");
  tape.backward(loss);

  GradCheckResult result;
  for (std::size_t pi = 0; pi < base.size(); ++pi) {
    const Eigen::VectorXd analytic = tape.grad(vars[pi]);
    for (Index j = 0; j < base[pi].size(); ++j) {
      std::vector<Tensor> probe = base;
      Eigen::VectorXd v = base[pi].values();
      v[j] += h;
      probe[pi] = Tensor::constant(base[pi].shape(), v);
      const double fp = evaluate(f, probe);
      v[j] -= 2.0 * h;
      probe[pi] = Tensor::constant(base[pi].shape(), v);
      const double fm = evaluate(f, probe);
      const double numeric = (fp - fm) / (2.0 * h);
      const double err = std::abs(analytic[j] - numeric) / std::max(1.0, std::abs(analytic[j]));
      if (!(err <= result.max_rel_error)) {
        result.max_rel_error = err;
        result.worst_param = pi;
        result.worst_index = j;
      }
    }
  }
  return result;
}

}  // namespace urrl
