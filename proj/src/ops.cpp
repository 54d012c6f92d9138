#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "urrl/errors.hpp"
#include "urrl/tensor.hpp"

namespace urrl {
namespace {

using Vec = Eigen::VectorXd;
using MapM = Eigen::Map<RowMatrix>;
using CMapM = Eigen::Map<const RowMatrix>;

Tape* tape_of(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->defined()) throw ContractError("operation on an undefined tensor");
    if (!t->on_tape()) continue;
    if (tape && tape != t->tape()) throw ContractError("operands live on different tapes");
    tape = t->tape();
  }
  return tape;
}

Tensor make(Tape* tape, Shape shape, Vec values, BackwardFn fn) {
  if (!tape) return Tensor::constant(std::move(shape), std::move(values));
  return tape->record(std::move(shape), std::move(values), std::move(fn));
}

// Maps every flat output index to the flat index of an input broadcast into
// `out`. Empty result means the input already has the output shape.
std::vector<Index> broadcast_map(const Shape& in, const Shape& out) {
  if (in == out) return {};
  const Index n_out = shape_size(out);
  const Index n_in = shape_size(in);
  std::vector<Index> map(static_cast<std::size_t>(n_out));
  // Suffix case: input repeats across leading output axes.
  bool suffix = in.size() <= out.size();
  for (std::size_t i = 0; suffix && i < in.size(); ++i) {
    suffix = in[in.size() - 1 - i] == out[out.size() - 1 - i];
  }
  if (suffix) {
    for (Index o = 0; o < n_out; ++o) map[static_cast<std::size_t>(o)] = o % n_in;
    return map;
  }
  const std::size_t r = out.size();
  const std::size_t off = r - in.size();
  std::vector<Index> in_stride(r, 0);
  Index s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    in_stride[i + off] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  std::vector<Index> counter(r, 0);
  Index pos = 0;
  for (Index o = 0; o < n_out; ++o) {
    map[static_cast<std::size_t>(o)] = pos;
    for (std::size_t ax = r; ax-- > 0;) {
      ++counter[ax];
      pos += in_stride[ax];
      if (counter[ax] < out[ax]) break;
      pos -= in_stride[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  return map;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const Index da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const Index db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast shapes " + shape_string(a) + " and " + shape_string(b));
    }
    out[r - 1 - i] = std::max(da, db);
  }
  return out;
}

// Sums a gradient laid out in the output shape back onto the input.
Vec reduce_to(const Vec& g, const std::vector<Index>& map, Index n_in) {
  if (map.empty()) return g;
  Vec r = Vec::Zero(n_in);
  for (Index o = 0; o < g.size(); ++o) r[map[static_cast<std::size_t>(o)]] += g[o];
  return r;
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  Tape* tape = tape_of({&a, &b});
  Shape out = broadcast_shape(a.shape(), b.shape());
  const Index n = shape_size(out);
  auto ma = std::make_shared<std::vector<Index>>(broadcast_map(a.shape(), out));
  auto mb = std::make_shared<std::vector<Index>>(broadcast_map(b.shape(), out));
  const Vec& av = a.values();
  const Vec& bv = b.values();
  Vec y(n);
  auto ia = [&](Index o) { return ma->empty() ? o : (*ma)[static_cast<std::size_t>(o)]; };
  auto ib = [&](Index o) { return mb->empty() ? o : (*mb)[static_cast<std::size_t>(o)]; };
  if (ma->empty() && mb->empty()) {
    switch (op) {
      case BinOp::kAdd: y = av + bv; break;
      case BinOp::kSub: y = av - bv; break;
      case BinOp::kMul: y = av.cwiseProduct(bv); break;
      case BinOp::kDiv: y = av.cwiseQuotient(bv); break;
    }
  } else {
    for (Index o = 0; o < n; ++o) {
      const double x1 = av[ia(o)], x2 = bv[ib(o)];
      switch (op) {
        case BinOp::kAdd: y[o] = x1 + x2; break;
        case BinOp::kSub: y[o] = x1 - x2; break;
        case BinOp::kMul: y[o] = x1 * x2; break;
        case BinOp::kDiv: y[o] = x1 / x2; break;
      }
    }
  }
  return make(tape, out, std::move(y), [a, b, ma, mb, op](const Vec& g, GradSink& sink) {
    const Index n = g.size();
    auto ia = [&](Index o) { return ma->empty() ? o : (*ma)[static_cast<std::size_t>(o)]; };
    auto ib = [&](Index o) { return mb->empty() ? o : (*mb)[static_cast<std::size_t>(o)]; };
    const Vec& av = a.values();
    const Vec& bv = b.values();
    Vec ga(n), gb(n);
    for (Index o = 0; o < n; ++o) {
      const double x1 = av[ia(o)], x2 = bv[ib(o)];
      switch (op) {
        case BinOp::kAdd: ga[o] = g[o]; gb[o] = g[o]; break;
        case BinOp::kSub: ga[o] = g[o]; gb[o] = -g[o]; break;
        case BinOp::kMul: ga[o] = g[o] * x2; gb[o] = g[o] * x1; break;
        case BinOp::kDiv: ga[o] = g[o] / x2; gb[o] = -g[o] * x1 / (x2 * x2); break;
      }
    }
    if (a.on_tape()) sink.add(a, reduce_to(ga, *ma, a.size()));
    if (b.on_tape()) sink.add(b, reduce_to(gb, *mb, b.size()));
  });
}

// Applies f elementwise; df(x, y) gives dy/dx.
template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df) {
  Tape* tape = tape_of({&x});
  Vec y = x.values().unaryExpr(f);
  auto yv = std::make_shared<Vec>(y);
  return make(tape, x.shape(), std::move(y), [x, yv, df](const Vec& g, GradSink& sink) {
    Vec gx(g.size());
    const Vec& xv = x.values();
    for (Index i = 0; i < g.size(); ++i) gx[i] = g[i] * df(xv[i], (*yv)[i]);
    sink.add(x, gx);
  });
}

struct AxisSplit {
  Index outer, len, inner;
};

AxisSplit split_axis(const Shape& s, Index axis) {
  AxisSplit r{1, s[static_cast<std::size_t>(axis)], 1};
  for (Index i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

Index normalize_axis(const Tensor& x, Index axis) {
  if (axis < 0) axis += x.rank();
  if (axis < 0 || axis >= x.rank()) {
    throw DimensionError("axis out of range for shape " + shape_string(x.shape()));
  }
  return axis;
}

Index last_dim(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw DimensionError(std::string(op) + " needs rank >= 1");
  return x.shape().back();
}

Shape drop_last(const Shape& s) { return Shape(s.begin(), s.end() - 1); }

// Softmax over the last axis; optional check for rows without a finite entry.
Tensor softmax_impl(const Tensor& z, bool masked) {
  Tape* tape = tape_of({&z});
  const Index c = last_dim(z, "softmax");
  CMapM zm = z.matrix();
  RowMatrix y(zm.rows(), c);
  for (Index r = 0; r < zm.rows(); ++r) {
    const double mx = zm.row(r).maxCoeff();
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw ContractError(masked ? "masked_softmax: fully masked row " + std::to_string(r)
                                 : "softmax: row " + std::to_string(r) + " is all -inf");
    }
    y.row(r) = (zm.row(r).array() - mx).exp();
    y.row(r) /= y.row(r).sum();
  }
  auto ys = std::make_shared<RowMatrix>(y);
  Vec yv = Eigen::Map<const Vec>(y.data(), y.size());
  return make(tape, z.shape(), std::move(yv), [z, ys](const Vec& g, GradSink& sink) {
    CMapM gm(g.data(), ys->rows(), ys->cols());
    RowMatrix gz = ys->cwiseProduct(gm);
    const Eigen::VectorXd dots = gz.rowwise().sum();
    gz -= ys->cwiseProduct(dots.replicate(1, ys->cols()));
    sink.add(z, Eigen::Map<const Vec>(gz.data(), gz.size()));
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  Tape* tape = tape_of({&a, &b});
  CMapM am = a.matrix();
  CMapM bm = b.matrix();
  const Index p = b.dim(1);
  Shape out = drop_last(a.shape());
  out.push_back(p);
  Vec y(am.rows() * p);
  MapM(y.data(), am.rows(), p).noalias() = am * bm;
  return make(tape, std::move(out), std::move(y), [a, b](const Vec& g, GradSink& sink) {
    CMapM am = a.matrix();
    CMapM bm = b.matrix();
    CMapM gm(g.data(), am.rows(), bm.cols());
    if (a.on_tape()) {
      Vec ga(a.size());
      MapM(ga.data(), am.rows(), am.cols()).noalias() = gm * bm.transpose();
      sink.add(a, ga);
    }
    if (b.on_tape()) {
      Vec gb(b.size());
      MapM(gb.data(), bm.rows(), bm.cols()).noalias() = am.transpose() * gm;
      sink.add(b, gb);
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw DimensionError("bmm: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  Tape* tape = tape_of({&a, &b});
  const Index G = a.dim(0), m = a.dim(1), n = a.dim(2), p = b.dim(2);
  Vec y(G * m * p);
  for (Index g = 0; g < G; ++g) {
    MapM(y.data() + g * m * p, m, p).noalias() =
        CMapM(a.values().data() + g * m * n, m, n) * CMapM(b.values().data() + g * n * p, n, p);
  }
  return make(tape, {G, m, p}, std::move(y), [a, b, G, m, n, p](const Vec& gr, GradSink& sink) {
    Vec ga(a.on_tape() ? a.size() : 0), gb(b.on_tape() ? b.size() : 0);
    for (Index g = 0; g < G; ++g) {
      CMapM gm(gr.data() + g * m * p, m, p);
      CMapM am(a.values().data() + g * m * n, m, n);
      CMapM bm(b.values().data() + g * n * p, n, p);
      if (a.on_tape()) MapM(ga.data() + g * m * n, m, n).noalias() = gm * bm.transpose();
      if (b.on_tape()) MapM(gb.data() + g * n * p, n, p).noalias() = am.transpose() * gm;
    }
    if (a.on_tape()) sink.add(a, ga);
    if (b.on_tape()) sink.add(b, gb);
  });
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose_last2 needs rank >= 2, got " + shape_string(x.shape()));
  Tape* tape = tape_of({&x});
  const Index m = x.dim(-2), n = x.dim(-1), G = x.size() / (m * n);
  Vec y(x.size());
  for (Index g = 0; g < G; ++g) {
    MapM(y.data() + g * m * n, n, m) = CMapM(x.values().data() + g * m * n, m, n).transpose();
  }
  Shape out = x.shape();
  std::swap(out[out.size() - 1], out[out.size() - 2]);
  return make(tape, std::move(out), std::move(y), [x, G, m, n](const Vec& g, GradSink& sink) {
    Vec gx(g.size());
    for (Index k = 0; k < G; ++k) {
      MapM(gx.data() + k * m * n, m, n) = CMapM(g.data() + k * m * n, n, m).transpose();
    }
    sink.add(x, gx);
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kDiv); }

Tensor scale(const Tensor& x, double s) {
  Tape* tape = tape_of({&x});
  return make(tape, x.shape(), x.values() * s, [x, s](const Vec& g, GradSink& sink) { sink.add(x, g * s); });
}

Tensor add_scalar(const Tensor& x, double s) {
  Tape* tape = tape_of({&x});
  return make(tape, x.shape(), x.values().array() + s, [x](const Vec& g, GradSink& sink) { sink.add(x, g); });
}

Tensor sum(const Tensor& x) {
  Tape* tape = tape_of({&x});
  return make(tape, {}, Vec::Constant(1, x.values().sum()), [x](const Vec& g, GradSink& sink) {
    sink.add(x, Vec::Constant(x.size(), g[0]));
  });
}

Tensor mean(const Tensor& x) {
  Tape* tape = tape_of({&x});
  const double n = static_cast<double>(x.size());
  return make(tape, {}, Vec::Constant(1, x.values().sum() / n), [x, n](const Vec& g, GradSink& sink) {
    sink.add(x, Vec::Constant(x.size(), g[0] / n));
  });
}

Tensor sum_axis(const Tensor& x, Index axis, bool keepdim) {
  axis = normalize_axis(x, axis);
  Tape* tape = tape_of({&x});
  const AxisSplit s = split_axis(x.shape(), axis);
  Vec y = Vec::Zero(s.outer * s.inner);
  const Vec& xv = x.values();
  for (Index o = 0; o < s.outer; ++o) {
    for (Index l = 0; l < s.len; ++l) {
      y.segment(o * s.inner, s.inner) += xv.segment((o * s.len + l) * s.inner, s.inner);
    }
  }
  Shape out = x.shape();
  if (keepdim) {
    out[static_cast<std::size_t>(axis)] = 1;
  } else {
    out.erase(out.begin() + axis);
  }
  return make(tape, std::move(out), std::move(y), [x, s](const Vec& g, GradSink& sink) {
    Vec gx(x.size());
    for (Index o = 0; o < s.outer; ++o) {
      for (Index l = 0; l < s.len; ++l) {
        gx.segment((o * s.len + l) * s.inner, s.inner) = g.segment(o * s.inner, s.inner);
      }
    }
    sink.add(x, gx);
  });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x) {
  if (x.size() > 0 && x.values().minCoeff() < 0.0) throw DomainError("sqrt of a negative value");
  return unary(x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  if (x.size() > 0 && x.values().minCoeff() < 0.0) throw DomainError("log of a negative value");
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  const Index c = x.rank() == 0 ? 1 : x.shape().back();
  const bool shared = slope.size() == 1;
  if (!shared && (slope.rank() != 1 || slope.size() != c)) {
    throw DimensionError("prelu: slope shape " + shape_string(slope.shape()) + " incompatible with input " +
                         shape_string(x.shape()));
  }
  Tape* tape = tape_of({&x, &slope});
  const Vec& xv = x.values();
  const Vec& sv = slope.values();
  Vec y(xv.size());
  for (Index i = 0; i < xv.size(); ++i) {
    const double a = shared ? sv[0] : sv[i % c];
    y[i] = xv[i] > 0.0 ? xv[i] : a * xv[i];
  }
  return make(tape, x.shape(), std::move(y), [x, slope, shared, c](const Vec& g, GradSink& sink) {
    const Vec& xv = x.values();
    const Vec& sv = slope.values();
    Vec gx(xv.size());
    Vec gs = Vec::Zero(slope.size());
    for (Index i = 0; i < xv.size(); ++i) {
      const Index ci = shared ? 0 : i % c;
      if (xv[i] > 0.0) {
        gx[i] = g[i];
      } else {
        gx[i] = sv[ci] * g[i];
        gs[ci] += xv[i] * g[i];
      }
    }
    sink.add(x, gx);
    sink.add(slope, gs);
  });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape lead = drop_last(parts.front().shape());
  Tape* tape = nullptr;
  std::vector<Index> widths;
  Index total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() == 0 || drop_last(p.shape()) != lead) {
      throw DimensionError("concat: shape " + shape_string(p.shape()) + " incompatible with " +
                           shape_string(parts.front().shape()));
    }
    Tape* t = tape_of({&p});
    if (t && tape && t != tape) throw ContractError("operands live on different tapes");
    if (t) tape = t;
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  const Index rows = shape_size(lead);
  RowMatrix y(rows, total);
  Index off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    y.middleCols(off, widths[i]) = parts[i].matrix();
    off += widths[i];
  }
  Shape out = lead;
  out.push_back(total);
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make(tape, std::move(out), Eigen::Map<const Vec>(y.data(), y.size()),
              [inputs, widths, rows, total](const Vec& g, GradSink& sink) {
                CMapM gm(g.data(), rows, total);
                Index off = 0;
                for (std::size_t i = 0; i < inputs.size(); ++i) {
                  if (inputs[i].on_tape()) {
                    RowMatrix gi = gm.middleCols(off, widths[i]);
                    sink.add(inputs[i], Eigen::Map<const Vec>(gi.data(), gi.size()));
                  }
                  off += widths[i];
                }
              });
}

Tensor concat(std::initializer_list<Tensor> parts) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor l2_norm(const Tensor& x) {
  Tape* tape = tape_of({&x});
  const Index c = last_dim(x, "l2_norm");
  CMapM xm = x.matrix();
  Vec y = xm.rowwise().norm();
  auto yv = std::make_shared<Vec>(y);
  return make(tape, drop_last(x.shape()), std::move(y), [x, yv, c](const Vec& g, GradSink& sink) {
    CMapM xm = x.matrix();
    RowMatrix gx(xm.rows(), c);
    for (Index r = 0; r < xm.rows(); ++r) {
      const double n = (*yv)[r];
      if (n > 0.0) {
        gx.row(r) = xm.row(r) * (g[r] / n);
      } else {
        gx.row(r).setZero();
      }
    }
    sink.add(x, Eigen::Map<const Vec>(gx.data(), gx.size()));
  });
}

Tensor masked_softmax(const Tensor& logits, const Tensor& additive_mask) {
  const Vec& mv = additive_mask.values();
  for (Index i = 0; i < mv.size(); ++i) {
    if (std::isnan(mv[i]) || mv[i] == std::numeric_limits<double>::infinity()) {
      throw ContractError("masked_softmax: mask entries must be finite or -inf");
    }
  }
  if (broadcast_shape(logits.shape(), additive_mask.shape()) != logits.shape()) {
    throw DimensionError("masked_softmax: mask " + shape_string(additive_mask.shape()) +
                         " does not broadcast to logits " + shape_string(logits.shape()));
  }
  return softmax_impl(add(logits, additive_mask), true);
}

Tensor softmax(const Tensor& logits) { return softmax_impl(logits, false); }

Tensor log_softmax(const Tensor& logits) {
  Tape* tape = tape_of({&logits});
  const Index c = last_dim(logits, "log_softmax");
  CMapM zm = logits.matrix();
  RowMatrix y(zm.rows(), c);
  auto probs = std::make_shared<RowMatrix>(zm.rows(), c);
  for (Index r = 0; r < zm.rows(); ++r) {
    const double mx = zm.row(r).maxCoeff();
    if (!std::isfinite(mx)) throw ContractError("log_softmax: row without a finite maximum");
    const auto shifted = (zm.row(r).array() - mx).eval();
    const double lse = std::log(shifted.exp().sum());
    y.row(r) = shifted - lse;
    probs->row(r) = y.row(r).array().exp();
  }
  return make(tape, logits.shape(), Eigen::Map<const Vec>(y.data(), y.size()),
              [logits, probs](const Vec& g, GradSink& sink) {
                CMapM gm(g.data(), probs->rows(), probs->cols());
                const Vec gs = gm.rowwise().sum();
                RowMatrix gz = gm - probs->cwiseProduct(gs.replicate(1, probs->cols()));
                sink.add(logits, Eigen::Map<const Vec>(gz.data(), gz.size()));
              });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Index c = last_dim(x, "layer_norm");
  if (gain.size() != c || bias.size() != c) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" + shape_string(bias.shape()) +
                         " vs input " + shape_string(x.shape()));
  }
  Tape* tape = tape_of({&x, &gain, &bias});
  CMapM xm = x.matrix();
  const Index rows = xm.rows();
  auto xhat = std::make_shared<RowMatrix>(rows, c);
  auto inv_std = std::make_shared<Vec>(rows);
  for (Index r = 0; r < rows; ++r) {
    const double mu = xm.row(r).mean();
    const auto centered = (xm.row(r).array() - mu).eval();
    const double var = centered.square().mean();
    (*inv_std)[r] = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = centered * (*inv_std)[r];
  }
  const Eigen::RowVectorXd gv = gain.values().transpose();
  const Eigen::RowVectorXd bv = bias.values().transpose();
  RowMatrix y = (xhat->array().rowwise() * gv.array()).rowwise() + bv.array();
  return make(tape, x.shape(), Eigen::Map<const Vec>(y.data(), y.size()),
              [x, gain, bias, xhat, inv_std, rows, c](const Vec& g, GradSink& sink) {
                CMapM gm(g.data(), rows, c);
                if (gain.on_tape()) {
                  Vec gg = gm.cwiseProduct(*xhat).colwise().sum().transpose();
                  sink.add(gain, gg);
                }
                if (bias.on_tape()) {
                  Vec gb = gm.colwise().sum().transpose();
                  sink.add(bias, gb);
                }
                if (x.on_tape()) {
                  const Eigen::RowVectorXd gv = gain.values().transpose();
                  RowMatrix gxh = gm.array().rowwise() * gv.array();
                  RowMatrix gx(rows, c);
                  for (Index r = 0; r < rows; ++r) {
                    const double m1 = gxh.row(r).mean();
                    const double m2 = gxh.row(r).dot(xhat->row(r)) / static_cast<double>(c);
                    gx.row(r) = (gxh.row(r).array() - m1 - xhat->row(r).array() * m2) * (*inv_std)[r];
                  }
                  sink.add(x, Eigen::Map<const Vec>(gx.data(), gx.size()));
                }
              });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  Tape* tape = tape_of({&x});
  return make(tape, std::move(shape), x.values(), [x](const Vec& g, GradSink& sink) { sink.add(x, g); });
}

Tensor slice_last(const Tensor& x, Index start, Index length) {
  const Index c = last_dim(x, "slice_last");
  if (start < 0 || length <= 0 || start + length > c) {
    throw DimensionError("slice_last [" + std::to_string(start) + "," + std::to_string(start + length) +
                         ") out of range for " + shape_string(x.shape()));
  }
  Tape* tape = tape_of({&x});
  CMapM xm = x.matrix();
  RowMatrix y = xm.middleCols(start, length);
  Shape out = x.shape();
  out.back() = length;
  return make(tape, std::move(out), Eigen::Map<const Vec>(y.data(), y.size()),
              [x, start, length, c](const Vec& g, GradSink& sink) {
                const Index rows = x.size() / c;
                RowMatrix gx = RowMatrix::Zero(rows, c);
                gx.middleCols(start, length) = CMapM(g.data(), rows, length);
                sink.add(x, Eigen::Map<const Vec>(gx.data(), gx.size()));
              });
}

Tensor take(const Tensor& x, Index axis, Index index) {
  axis = normalize_axis(x, axis);
  const AxisSplit s = split_axis(x.shape(), axis);
  if (index < 0 || index >= s.len) {
    throw DimensionError("take: index " + std::to_string(index) + " out of range for " + shape_string(x.shape()));
  }
  Tape* tape = tape_of({&x});
  Vec y(s.outer * s.inner);
  for (Index o = 0; o < s.outer; ++o) {
    y.segment(o * s.inner, s.inner) = x.values().segment((o * s.len + index) * s.inner, s.inner);
  }
  Shape out = x.shape();
  out.erase(out.begin() + axis);
  return make(tape, std::move(out), std::move(y), [x, s, index](const Vec& g, GradSink& sink) {
    Vec gx = Vec::Zero(x.size());
    for (Index o = 0; o < s.outer; ++o) {
      gx.segment((o * s.len + index) * s.inner, s.inner) = g.segment(o * s.inner, s.inner);
    }
    sink.add(x, gx);
  });
}

Tensor scatter_rows(const Tensor& x, std::span<const Index> rows, Index total) {
  if (x.rank() == 0 || x.dim(0) != static_cast<Index>(rows.size())) {
    throw DimensionError("scatter_rows: " + std::to_string(rows.size()) + " targets for shape " +
                         shape_string(x.shape()));
  }
  std::vector<char> seen(static_cast<std::size_t>(std::max<Index>(total, 0)), 0);
  for (Index r : rows) {
    if (r < 0 || r >= total) throw DimensionError("scatter_rows: target row out of range");
    if (seen[static_cast<std::size_t>(r)]++) throw ContractError("scatter_rows: duplicate target row");
  }
  Tape* tape = tape_of({&x});
  const Index width = x.size() / x.dim(0);
  Vec y = Vec::Zero(total * width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    y.segment(rows[i] * width, width) = x.values().segment(static_cast<Index>(i) * width, width);
  }
  Shape out = x.shape();
  out[0] = total;
  std::vector<Index> idx(rows.begin(), rows.end());
  return make(tape, std::move(out), std::move(y), [x, idx, width](const Vec& g, GradSink& sink) {
    Vec gx(x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      gx.segment(static_cast<Index>(i) * width, width) = g.segment(idx[i] * width, width);
    }
    sink.add(x, gx);
  });
}

Tensor gather_rows(const Tensor& x, std::span<const Index> rows) {
  if (x.rank() == 0 || rows.empty()) throw DimensionError("gather_rows: empty selection or rank-0 input");
  const Index n = x.dim(0);
  const Index width = x.size() / n;
  for (Index r : rows) {
    if (r < 0 || r >= n) throw DimensionError("gather_rows: row out of range for " + shape_string(x.shape()));
  }
  Tape* tape = tape_of({&x});
  Vec y(static_cast<Index>(rows.size()) * width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    y.segment(static_cast<Index>(i) * width, width) = x.values().segment(rows[i] * width, width);
  }
  Shape out = x.shape();
  out[0] = static_cast<Index>(rows.size());
  std::vector<Index> idx(rows.begin(), rows.end());
  return make(tape, std::move(out), std::move(y), [x, idx, width](const Vec& g, GradSink& sink) {
    Vec gx = Vec::Zero(x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      gx.segment(idx[i] * width, width) += g.segment(static_cast<Index>(i) * width, width);
    }
    sink.add(x, gx);
  });
}

Tensor detach(const Tensor& x) { return Tensor::constant(x.shape(), x.values()); }

}  // namespace urrl
