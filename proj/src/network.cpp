#include "urrl/network.hpp"

#include <cmath>
#include <iostream>
#include <limits>

#include "urrl/errors.hpp"

namespace urrl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

std::string to_string(const OutputSelector& s) {
  switch (s.choice) {
    case OutputChoice::kFirst: return "first";
    case OutputChoice::kNth: return "nth:" + std::to_string(s.index);
    case OutputChoice::kMean: return "mean";
    case OutputChoice::kConcatLinear: return "concat";
  }
  return "first";
}

OutputSelector parse_output_selector(const std::string& text) {
  if (text == "first") return {OutputChoice::kFirst, 0};
  if (text == "mean") return {OutputChoice::kMean, 0};
  if (text == "concat") return {OutputChoice::kConcatLinear, 0};
  if (text.rfind("nth:", 0) == 0) {
    try {
      const long n = std::stol(text.substr(4));
      if (n >= 0) return {OutputChoice::kNth, static_cast<Index>(n)};
    } catch (const std::exception&) {
    }
  }
  throw FormatError("output choice must be first | nth:<i> | mean | concat, got \"" + text + "\"");
}

void ModelConfig::validate() const {
  if (view_dims.empty()) throw ContractError("model: at least one view required");
  if (k < 1 || embed_dim < 1 || vde_hidden < 1 || decoder_hidden < 1) {
    throw ContractError("model: sizes must be positive");
  }
  if (num_clusters < 1) throw ContractError("model: num_clusters must be positive");
  if (nde_layers < 1 || vde_layers < 1 || nde_heads < 1 || vde_heads < 1 || ff_mult < 1) {
    throw ContractError("model: layer, head and ff_mult counts must be positive");
  }
  if (!(gamma < 0.0)) throw ContractError("model: gamma must be negative");
  for (Index v = 0; v < num_views(); ++v) {
    if (view_dims[static_cast<std::size_t>(v)] < 1) throw ContractError("model: view dims must be positive");
    if (nde_width(v) % nde_heads != 0) {
      throw ContractError("model: NDE width d_v + k = " + std::to_string(nde_width(v)) + " of view " +
                          std::to_string(v) + " is not divisible by " + std::to_string(nde_heads) + " heads");
    }
  }
  if (embed_dim % vde_heads != 0) throw ContractError("model: embed_dim not divisible by VDE heads");
  if (nde_output.choice == OutputChoice::kNth && nde_output.index >= k) {
    throw ContractError("model: NDE output index must be < k");
  }
  if (vde_output.choice == OutputChoice::kNth && vde_output.index >= num_views()) {
    throw ContractError("model: VDE output index must be < V");
  }
}

// ---------------------------------------------------------------------------

std::size_t ParamStore::add(std::string name, Tensor value) {
  if (find(name)) throw ContractError("duplicate parameter " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

void ParamStore::set(std::size_t i, Eigen::VectorXd values) {
  values_[i] = Tensor::constant(values_[i].shape(), std::move(values));
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::vector<Tensor> ParamStore::bind(Tape& tape) const {
  std::vector<Tensor> out;
  out.reserve(values_.size());
  for (const Tensor& t : values_) out.push_back(tape.variable(t));
  return out;
}

Index ParamStore::num_scalars() const {
  Index n = 0;
  for (const Tensor& t : values_) n += t.size();
  return n;
}

// ---------------------------------------------------------------------------

EncoderInput make_encoder_input(std::span<const KidaSample> samples, bool augmented) {
  if (samples.empty()) throw ContractError("make_encoder_input: empty batch");
  const KidaSample& first = samples.front();
  const Index V = static_cast<Index>(first.clean.size());
  const Index k = first.clean.front().rows();
  const Index B = static_cast<Index>(samples.size());
  EncoderInput in;
  in.batch = B;
  in.k = k;
  in.view_mask.resize(B, V);
  for (Index v = 0; v < V; ++v) {
    in.rows.emplace_back(B * k, first.clean[static_cast<std::size_t>(v)].cols());
    in.validity.emplace_back(B, k);
  }
  for (Index b = 0; b < B; ++b) {
    const KidaSample& s = samples[static_cast<std::size_t>(b)];
    const auto& rows = augmented ? s.augmented : s.clean;
    const auto& val = augmented ? s.aug_validity : s.clean_validity;
    const auto& m = augmented ? s.aug_view_mask : s.view_mask;
    for (Index v = 0; v < V; ++v) {
      in.rows[static_cast<std::size_t>(v)].middleRows(b * k, k) = rows[static_cast<std::size_t>(v)];
      in.validity[static_cast<std::size_t>(v)].row(b) = val.col(v).transpose();
      in.view_mask(b, v) = m(v);
    }
  }
  return in;
}

RowMatrix cdpe(const RowMatrix& stack, std::span<const std::uint8_t> validity, bool enabled) {
  const Index k = stack.rows();
  if (static_cast<Index>(validity.size()) != k) throw DimensionError("cdpe: validity length differs from k");
  RowMatrix out = RowMatrix::Zero(k, stack.cols() + k);
  out.leftCols(stack.cols()) = stack;
  if (!enabled) return out;
  for (Index i = 0; i < k; ++i) {
    if (!validity[static_cast<std::size_t>(i)]) continue;
    for (Index j = i + 1; j < k; ++j) {
      if (!validity[static_cast<std::size_t>(j)]) continue;
      const double d = cosine_distance(stack.row(i), stack.row(j));
      out(i, stack.cols() + j) = d;
      out(j, stack.cols() + i) = d;
    }
  }
  return out;
}

Eigen::RowVectorXd tam(const ValidityMatrix& validity, const MaskRow& view_mask, double gamma) {
  const Index V = view_mask.size();
  if (validity.cols() != V) throw DimensionError("tam: validity has " + std::to_string(validity.cols()) + " views");
  Eigen::RowVectorXd out(V);
  for (Index j = 0; j < V; ++j) {
    if (view_mask(j)) {
      out(j) = 0.0;
    } else if (validity.col(j).cast<int>().sum() > 0) {
      out(j) = gamma;
    } else {
      out(j) = kNegInf;
    }
  }
  return out;
}

Tensor soft_assign(const Tensor& z, const Tensor& centers) {
  if (z.rank() != 2 || centers.rank() != 2 || z.dim(1) != centers.dim(1)) {
    throw DimensionError("soft_assign: z " + shape_string(z.shape()) + " vs centers " +
                         shape_string(centers.shape()));
  }
  const Tensor diff = sub(reshape(z, {z.dim(0), 1, z.dim(1)}), centers);
  const Tensor kernel = div(Tensor::scalar(1.0), add_scalar(sum_axis(square(diff), -1), 1.0));
  return div(kernel, sum_axis(kernel, -1, true));
}

RowMatrix target_distribution(const RowMatrix& q) {
  const Eigen::RowVectorXd f = q.colwise().sum();
  RowMatrix p = RowMatrix::Zero(q.rows(), q.cols());
  bool degenerate = false;
  for (Index j = 0; j < q.cols(); ++j) {
    if (f(j) > 0.0) {
      p.col(j) = q.col(j).array().square() / f(j);
    } else {
      degenerate = true;
    }
  }
  if (degenerate) std::cerr << "warning: target_distribution: empty soft cluster excluded\n";
  for (Index i = 0; i < p.rows(); ++i) {
    const double s = p.row(i).sum();
    if (s > 0.0) p.row(i) /= s;
  }
  return p;
}

// ---------------------------------------------------------------------------

UrrlModel::UrrlModel(ModelConfig cfg) : cfg_(std::move(cfg)), init_rng_(cfg_.init_seed) {
  cfg_.validate();
  const Index V = cfg_.num_views();
  for (Index v = 0; v < V; ++v) {
    const std::string name = "nde.v" + std::to_string(v);
    nde_.push_back(add_transformer(name, cfg_.nde_width(v), cfg_.nde_layers, cfg_.nde_heads));
    if (cfg_.nde_output.choice == OutputChoice::kConcatLinear) {
      nde_proj_.push_back(add_linear(name + ".out", cfg_.k * cfg_.nde_width(v), cfg_.nde_width(v)));
    } else {
      nde_proj_.push_back(std::nullopt);
    }
  }
  for (Index v = 0; v < V; ++v) {
    vde_ffn_.push_back(add_mlp("vde.ffn.v" + std::to_string(v),
                               {cfg_.nde_width(v), cfg_.vde_hidden, cfg_.vde_hidden, cfg_.embed_dim}));
  }
  vde_ = add_transformer("vde.tf", cfg_.embed_dim, cfg_.vde_layers, cfg_.vde_heads);
  if (cfg_.vde_output.choice == OutputChoice::kConcatLinear) {
    vde_proj_ = add_linear("vde.out", V * cfg_.embed_dim, cfg_.embed_dim);
  }
  for (Index v = 0; v < V; ++v) {
    const Index h = cfg_.decoder_hidden;
    decoders_.push_back(
        add_mlp("dec.v" + std::to_string(v), {cfg_.embed_dim, h, h, h, cfg_.view_dims[static_cast<std::size_t>(v)]}));
  }
  centers_ = params_.add("cluster.centers", Tensor::zeros({cfg_.num_clusters, cfg_.embed_dim}));
}

UrrlModel::Linear UrrlModel::add_linear(const std::string& name, Index in, Index out, bool xavier) {
  const double bound = xavier ? std::sqrt(6.0 / static_cast<double>(in + out)) : 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Eigen::VectorXd w(in * out);
  for (Index i = 0; i < w.size(); ++i) w[i] = u(init_rng_);
  Eigen::VectorXd b(out);
  if (xavier) {
    b.setZero();
  } else {
    for (Index i = 0; i < b.size(); ++i) b[i] = u(init_rng_);
  }
  Linear l;
  l.w = params_.add(name + ".w", Tensor::constant({in, out}, std::move(w)));
  l.b = params_.add(name + ".b", Tensor::constant({out}, std::move(b)));
  return l;
}

UrrlModel::Transformer UrrlModel::add_transformer(const std::string& name, Index width, int layers, int heads) {
  Transformer t;
  t.heads = heads;
  for (int l = 0; l < layers; ++l) {
    const std::string p = name + ".l" + std::to_string(l);
    Block b;
    b.ln1_g = params_.add(p + ".ln1.g", Tensor::full({width}, 1.0));
    b.ln1_b = params_.add(p + ".ln1.b", Tensor::zeros({width}));
    b.q = add_linear(p + ".attn.q", width, width, true);
    b.k = add_linear(p + ".attn.k", width, width, true);
    b.v = add_linear(p + ".attn.v", width, width, true);
    b.o = add_linear(p + ".attn.o", width, width);
    b.ln2_g = params_.add(p + ".ln2.g", Tensor::full({width}, 1.0));
    b.ln2_b = params_.add(p + ".ln2.b", Tensor::zeros({width}));
    b.ff1 = add_linear(p + ".ff1", width, cfg_.ff_mult * width);
    b.ff2 = add_linear(p + ".ff2", cfg_.ff_mult * width, width);
    t.blocks.push_back(b);
  }
  t.lnf_g = params_.add(name + ".lnf.g", Tensor::full({width}, 1.0));
  t.lnf_b = params_.add(name + ".lnf.b", Tensor::zeros({width}));
  return t;
}

UrrlModel::Mlp UrrlModel::add_mlp(const std::string& name, const std::vector<Index>& dims) {
  Mlp m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    m.layers.push_back(add_linear(name + ".fc" + std::to_string(i), dims[i], dims[i + 1]));
    if (i + 2 < dims.size()) m.slopes.push_back(params_.add(name + ".act" + std::to_string(i), Tensor::full({1}, 0.25)));
  }
  return m;
}

Tensor UrrlModel::apply(Bound p, const Linear& l, const Tensor& x) const {
  return add(matmul(x, p[l.w]), p[l.b]);
}

Tensor UrrlModel::apply(Bound p, const Mlp& m, const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    h = apply(p, m.layers[i], h);
    if (i < m.slopes.size()) h = prelu(h, p[m.slopes[i]]);
  }
  return h;
}

Tensor UrrlModel::apply(Bound p, const Transformer& t, Tensor x, const Tensor& key_mask) const {
  const Index width = x.dim(-1);
  const Index dh = width / t.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const Block& b : t.blocks) {
    const Tensor a = layer_norm(x, p[b.ln1_g], p[b.ln1_b]);
    const Tensor q = apply(p, b.q, a);
    const Tensor k = apply(p, b.k, a);
    const Tensor v = apply(p, b.v, a);
    std::vector<Tensor> heads;
    for (int h = 0; h < t.heads; ++h) {
      const Tensor qh = slice_last(q, h * dh, dh);
      const Tensor kh = slice_last(k, h * dh, dh);
      const Tensor vh = slice_last(v, h * dh, dh);
      const Tensor scores = scale(bmm(qh, transpose_last2(kh)), inv_sqrt);
      heads.push_back(bmm(masked_softmax(scores, key_mask), vh));
    }
    x = add(x, apply(p, b.o, concat(heads)));
    const Tensor f = layer_norm(x, p[b.ln2_g], p[b.ln2_b]);
    x = add(x, apply(p, b.ff2, relu(apply(p, b.ff1, f))));
  }
  return layer_norm(x, p[t.lnf_g], p[t.lnf_b]);
}

Tensor UrrlModel::select_output(Bound p, const OutputSelector& sel, const std::optional<Linear>& proj,
                                const Tensor& seq, const Tensor& weights) const {
  const Index G = seq.dim(0), T = seq.dim(1), D = seq.dim(2);
  switch (sel.choice) {
    case OutputChoice::kFirst: return take(seq, 1, 0);
    case OutputChoice::kNth: return take(seq, 1, sel.index);
    case OutputChoice::kMean: return sum_axis(mul(seq, reshape(weights, {G, T, 1})), 1);
    case OutputChoice::kConcatLinear: return apply(p, *proj, reshape(seq, {G, T * D}));
  }
  throw ContractError("unknown output choice");
}

Tensor UrrlModel::nde_forward(Bound p, Index view, const Tensor& tokens, const Tensor& key_mask) const {
  const Index G = tokens.dim(0), k = tokens.dim(1);
  const auto& km = key_mask.values();
  Eigen::VectorXd w(G * k);
  for (Index g = 0; g < G; ++g) {
    Index valid = 0;
    for (Index j = 0; j < k; ++j) valid += km[g * k + j] == 0.0 ? 1 : 0;
    if (valid == 0) throw ContractError("nde_forward: sample without any valid neighbor slot");
    for (Index j = 0; j < k; ++j) w[g * k + j] = km[g * k + j] == 0.0 ? 1.0 / static_cast<double>(valid) : 0.0;
  }
  const Tensor h = apply(p, nde_[static_cast<std::size_t>(view)], tokens, key_mask);
  return select_output(p, cfg_.nde_output, nde_proj_[static_cast<std::size_t>(view)], h,
                       Tensor::constant({G, k}, std::move(w)));
}

Tensor UrrlModel::vde_forward(Bound p, std::span<const Tensor> nde_out, std::span<const std::vector<Index>> present,
                              const RowMatrix& mask) const {
  const Index B = mask.rows(), V = mask.cols();
  const Index de = cfg_.embed_dim;
  std::vector<Tensor> tokens;
  for (Index v = 0; v < V; ++v) {
    const auto& rows = present[static_cast<std::size_t>(v)];
    if (rows.empty()) {
      tokens.push_back(Tensor::zeros({B, de}));
      continue;
    }
    const Tensor f = apply(p, vde_ffn_[static_cast<std::size_t>(v)], nde_out[static_cast<std::size_t>(v)]);
    if (static_cast<Index>(rows.size()) == B) {
      tokens.push_back(f);
    } else {
      tokens.push_back(scatter_rows(f, rows, B));
    }
  }
  Eigen::VectorXd w(B * V);
  for (Index b = 0; b < B; ++b) {
    Index live = 0;
    for (Index v = 0; v < V; ++v) live += mask(b, v) != kNegInf ? 1 : 0;
    if (live == 0) throw ContractError("vde_forward: sample with every view masked");
    for (Index v = 0; v < V; ++v) w[b * V + v] = mask(b, v) != kNegInf ? 1.0 / static_cast<double>(live) : 0.0;
  }
  const Tensor seq = reshape(concat(tokens), {B, V, de});
  const Tensor key_mask = Tensor::constant({B, 1, V}, Eigen::Map<const Eigen::VectorXd>(mask.data(), mask.size()));
  const Tensor h = apply(p, vde_, seq, key_mask);
  return select_output(p, cfg_.vde_output, vde_proj_, h, Tensor::constant({B, V}, std::move(w)));
}

Tensor UrrlModel::encode(Bound p, const EncoderInput& in) const {
  const Index B = in.batch, V = cfg_.num_views(), k = cfg_.k;
  if (static_cast<Index>(in.rows.size()) != V || in.k != k) {
    throw DimensionError("encode: input has " + std::to_string(in.rows.size()) + " views and k=" +
                         std::to_string(in.k) + ", model expects " + std::to_string(V) + " and " + std::to_string(k));
  }
  RowMatrix mask(B, V);
  std::vector<std::vector<Index>> present(static_cast<std::size_t>(V));
  for (Index b = 0; b < B; ++b) {
    for (Index v = 0; v < V; ++v) {
      const bool any = in.validity[static_cast<std::size_t>(v)].row(b).cast<int>().sum() > 0;
      if (any) present[static_cast<std::size_t>(v)].push_back(b);
      if (in.view_mask(b, v)) {
        mask(b, v) = 0.0;
      } else if (any) {
        mask(b, v) = cfg_.tam ? cfg_.gamma : 0.0;
      } else {
        mask(b, v) = kNegInf;
      }
    }
  }
  std::vector<Tensor> nde_out(static_cast<std::size_t>(V));
  for (Index v = 0; v < V; ++v) {
    const auto& rows = present[static_cast<std::size_t>(v)];
    if (rows.empty()) continue;
    const Index dv = cfg_.view_dims[static_cast<std::size_t>(v)];
    const Index D = dv + k;
    const Index P = static_cast<Index>(rows.size());
    const RowMatrix& x = in.rows[static_cast<std::size_t>(v)];
    if (x.cols() != dv) throw DimensionError("encode: view " + std::to_string(v) + " has wrong feature dimension");
    const ValidityMatrix& val = in.validity[static_cast<std::size_t>(v)];
    Eigen::VectorXd tokens(P * k * D);
    Eigen::VectorXd key_mask(P * k);
    for (Index r = 0; r < P; ++r) {
      const Index b = rows[static_cast<std::size_t>(r)];
      const RowMatrix stack = x.middleRows(b * k, k);
      const auto vrow = val.row(b);
      const RowMatrix t = cdpe(stack, std::span<const std::uint8_t>(vrow.data(), static_cast<std::size_t>(k)), cfg_.cdpe);
      tokens.segment(r * k * D, k * D) = Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
      for (Index j = 0; j < k; ++j) key_mask[r * k + j] = vrow(j) ? 0.0 : kNegInf;
    }
    nde_out[static_cast<std::size_t>(v)] =
        nde_forward(p, v, Tensor::constant({P, k, D}, std::move(tokens)), Tensor::constant({P, 1, k}, std::move(key_mask)));
  }
  return vde_forward(p, nde_out, present, mask);
}

std::vector<Tensor> UrrlModel::decode(Bound p, const Tensor& z) const {
  std::vector<Tensor> out;
  for (const Mlp& m : decoders_) out.push_back(apply(p, m, z));
  return out;
}

}  // namespace urrl
