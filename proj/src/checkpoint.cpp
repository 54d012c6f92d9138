#include "binary_io.hpp"
#include "urrl/errors.hpp"
#include "urrl/network.hpp"

namespace urrl {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
const char* const kConfigTensor = "meta.config";

Eigen::VectorXd encode_config(const ModelConfig& c) {
  std::vector<double> v;
  v.push_back(static_cast<double>(c.num_views()));
  for (Index d : c.view_dims) v.push_back(static_cast<double>(d));
  for (double x : {static_cast<double>(c.k), static_cast<double>(c.embed_dim), static_cast<double>(c.num_clusters),
                   static_cast<double>(c.nde_layers), static_cast<double>(c.nde_heads),
                   static_cast<double>(c.vde_layers), static_cast<double>(c.vde_heads),
                   static_cast<double>(c.ff_mult), static_cast<double>(c.vde_hidden),
                   static_cast<double>(c.decoder_hidden), static_cast<double>(c.nde_output.choice),
                   static_cast<double>(c.nde_output.index), static_cast<double>(c.vde_output.choice),
                   static_cast<double>(c.vde_output.index), c.gamma, c.cdpe ? 1.0 : 0.0, c.tam ? 1.0 : 0.0}) {
    v.push_back(x);
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

ModelConfig decode_config(const Eigen::VectorXd& v, const std::string& ctx) {
  constexpr Index kFixed = 17;
  if (v.size() < 1 || v.size() != 1 + static_cast<Index>(v[0]) + kFixed) {
    throw FormatError(ctx + ": malformed meta.config");
  }
  ModelConfig c;
  const auto V = static_cast<Index>(v[0]);
  Index i = 1;
  for (Index j = 0; j < V; ++j) c.view_dims.push_back(static_cast<Index>(v[i++]));
  c.k = static_cast<Index>(v[i++]);
  c.embed_dim = static_cast<Index>(v[i++]);
  c.num_clusters = static_cast<int>(v[i++]);
  c.nde_layers = static_cast<int>(v[i++]);
  c.nde_heads = static_cast<int>(v[i++]);
  c.vde_layers = static_cast<int>(v[i++]);
  c.vde_heads = static_cast<int>(v[i++]);
  c.ff_mult = static_cast<int>(v[i++]);
  c.vde_hidden = static_cast<Index>(v[i++]);
  c.decoder_hidden = static_cast<Index>(v[i++]);
  c.nde_output.choice = static_cast<OutputChoice>(static_cast<int>(v[i++]));
  c.nde_output.index = static_cast<Index>(v[i++]);
  c.vde_output.choice = static_cast<OutputChoice>(static_cast<int>(v[i++]));
  c.vde_output.index = static_cast<Index>(v[i++]);
  c.gamma = v[i++];
  c.cdpe = v[i++] != 0.0;
  c.tam = v[i++] != 0.0;
  return c;
}

void write_tensor(detail::ByteWriter& w, const std::string& name, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.magic(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (Index d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (Index i = 0; i < t.size(); ++i) w.f64(t[i]);
}

std::pair<std::string, Tensor> read_tensor(detail::ByteReader& r) {
  const std::uint32_t len = r.u32("name length");
  std::string name = r.str(len, "name");
  const std::uint32_t rank = r.u32("rank");
  if (rank > 8) throw FormatError(r.context() + ": tensor " + name + " has implausible rank");
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = r.u32("dims");
    if (d == 0) throw FormatError(r.context() + ": tensor " + name + " has a zero dimension");
    shape.push_back(d);
  }
  const Index n = shape_size(shape);
  r.need(static_cast<std::size_t>(n) * 8, "payload");
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = r.f64("payload");
  return {std::move(name), Tensor::constant(std::move(shape), std::move(v))};
}

}  // namespace

void save_checkpoint(const UrrlModel& model, const std::filesystem::path& path) {
  const ParamStore& ps = model.params();
  detail::ByteWriter w;
  w.magic("URRL");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ps.size() + 1));
  const Eigen::VectorXd meta = encode_config(model.config());
  write_tensor(w, kConfigTensor, Tensor::constant({meta.size()}, meta));
  for (std::size_t i = 0; i < ps.size(); ++i) write_tensor(w, ps.name(i), ps.value(i));
  detail::write_file_atomic(path, w.data());
}

UrrlModel load_checkpoint(const std::filesystem::path& path) {
  const std::string ctx = path.string();
  detail::ByteReader r(detail::read_file(path), ctx);
  r.expect_magic("URRL");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) throw FormatError(ctx + ": unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32("tensor count");
  if (count == 0) throw FormatError(ctx + ": empty checkpoint");
  auto [meta_name, meta] = read_tensor(r);
  if (meta_name != kConfigTensor) throw FormatError(ctx + ": first tensor must be " + kConfigTensor);
  UrrlModel model(decode_config(meta.values(), ctx));
  ParamStore& ps = model.params();
  if (count - 1 != ps.size()) {
    throw FormatError(ctx + ": " + std::to_string(count - 1) + " parameters, architecture expects " +
                      std::to_string(ps.size()));
  }
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto [name, t] = read_tensor(r);
    if (name != ps.name(i)) throw FormatError(ctx + ": expected parameter " + ps.name(i) + ", found " + name);
    if (t.shape() != ps.value(i).shape()) {
      throw FormatError(ctx + ": parameter " + name + " has shape " + shape_string(t.shape()) + ", expected " +
                        shape_string(ps.value(i).shape()));
    }
    ps.set(i, t.values());
  }
  if (!r.at_end()) throw FormatError(ctx + ": trailing bytes");
  return model;
}

}  // namespace urrl
