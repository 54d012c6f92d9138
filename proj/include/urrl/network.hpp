#pragma once

// The fusion auto-encoder: per-view neighbor encoders (NDE) with cosine
// distance positional encoding, a view encoder (VDE) with the three-level
// adaptive mask, per-view decoders and a Student-t clustering head.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "urrl/impute.hpp"
#include "urrl/tensor.hpp"

namespace urrl {

enum class OutputChoice { kFirst, kNth, kMean, kConcatLinear };

struct OutputSelector {
  OutputChoice choice = OutputChoice::kFirst;
  Index index = 0;  // token picked by kNth
};

std::string to_string(const OutputSelector& s);
OutputSelector parse_output_selector(const std::string& text);

struct ModelConfig {
  std::vector<Index> view_dims;
  Index k = 4;
  Index embed_dim = 256;
  int num_clusters = 2;
  int nde_layers = 1;
  int nde_heads = 4;
  int vde_layers = 1;
  int vde_heads = 4;
  int ff_mult = 2;  // transformer feed-forward width = ff_mult * token width
  Index vde_hidden = 256;
  Index decoder_hidden = 256;
  OutputSelector nde_output{OutputChoice::kFirst, 0};
  OutputSelector vde_output{OutputChoice::kMean, 0};
  double gamma = -10.0;
  bool cdpe = true;
  bool tam = true;  // off: binary mask, imputed views count as present
  std::uint64_t init_seed = 0;

  Index num_views() const { return static_cast<Index>(view_dims.size()); }
  Index nde_width(Index v) const { return view_dims[static_cast<std::size_t>(v)] + k; }
  void validate() const;
};

/// Named, ordered parameter tensors.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value);
  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Tensor& value(std::size_t i) const { return values_[i]; }
  void set(std::size_t i, Eigen::VectorXd values);
  std::optional<std::size_t> find(const std::string& name) const;
  std::vector<Tensor> bind(Tape& tape) const;
  const std::vector<Tensor>& constants() const { return values_; }
  Index num_scalars() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

using Bound = std::span<const Tensor>;

/// One twin (clean or augmented) of a minibatch, flattened per view.
struct EncoderInput {
  Index batch = 0;
  Index k = 0;
  std::vector<RowMatrix> rows;          // per view: (B*k) x d_v
  std::vector<ValidityMatrix> validity; // per view: B x k
  ViewMask view_mask;                   // B x V
};

EncoderInput make_encoder_input(std::span<const KidaSample> samples, bool augmented);

/// Neighbor stack with its k x k pairwise cosine distances appended. Rows and
/// columns of the distance block at invalid slots are zero; with
/// `enabled == false` the whole block is zero.
RowMatrix cdpe(const RowMatrix& stack, std::span<const std::uint8_t> validity, bool enabled = true);

/// Additive mask over views: 0 present, gamma imputed, -inf empty.
Eigen::RowVectorXd tam(const ValidityMatrix& validity, const MaskRow& view_mask, double gamma);

/// Student-t (one degree of freedom) soft assignment, [B, d_e] x [C, d_e] -> [B, C].
Tensor soft_assign(const Tensor& z, const Tensor& centers);

/// Sharpened DEC target. Clusters with zero soft size are left out of the
/// row normalisation.
RowMatrix target_distribution(const RowMatrix& q);

class UrrlModel {
 public:
  explicit UrrlModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::size_t centers_param() const { return centers_; }

  /// Unified embedding z, [B, d_e].
  Tensor encode(Bound p, const EncoderInput& in) const;
  /// Per-view reconstructions, each [B, d_v].
  std::vector<Tensor> decode(Bound p, const Tensor& z) const;
  Tensor assign(Bound p, const Tensor& z) const { return soft_assign(z, p[centers_]); }

  /// NDE of one view over [G, k, d_v + k] tokens with a [G, 1, k] key mask.
  Tensor nde_forward(Bound p, Index view, const Tensor& tokens, const Tensor& key_mask) const;
  /// VDE over per-view NDE outputs. `present[v]` lists the batch rows whose
  /// view v went through the NDE (nde_out[v] is [present[v].size(), d_v + k]
  /// or undefined when empty). `mask` is the [B, V] TAM.
  Tensor vde_forward(Bound p, std::span<const Tensor> nde_out, std::span<const std::vector<Index>> present,
                     const RowMatrix& mask) const;

 private:
  struct Linear {
    std::size_t w, b;
  };
  struct Block {
    std::size_t ln1_g, ln1_b;
    Linear q, k, v, o;
    std::size_t ln2_g, ln2_b;
    Linear ff1, ff2;
  };
  struct Transformer {
    std::vector<Block> blocks;
    std::size_t lnf_g, lnf_b;
    int heads;
  };
  struct Mlp {
    std::vector<Linear> layers;
    std::vector<std::size_t> slopes;  // one PReLU between consecutive layers
  };

  Linear add_linear(const std::string& name, Index in, Index out, bool xavier = false);
  Transformer add_transformer(const std::string& name, Index width, int layers, int heads);
  Mlp add_mlp(const std::string& name, const std::vector<Index>& dims);

  Tensor apply(Bound p, const Linear& l, const Tensor& x) const;
  Tensor apply(Bound p, const Mlp& m, const Tensor& x) const;
  Tensor apply(Bound p, const Transformer& t, Tensor x, const Tensor& key_mask) const;
  Tensor select_output(Bound p, const OutputSelector& sel, const std::optional<Linear>& proj, const Tensor& seq,
                       const Tensor& weights) const;

  ModelConfig cfg_;
  ParamStore params_;
  std::vector<Transformer> nde_;
  std::vector<std::optional<Linear>> nde_proj_;
  std::vector<Mlp> vde_ffn_;
  Transformer vde_;
  std::optional<Linear> vde_proj_;
  std::vector<Mlp> decoders_;
  std::size_t centers_ = 0;
  std::mt19937_64 init_rng_;
};

// Checkpoint container "URRL": architecture plus every named parameter.
void save_checkpoint(const UrrlModel& model, const std::filesystem::path& path);
UrrlModel load_checkpoint(const std::filesystem::path& path);

}  // namespace urrl
