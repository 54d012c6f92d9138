#pragma once

// Small models and random encoder inputs shared by the network tests and the
// acceptance runner.

#include <random>
#include <regex>
#include <string>
#include <vector>

#include "urrl/network.hpp"

namespace urrl::fixture {

inline RowMatrix randn(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  RowMatrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline ModelConfig small_config(std::vector<Index> dims, std::uint64_t seed = 0) {
  ModelConfig c;
  c.view_dims = std::move(dims);
  c.k = 4;
  c.embed_dim = 8;
  c.vde_hidden = 8;
  c.decoder_hidden = 8;
  c.num_clusters = 3;
  c.init_seed = seed;
  return c;
}

// Random encoder input: per sample, each view is present, imputed (some
// valid slots) or empty, with at least one view not empty.
inline EncoderInput random_input(const ModelConfig& c, Index B, std::mt19937_64& rng) {
  const Index V = c.num_views(), k = c.k;
  std::uniform_int_distribution<int> kind(0, 2);
  std::bernoulli_distribution half(0.5);
  EncoderInput in;
  in.batch = B;
  in.k = k;
  in.view_mask = ViewMask::Zero(B, V);
  for (Index v = 0; v < V; ++v) {
    in.rows.push_back(randn(B * k, c.view_dims[static_cast<std::size_t>(v)], rng));
    in.validity.push_back(ValidityMatrix::Zero(B, k));
  }
  for (Index b = 0; b < B; ++b) {
    bool any = false;
    for (Index v = 0; v < V; ++v) {
      int t = kind(rng);
      if (v == V - 1 && !any && t == 2) t = 0;
      ValidityMatrix& val = in.validity[static_cast<std::size_t>(v)];
      if (t == 0) {
        in.view_mask(b, v) = 1;
        val(b, 0) = 1;
        for (Index j = 1; j < k; ++j) val(b, j) = half(rng) ? 1 : 0;
      } else if (t == 1) {
        for (Index j = 0; j < k; ++j) val(b, j) = j == 0 || half(rng) ? 1 : 0;
      }
      any = any || t != 2;
      for (Index j = 0; j < k; ++j) {
        if (!val(b, j)) in.rows[static_cast<std::size_t>(v)].row(b * k + j).setZero();
      }
    }
  }
  return in;
}

inline RowMatrix encode(const UrrlModel& m, const EncoderInput& in) {
  return m.encode(m.params().constants(), in).matrix();
}

// Model whose view u is view perm[u] of `base`, with matching parameters.
inline UrrlModel permuted_model(const UrrlModel& base, const std::vector<Index>& perm) {
  ModelConfig c = base.config();
  for (std::size_t u = 0; u < perm.size(); ++u) {
    c.view_dims[u] = base.config().view_dims[static_cast<std::size_t>(perm[u])];
  }
  UrrlModel out(c);
  const std::regex view_tag(R"((nde|vde\.ffn|dec)\.v(\d+))");
  for (std::size_t i = 0; i < out.params().size(); ++i) {
    const std::string& name = out.params().name(i);
    std::smatch m;
    std::string src = name;
    if (std::regex_search(name, m, view_tag)) {
      const auto u = static_cast<std::size_t>(std::stoi(m[2].str()));
      src = m.prefix().str() + m[1].str() + ".v" + std::to_string(perm[u]) + m.suffix().str();
    }
    out.params().set(i, base.params().value(*base.params().find(src)).values());
  }
  return out;
}

inline EncoderInput permute_input(const EncoderInput& in, const std::vector<Index>& perm) {
  EncoderInput out = in;
  for (std::size_t u = 0; u < perm.size(); ++u) {
    const auto src = static_cast<std::size_t>(perm[u]);
    out.rows[u] = in.rows[src];
    out.validity[u] = in.validity[src];
    out.view_mask.col(static_cast<Index>(u)) = in.view_mask.col(perm[u]);
  }
  return out;
}

}  // namespace urrl::fixture
