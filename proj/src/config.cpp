#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <string>

#include "urrl/errors.hpp"
#include "urrl/experiment.hpp"

namespace urrl {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("expected a number, got \"" + s + "\"");
  return v;
}

long long to_int(const std::string& s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("expected an integer, got \"" + s + "\"");
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("expected a non-negative integer, got \"" + s + "\"");
  }
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "on" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "off" || s == "0" || s == "no") return false;
  throw FormatError("expected true/false, got \"" + s + "\"");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw FormatError("empty entry in list \"" + s + "\"");
    out.push_back(item);
  }
  if (out.empty()) throw FormatError("empty list");
  return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <class T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}

std::string center_init_name(CenterInit c) { return c == CenterInit::kWard ? "ward" : "kmeans++"; }

struct KeyDef {
  SpecKey doc;
  std::function<void(ExperimentSpec&, const std::string&)> set;
  std::function<std::string(const ExperimentSpec&)> get;
};

#define URRL_KEY(name, help, setter, getter)                                                          \
  KeyDef {                                                                                            \
    SpecKey{name, "", help}, [](ExperimentSpec & s, const std::string& v) { setter; },                \
        [](const ExperimentSpec& s) -> std::string { return getter; }                                 \
  }

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = [] {
    std::vector<KeyDef> d{
        URRL_KEY("synth.num_samples", "synthetic sample count N", s.synth.num_samples = to_int(v),
                 std::to_string(s.synth.num_samples)),
        URRL_KEY("synth.num_views", "synthetic view count V", s.synth.num_views = to_int(v),
                 std::to_string(s.synth.num_views)),
        URRL_KEY("synth.num_clusters", "synthetic cluster count", s.synth.num_clusters = static_cast<int>(to_int(v)),
                 std::to_string(s.synth.num_clusters)),
        URRL_KEY("synth.view_dim", "feature dimension of every synthetic view", s.synth.view_dim = to_int(v),
                 std::to_string(s.synth.view_dim)),
        URRL_KEY("synth.latent_dim", "shared latent dimension", s.synth.latent_dim = to_int(v),
                 std::to_string(s.synth.latent_dim)),
        URRL_KEY("synth.separation", "pairwise center distance in latent standard deviations",
                 s.synth.separation = to_double(v), format_double(s.synth.separation)),
        URRL_KEY("synth.view_noise", "per-view additive noise scale", s.synth.view_noise = to_double(v),
                 format_double(s.synth.view_noise)),
        URRL_KEY("synth.seed", "synthetic generator seed", s.synth.seed = to_u64(v), std::to_string(s.synth.seed)),
        URRL_KEY("missing_rate", "fraction of incomplete samples m_r", s.missing.missing_rate = to_double(v),
                 format_double(s.missing.missing_rate)),
        URRL_KEY("miss_per_sample", "views removed per incomplete sample m_n",
                 s.missing.missing_per_sample = static_cast<int>(to_int(v)),
                 std::to_string(s.missing.missing_per_sample)),
        URRL_KEY("epochs_pretrain", "stage-1 epochs E_p", s.train.pretrain_epochs = static_cast<int>(to_int(v)),
                 std::to_string(s.train.pretrain_epochs)),
        URRL_KEY("epochs_joint", "stage-2 epochs E_j", s.train.joint_epochs = static_cast<int>(to_int(v)),
                 std::to_string(s.train.joint_epochs)),
        URRL_KEY("batch_size", "minibatch size B", s.train.batch_size = to_int(v),
                 std::to_string(s.train.batch_size)),
        URRL_KEY("lr", "learning rate", s.train.learning_rate = to_double(v), format_double(s.train.learning_rate)),
        URRL_KEY("weight_decay", "decoupled weight decay", s.train.weight_decay = to_double(v),
                 format_double(s.train.weight_decay)),
        URRL_KEY("lambda1", "weight of the augmentation loss", s.train.lambda1 = to_double(v),
                 format_double(s.train.lambda1)),
        URRL_KEY("lambda2", "weight of the clustering loss in stage 2", s.train.lambda2 = to_double(v),
                 format_double(s.train.lambda2)),
        URRL_KEY("gamma", "TAM value of imputed views", s.train.model.gamma = to_double(v),
                 format_double(s.train.model.gamma)),
        URRL_KEY("k", "neighbors per view", s.train.kida.k = to_int(v), std::to_string(s.train.kida.k)),
        URRL_KEY("phi1", "view dropout probability when adaptive_phi1 is off", s.train.kida.aug.phi1 = to_double(v),
                 format_double(s.train.kida.aug.phi1)),
        URRL_KEY("adaptive_phi1", "derive phi1 from the missing fraction", s.train.adaptive_phi1 = to_bool(v),
                 fmt_bool(s.train.adaptive_phi1)),
        URRL_KEY("phi2", "gaussian noise scale", s.train.kida.aug.phi2 = to_double(v),
                 format_double(s.train.kida.aug.phi2)),
        URRL_KEY("phi3", "elementwise dropout probability", s.train.kida.aug.phi3 = to_double(v),
                 format_double(s.train.kida.aug.phi3)),
        URRL_KEY("epsilon", "floor of the adaptive phi1 schedule", s.train.kida.aug.epsilon = to_double(v),
                 format_double(s.train.kida.aug.epsilon)),
        URRL_KEY("embed_dim", "embedding dimension d_e", s.train.model.embed_dim = to_int(v),
                 std::to_string(s.train.model.embed_dim)),
        URRL_KEY("num_clusters", "cluster count d_c; 0 takes it from the dataset",
                 s.train.model.num_clusters = static_cast<int>(to_int(v)), std::to_string(s.train.model.num_clusters)),
        URRL_KEY("nde_layers", "NDE transformer blocks", s.train.model.nde_layers = static_cast<int>(to_int(v)),
                 std::to_string(s.train.model.nde_layers)),
        URRL_KEY("nde_heads", "NDE attention heads", s.train.model.nde_heads = static_cast<int>(to_int(v)),
                 std::to_string(s.train.model.nde_heads)),
        URRL_KEY("vde_layers", "VDE transformer blocks", s.train.model.vde_layers = static_cast<int>(to_int(v)),
                 std::to_string(s.train.model.vde_layers)),
        URRL_KEY("vde_heads", "VDE attention heads", s.train.model.vde_heads = static_cast<int>(to_int(v)),
                 std::to_string(s.train.model.vde_heads)),
        URRL_KEY("ff_mult", "transformer feed-forward width multiplier",
                 s.train.model.ff_mult = static_cast<int>(to_int(v)), std::to_string(s.train.model.ff_mult)),
        URRL_KEY("vde_hidden", "VDE FFN hidden width; 0 follows embed_dim", s.train.model.vde_hidden = to_int(v),
                 std::to_string(s.train.model.vde_hidden)),
        URRL_KEY("decoder_hidden", "decoder hidden width; 0 follows embed_dim",
                 s.train.model.decoder_hidden = to_int(v), std::to_string(s.train.model.decoder_hidden)),
        URRL_KEY("nde_output", "NDE output: first | nth:<i> | mean | concat",
                 s.train.model.nde_output = parse_output_selector(v), to_string(s.train.model.nde_output)),
        URRL_KEY("vde_output", "VDE output: first | nth:<i> | mean | concat",
                 s.train.model.vde_output = parse_output_selector(v), to_string(s.train.model.vde_output)),
        URRL_KEY("center_init", "center initialisation: ward | kmeans++",
                 if (v == "ward") s.train.center_init = CenterInit::kWard;
                 else if (v == "kmeans++") s.train.center_init = CenterInit::kKmeansPlusPlus;
                 else throw FormatError("expected ward or kmeans++, got \"" + v + "\""),
                 center_init_name(s.train.center_init)),
        URRL_KEY("center_init_cap", "subsample size for center initialisation", s.train.center_init_cap = to_int(v),
                 std::to_string(s.train.center_init_cap)),
        URRL_KEY("knn_imputation", "cross-view KNN imputation", s.train.kida.knn_imputation = to_bool(v),
                 fmt_bool(s.train.kida.knn_imputation)),
        URRL_KEY("augmentation", "view dropout, noise and feature dropout", s.train.kida.augmentation = to_bool(v),
                 fmt_bool(s.train.kida.augmentation)),
        URRL_KEY("cdpe_tam", "cosine distance positional encoding and three-level mask",
                 s.train.model.cdpe = s.train.model.tam = to_bool(v),
                 fmt_bool(s.train.model.cdpe && s.train.model.tam)),
        URRL_KEY("clustering_module", "stage-2 joint training with the clustering loss",
                 s.train.clustering_module = to_bool(v), fmt_bool(s.train.clustering_module)),
        URRL_KEY("seeds", "comma-separated repeat seeds",
                 {
                   s.seeds.clear();
                   for (const auto& item : split_list(v)) s.seeds.push_back(to_u64(item));
                 },
                 join<std::uint64_t>(s.seeds, [](const std::uint64_t& x) { return std::to_string(x); })),
        URRL_KEY("repeats", "repeat count; seeds 0..n-1 unless seeds is given",
                 {
                   const long long n = to_int(v);
                   if (n < 1) throw FormatError("repeats must be positive");
                   s.seeds.clear();
                   for (long long i = 0; i < n; ++i) s.seeds.push_back(static_cast<std::uint64_t>(i));
                 },
                 std::to_string(s.seeds.size())),
        URRL_KEY("sweep_rates", "comma-separated missing rates for sweep",
                 {
                   s.sweep_rates.clear();
                   for (const auto& item : split_list(v)) s.sweep_rates.push_back(to_double(item));
                 },
                 join<double>(s.sweep_rates, [](const double& x) { return format_double(x); })),
    };
    const ExperimentSpec defaults;
    for (KeyDef& k : d) k.doc.default_value = k.get(defaults);
    return d;
  }();
  return defs;
}

#undef URRL_KEY

const KeyDef& find_key(const std::string& key) {
  for (const KeyDef& k : key_defs()) {
    if (k.doc.name == key) return k;
  }
  throw FormatError("unknown key \"" + key + "\"");
}

}  // namespace

const std::vector<SpecKey>& spec_keys() {
  static const std::vector<SpecKey> keys = [] {
    std::vector<SpecKey> out;
    for (const KeyDef& k : key_defs()) out.push_back(k.doc);
    return out;
  }();
  return keys;
}

void set_spec_value(ExperimentSpec& spec, const std::string& key, const std::string& value) {
  const KeyDef& def = find_key(key);
  try {
    def.set(spec, value);
  } catch (const FormatError& e) {
    throw FormatError(key + ": " + e.what());
  }
}

ExperimentSpec parse_spec(std::istream& in, const std::string& source) {
  ExperimentSpec spec;
  bool seeds_set = false, repeats_set = false;
  std::size_t repeats = 0;
  std::vector<std::uint64_t> seed_list;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw FormatError(where + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    try {
      set_spec_value(spec, key, value);
    } catch (const FormatError& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (key == "seeds") {
      seeds_set = true;
      seed_list = spec.seeds;
    }
    if (key == "repeats") {
      repeats_set = true;
      repeats = spec.seeds.size();
    }
  }
  if (seeds_set) {
    // The seed list wins; an explicit repeat count must agree with it.
    spec.seeds = seed_list;
    if (repeats_set && repeats != seed_list.size()) {
      throw FormatError(source + ": repeats = " + std::to_string(repeats) + " but seeds lists " +
                        std::to_string(seed_list.size()));
    }
  }
  validate_spec(spec);
  return spec;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open spec");
  return parse_spec(in, path.string());
}

std::vector<std::pair<std::string, std::string>> spec_entries(const ExperimentSpec& spec) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const KeyDef& k : key_defs()) {
    if (k.doc.name == "repeats") continue;  // implied by seeds
    out.emplace_back(k.doc.name, k.get(spec));
  }
  return out;
}

void validate_spec(const ExperimentSpec& spec) {
  if (spec.seeds.empty()) throw FormatError("spec: at least one seed required");
  const double mr = spec.missing.missing_rate;
  if (mr < 0.0 || mr > 1.0) throw FormatError("spec: missing_rate must lie in [0, 1]");
  if (spec.missing.missing_per_sample < 1) throw FormatError("spec: miss_per_sample must be positive");
  for (double r : spec.sweep_rates) {
    if (r < 0.0 || r > 1.0) throw FormatError("spec: sweep rate " + format_double(r) + " outside [0, 1]");
  }
  const SyntheticSpec& s = spec.synth;
  if (s.num_samples < 1 || s.num_views < 1 || s.num_clusters < 1 || s.view_dim < 1 || s.latent_dim < 1) {
    throw FormatError("spec: synthetic sizes must be positive");
  }
  if (s.separation < 0.0 || s.view_noise < 0.0) throw FormatError("spec: separation and view_noise must be >= 0");
  try {
    spec.train.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("spec: ") + e.what());
  }
}

}  // namespace urrl
