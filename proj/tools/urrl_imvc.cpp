// urrl_imvc: command-line front end.
//
// Settings are resolved in this order, later wins: built-in defaults, the
// --config file, --set key=value assignments, dedicated flags.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "urrl/errors.hpp"
#include "urrl/experiment.hpp"

namespace fs = std::filesystem;
using namespace urrl;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> assignments;
  std::optional<double> missing_rate, gamma, lambda1, lambda2;
  std::optional<int> miss_per_sample, epochs_pretrain, epochs_joint;
  std::optional<long long> k;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool training_flags) {
  cmd->add_option("--config", c.config, "key = value spec file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.assignments, "override one spec key (key=value), repeatable");
  cmd->add_option("--missing-rate", c.missing_rate, "fraction of incomplete samples");
  cmd->add_option("--miss-per-sample", c.miss_per_sample, "views removed per incomplete sample");
  cmd->add_option("--seed", c.seed, "seed (replaces the spec's seed list)");
  if (!training_flags) return;
  cmd->add_option("--k", c.k, "neighbors per view");
  cmd->add_option("--gamma", c.gamma, "TAM value of imputed views");
  cmd->add_option("--lambda1", c.lambda1, "augmentation loss weight");
  cmd->add_option("--lambda2", c.lambda2, "clustering loss weight");
  cmd->add_option("--epochs-pretrain", c.epochs_pretrain, "stage-1 epochs");
  cmd->add_option("--epochs-joint", c.epochs_joint, "stage-2 epochs");
}

ExperimentSpec resolve(const Common& c) {
  ExperimentSpec spec = c.config.empty() ? ExperimentSpec{} : load_spec(c.config);
  for (const std::string& a : c.assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw FormatError("--set expects key=value, got \"" + a + "\"");
    set_spec_value(spec, a.substr(0, eq), a.substr(eq + 1));
  }
  const auto num = [](double v) { return format_double(v); };
  if (c.missing_rate) set_spec_value(spec, "missing_rate", num(*c.missing_rate));
  if (c.miss_per_sample) set_spec_value(spec, "miss_per_sample", std::to_string(*c.miss_per_sample));
  if (c.k) set_spec_value(spec, "k", std::to_string(*c.k));
  if (c.gamma) set_spec_value(spec, "gamma", num(*c.gamma));
  if (c.lambda1) set_spec_value(spec, "lambda1", num(*c.lambda1));
  if (c.lambda2) set_spec_value(spec, "lambda2", num(*c.lambda2));
  if (c.epochs_pretrain) set_spec_value(spec, "epochs_pretrain", std::to_string(*c.epochs_pretrain));
  if (c.epochs_joint) set_spec_value(spec, "epochs_joint", std::to_string(*c.epochs_joint));
  if (c.seed) set_spec_value(spec, "seeds", std::to_string(*c.seed));
  validate_spec(spec);
  return spec;
}

MultiViewDataset load_any(const fs::path& p) { return fs::is_directory(p) ? load_dataset_csv(p) : load_dataset(p); }

void print_run(const RunResult& r) {
  std::printf("seed %llu  m_r=%s  acc=%.4f  nmi=%.4f  ari=%.4f  (%.1f s)%s\n",
              static_cast<unsigned long long>(r.seed), format_double(r.missing_rate).c_str(), r.scores.acc,
              r.scores.nmi, r.scores.ari, r.seconds, r.stage2_skipped ? "  [stage 2 skipped]" : "");
  std::fflush(stdout);
}

int cmd_synth(const Common& c, const std::string& out, bool csv) {
  ExperimentSpec spec = resolve(c);
  if (c.seed) spec.synth.seed = *c.seed;
  MultiViewDataset ds = synthesize(spec.synth);
  if (spec.missing.missing_rate > 0.0) {
    ds = prepare_dataset(ds, spec.missing.missing_rate, spec.missing.missing_per_sample, spec.synth.seed);
  }
  if (csv) {
    save_dataset_csv(ds, out);
  } else {
    save_dataset(ds, out);
  }
  std::printf("wrote %s: N=%lld V=%lld clusters=%d missing fraction %.4f\n", out.c_str(),
              static_cast<long long>(ds.num_samples()), static_cast<long long>(ds.num_views()), ds.num_clusters,
              missing_fraction(ds.mask));
  return 0;
}

int cmd_mask(const Common& c, const std::string& in, const std::string& out) {
  const ExperimentSpec spec = resolve(c);
  const MultiViewDataset ds = prepare_dataset(load_any(in), spec.missing.missing_rate,
                                              spec.missing.missing_per_sample, spec.seeds.front());
  save_dataset(ds, out);
  std::printf("wrote %s: missing fraction %.4f\n", out.c_str(), missing_fraction(ds.mask));
  return 0;
}

int cmd_train(const Common& c, const std::string& data, const fs::path& out) {
  const ExperimentSpec spec = resolve(c);
  const MultiViewDataset base = load_any(data);
  fs::create_directories(out);
  std::vector<RunResult> runs;
  for (std::uint64_t seed : spec.seeds) {
    std::optional<UrrlModel> model;
    RunResult r = run_single(base, spec, seed, spec.missing.missing_rate, &model);
    const std::string tag = "seed" + std::to_string(seed);
    save_checkpoint(*model, out / ("model_" + tag + ".urrl"));
    write_loss_history(out / ("loss_" + tag + ".csv"), r.history);
    print_run(r);
    runs.push_back(std::move(r));
  }
  write_text_atomic(out / "report.json", run_report_json(spec, runs, data));
  write_text_atomic(out / "report.timing.json", timing_json(runs));
  const MetricSummary acc = summarize([&] {
    std::vector<double> v;
    for (const RunResult& r : runs) v.push_back(r.scores.acc);
    return v;
  }());
  std::printf("acc %.4f +- %.4f over %zu seed(s); report in %s\n", acc.mean, acc.std, runs.size(),
              (out / "report.json").string().c_str());
  if (runs.front().stage2_skipped) std::printf("note: stage 2 skipped\n");
  return 0;
}

int cmd_sweep(const Common& c, const std::string& data, const fs::path& out, const std::string& rates) {
  ExperimentSpec spec = resolve(c);
  if (!rates.empty()) set_spec_value(spec, "sweep_rates", rates);
  validate_spec(spec);
  const MultiViewDataset base = load_any(data);
  fs::create_directories(out);
  std::vector<RunResult> runs;
  for (double rate : spec.sweep_rates) {
    for (std::uint64_t seed : spec.seeds) {
      RunResult r = run_single(base, spec, seed, rate);
      print_run(r);
      runs.push_back(std::move(r));
    }
  }
  const std::vector<SweepPoint> points = aggregate_sweep(runs);
  write_csv(out / "sweep.csv", sweep_table(runs));
  write_text_atomic(out / "sweep.svg", sweep_svg(points));
  const std::vector<double> anomalies = sweep_anomalies(points);
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(run_report_json(spec, runs, data));
  j["anomalous_rates"] = anomalies;
  j["trend_anomaly"] = !anomalies.empty();
  write_text_atomic(out / "sweep.json", j.dump(2) + "\n");
  write_text_atomic(out / "sweep.timing.json", timing_json(runs));
  for (double r : anomalies) {
    std::fprintf(stderr, "warning: mean Acc rises by more than 2 points at m_r=%s\n", format_double(r).c_str());
  }
  std::printf("sweep of %zu rate(s) x %zu seed(s) written to %s\n", spec.sweep_rates.size(), spec.seeds.size(),
              out.string().c_str());
  return 0;
}

int cmd_gradcheck(const Common& c) {
  const ExperimentSpec spec = resolve(c);
  const std::vector<GradCheckRow> rows = gradcheck_suite(spec.seeds.front());
  bool ok = true;
  std::printf("%-10s %14s %10s  %s\n", "module", "max rel err", "threshold", "result");
  for (const GradCheckRow& r : rows) {
    std::printf("%-10s %14.3e %10.0e  %s\n", r.name.c_str(), r.max_rel_error, r.threshold,
                r.passed() ? "pass" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? 0 : 1;
}

int cmd_embed(const std::string& data, const std::string& checkpoint, const fs::path& out) {
  const MultiViewDataset ds = load_any(data);
  const UrrlModel model = load_checkpoint(checkpoint);
  const Prediction pred = predict(model, ds, KidaOptions{});
  fs::create_directories(out);
  save_embeddings(pred.embeddings, out / "embeddings.embd");
  write_labels_csv(out / "labels.csv", pred.labels);
  std::printf("wrote %lld x %lld embeddings and labels to %s\n", static_cast<long long>(pred.embeddings.rows()),
              static_cast<long long>(pred.embeddings.cols()), out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"URRL-IMVC incomplete multi-view clustering"};
  app.require_subcommand(1);
  app.set_version_flag("--version", build_id());

  Common synth_c, mask_c, train_c, sweep_c, grad_c;
  std::string synth_out, mask_in, mask_out, train_data, train_out, sweep_data, sweep_out, sweep_rates;
  std::string embed_data, embed_ckpt, embed_out;
  bool synth_csv = false;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic multi-view dataset");
  add_common(synth, synth_c, false);
  synth->add_option("--out", synth_out, "output MVDS file (or directory with --csv)")->required();
  synth->add_flag("--csv", synth_csv, "write a CSV directory instead");

  CLI::App* mask = app.add_subcommand("mask", "apply the missing-view protocol to a complete dataset");
  add_common(mask, mask_c, false);
  mask->add_option("--data", mask_in, "complete dataset")->required();
  mask->add_option("--out", mask_out, "output MVDS file")->required();

  CLI::App* train = app.add_subcommand("train", "train and evaluate one or more seeds");
  add_common(train, train_c, true);
  train->add_option("--data", train_data, "dataset file or CSV directory")->required();
  train->add_option("--out", train_out, "output directory")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "scores across missing rates");
  add_common(sweep, sweep_c, true);
  sweep->add_option("--data", sweep_data, "complete dataset file or CSV directory")->required();
  sweep->add_option("--out", sweep_out, "output directory")->required();
  sweep->add_option("--rates", sweep_rates, "comma-separated missing rates");

  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks per module");
  add_common(grad, grad_c, false);

  CLI::App* embed = app.add_subcommand("embed", "dump embeddings and hard labels");
  embed->add_option("--data", embed_data, "dataset file or CSV directory")->required();
  embed->add_option("--checkpoint", embed_ckpt, "trained model")->required()->check(CLI::ExistingFile);
  embed->add_option("--out", embed_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(synth_c, synth_out, synth_csv);
    if (*mask) return cmd_mask(mask_c, mask_in, mask_out);
    if (*train) return cmd_train(train_c, train_data, train_out);
    if (*sweep) return cmd_sweep(sweep_c, sweep_data, sweep_out, sweep_rates);
    if (*grad) return cmd_gradcheck(grad_c);
    if (*embed) return cmd_embed(embed_data, embed_ckpt, embed_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
