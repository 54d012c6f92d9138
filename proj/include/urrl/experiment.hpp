#pragma once

// Experiment specs, orchestration and report artifacts behind the CLI.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "urrl/dataset.hpp"
#include "urrl/metrics.hpp"
#include "urrl/training.hpp"

namespace urrl {

/// Everything a run needs, read from `key = value` lines.
struct ExperimentSpec {
  SyntheticSpec synth;
  MissingProtocol missing;  // the seed comes from the repeat
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  std::vector<double> sweep_rates{0.0, 0.25, 0.5, 0.75};
};

/// Keys with their documented defaults and one-line descriptions.
struct SpecKey {
  std::string name;
  std::string default_value;
  std::string help;
};
const std::vector<SpecKey>& spec_keys();

/// Parses `key = value` lines; `#` starts a comment. Unknown keys and bad
/// values raise FormatError naming `source` and the line number.
ExperimentSpec parse_spec(std::istream& in, const std::string& source = "<spec>");
ExperimentSpec load_spec(const std::filesystem::path& path);

/// Applies one assignment with the same validation as a spec line.
void set_spec_value(ExperimentSpec& spec, const std::string& key, const std::string& value);

/// Effective value of every key, in spec_keys() order.
std::vector<std::pair<std::string, std::string>> spec_entries(const ExperimentSpec& spec);

/// Cross-field checks run after all assignments.
void validate_spec(const ExperimentSpec& spec);

// ---------------------------------------------------------------------------

struct RunResult {
  std::uint64_t seed = 0;
  double missing_rate = 0.0;
  ClusterScores scores;
  bool stage2_skipped = false;
  double phi1 = 0.0;
  double seconds = 0.0;
  std::vector<LossRecord> history;
};

/// Dataset a repeat trains on: `base` as-is when the missing rate is 0,
/// otherwise the missing protocol applied to the (complete) `base`.
MultiViewDataset prepare_dataset(const MultiViewDataset& base, double missing_rate, int missing_per_sample,
                                 std::uint64_t seed);

/// Trains and evaluates one repeat; optionally hands back the trained model.
RunResult run_single(const MultiViewDataset& base, const ExperimentSpec& spec, std::uint64_t seed,
                     double missing_rate, std::optional<UrrlModel>* model_out = nullptr);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};
MetricSummary summarize(std::span<const double> values);

// ---------------------------------------------------------------------------
// Artifacts. All writers go through a temporary file and a rename.

void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// One CSV record, RFC-4180 quoted where needed, CRLF-free.
std::string csv_row(std::span<const std::string> fields);
void write_csv(const std::filesystem::path& path, std::span<const std::vector<std::string>> rows);
/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

void write_loss_history(const std::filesystem::path& path, std::span<const LossRecord> history);

/// report.json contents (per-seed scores, mean and std, config echo, build id).
/// Deliberately free of timings so equal runs give equal bytes.
std::string run_report_json(const ExperimentSpec& spec, std::span<const RunResult> runs, const std::string& dataset);
std::string timing_json(std::span<const RunResult> runs);

struct SweepPoint {
  double missing_rate = 0.0;
  MetricSummary acc, nmi, ari;
};
std::vector<SweepPoint> aggregate_sweep(std::span<const RunResult> runs);
/// Rates at which mean Acc exceeds the previous rate's by more than `threshold`.
std::vector<double> sweep_anomalies(std::span<const SweepPoint> points, double threshold = 0.02);
/// Columns: kind,missing_rate,seed,acc,nmi,ari with kind in run|mean|std.
std::vector<std::vector<std::string>> sweep_table(std::span<const RunResult> runs);
std::string sweep_svg(std::span<const SweepPoint> points);

// Embedding dump: "EMBD", u32 version, u32 N, u32 d_e, N*d_e float64 row-major.
void save_embeddings(const RowMatrix& z, const std::filesystem::path& path);
RowMatrix load_embeddings(const std::filesystem::path& path);
void write_labels_csv(const std::filesystem::path& path, std::span<const int> labels);

// ---------------------------------------------------------------------------

struct GradCheckRow {
  std::string name;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  bool passed() const { return max_rel_error < threshold; }
};

/// Finite-difference checks of the linear layer, NDE, VDE, decoder and the
/// full loss on small built-in toys.
std::vector<GradCheckRow> gradcheck_suite(std::uint64_t seed = 0);

/// Build identifier baked in at compile time (git describe when available).
std::string build_id();

}  // namespace urrl
