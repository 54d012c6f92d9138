#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "urrl/errors.hpp"
#include "urrl/experiment.hpp"

using namespace urrl;
namespace fs = std::filesystem;

namespace {

ExperimentSpec parse(const std::string& text) {
  std::istringstream in(text);
  return parse_spec(in, "test.spec");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "urrl_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Proc {
  int code = -1;
  std::string out, err;
};

// Runs the CLI with `args`, capturing both streams through files in `dir`.
Proc run_cli(const fs::path& dir, const std::string& args) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd =
      std::string("\"") + URRL_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Proc p;
  p.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  p.out = slurp(out);
  p.err = slurp(err);
  return p;
}

const char* kSmallTrain =
    " --set embed_dim=16 --set batch_size=32 --set epochs_pretrain=1 --set epochs_joint=1 --set center_init_cap=90";

}  // namespace

// ---------------------------------------------------------------------------
// Spec files

TEST(Spec, DefaultsAgreeWithKeyTable) {
  const auto entries = spec_entries(ExperimentSpec{});
  const auto& keys = spec_keys();
  ASSERT_EQ(entries.size() + 1, keys.size());  // repeats has no effective value of its own
  std::size_t e = 0;
  for (const SpecKey& k : keys) {
    EXPECT_FALSE(k.help.empty()) << k.name;
    if (k.name == "repeats") continue;
    ASSERT_LT(e, entries.size());
    EXPECT_EQ(entries[e].first, k.name);
    EXPECT_EQ(entries[e].second, k.default_value) << k.name;
    ++e;
  }
}

TEST(Spec, ParsesValuesAndComments) {
  const ExperimentSpec s = parse(
      "# leading comment\n"
      "\n"
      "k = 7   # trailing comment\n"
      "  gamma=-5\n"
      "knn_imputation = off\n"
      "sweep_rates = 0, 0.5\n");
  EXPECT_EQ(s.train.kida.k, 7);
  EXPECT_EQ(s.train.model.gamma, -5.0);
  EXPECT_FALSE(s.train.kida.knn_imputation);
  EXPECT_EQ(s.sweep_rates, (std::vector<double>{0.0, 0.5}));
}

TEST(Spec, UnknownKeyNamesSourceAndLine) {
  try {
    parse("k = 3\n\nbogus = 1\n");
    FAIL() << "no exception";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("test.spec:3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("bogus"), std::string::npos) << msg;
  }
  EXPECT_THROW(parse("just words\n"), FormatError);
  EXPECT_THROW(parse("k = three\n"), FormatError);
  EXPECT_THROW(parse("adaptive_phi1 = maybe\n"), FormatError);
}

TEST(Spec, RepeatsAndSeeds) {
  EXPECT_EQ(parse("repeats = 3\n").seeds, (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(parse("seeds = 5,9\n").seeds, (std::vector<std::uint64_t>{5, 9}));
  EXPECT_EQ(parse("seeds = 5,9\nrepeats = 2\n").seeds, (std::vector<std::uint64_t>{5, 9}));
  EXPECT_EQ(parse("repeats = 2\nseeds = 5,9\n").seeds, (std::vector<std::uint64_t>{5, 9}));
  EXPECT_THROW(parse("seeds = 5,9\nrepeats = 3\n"), FormatError);
}

TEST(Spec, ValidationRejectsOutOfRange) {
  ExperimentSpec s;
  s.missing.missing_rate = 1.5;
  EXPECT_THROW(validate_spec(s), std::exception);
  s = ExperimentSpec{};
  s.sweep_rates = {0.0, -0.1};
  EXPECT_THROW(validate_spec(s), std::exception);
  EXPECT_NO_THROW(validate_spec(ExperimentSpec{}));
}

TEST(Spec, SetValueOverridesFile) {
  ExperimentSpec s = parse("lambda1 = 0.5\n");
  set_spec_value(s, "lambda1", "0.25");
  EXPECT_EQ(s.train.lambda1, 0.25);
  EXPECT_THROW(set_spec_value(s, "nope", "1"), FormatError);
}

// ---------------------------------------------------------------------------
// Report artifacts

TEST(Report, CsvQuoting) {
  const std::vector<std::string> f{"plain", "a,b", "say \"hi\"", "line\nbreak", ""};
  EXPECT_EQ(csv_row(f), "plain,\"a,b\",\"say \"\"hi\"\"\",\"line\nbreak\",");
}

TEST(Report, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345.678}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Report, SweepTableLayout) {
  std::vector<RunResult> runs(4);
  const double rates[] = {0.0, 0.0, 0.5, 0.5};
  const double accs[] = {0.9, 0.8, 0.7, 0.7};
  for (int i = 0; i < 4; ++i) {
    runs[i].seed = static_cast<std::uint64_t>(i % 2);
    runs[i].missing_rate = rates[i];
    runs[i].scores = {accs[i], 0.5, 0.25};
  }
  const auto rows = sweep_table(runs);
  ASSERT_EQ(rows.size(), 1u + 4u + 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"kind", "missing_rate", "seed", "acc", "nmi", "ari"}));
  EXPECT_EQ(rows[1], (std::vector<std::string>{"run", "0", "0", "0.9", "0.5", "0.25"}));
  EXPECT_EQ(rows[5][0], "mean");
  EXPECT_EQ(rows[5][1], "0");
  EXPECT_NEAR(std::stod(rows[5][3]), 0.85, 1e-15);
  EXPECT_EQ(rows[6][0], "std");
  EXPECT_NEAR(std::stod(rows[6][3]), 0.05, 1e-15);
  EXPECT_EQ(rows[8][3], "0");
}

TEST(Report, SweepAnomaliesAndSvg) {
  std::vector<SweepPoint> pts(3);
  pts[0] = {0.0, {0.90, 0}, {0.8, 0}, {0.7, 0}};
  pts[1] = {0.25, {0.85, 0}, {0.7, 0}, {0.6, 0}};
  pts[2] = {0.5, {0.88, 0}, {0.6, 0}, {-0.1, 0}};
  EXPECT_EQ(sweep_anomalies(pts), (std::vector<double>{0.5}));
  EXPECT_TRUE(sweep_anomalies(pts, 0.05).empty());

  const std::string svg = sweep_svg(pts);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  std::size_t lines = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++lines;
  EXPECT_EQ(lines, 3u);
  for (const char* name : {">Acc<", ">NMI<", ">ARI<"}) EXPECT_NE(svg.find(name), std::string::npos);
}

TEST(Report, JsonHasNoTimingsAndNotesSkippedStage) {
  ExperimentSpec spec;
  spec.train.clustering_module = false;
  RunResult r;
  r.seconds = 12.5;
  r.stage2_skipped = true;
  r.scores = {0.9, 0.8, 0.7};
  const std::vector<RunResult> runs{r};
  const std::string text = run_report_json(spec, runs, "data.mvds");
  EXPECT_EQ(text.find("seconds"), std::string::npos);
  EXPECT_EQ(text.find("12.5"), std::string::npos);
  EXPECT_NE(text.find("stage 2 skipped: clustering module disabled"), std::string::npos);
  EXPECT_NE(text.find("\"clustering_module\": \"false\""), std::string::npos);
  EXPECT_NE(timing_json(runs).find("12.5"), std::string::npos);
}

TEST(Report, EmbeddingsRoundTrip) {
  const fs::path dir = scratch("embd");
  RowMatrix z(3, 2);
  z << 1, -2, 0.125, 4e-9, 5, 6;
  save_embeddings(z, dir / "z.embd");
  EXPECT_EQ(load_embeddings(dir / "z.embd"), z);
  EXPECT_EQ(fs::file_size(dir / "z.embd"), 16u + 6u * 8u);

  std::string bytes = slurp(dir / "z.embd");
  std::ofstream(dir / "short.embd", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(load_embeddings(dir / "short.embd"), FormatError);
  std::ofstream(dir / "long.embd", std::ios::binary) << bytes << 'x';
  EXPECT_THROW(load_embeddings(dir / "long.embd"), FormatError);

  const std::vector<int> labels{2, 0, 1};
  write_labels_csv(dir / "labels.csv", labels);
  EXPECT_EQ(slurp(dir / "labels.csv"), "label\n2\n0\n1\n");
}

// ---------------------------------------------------------------------------
// The executable

TEST(Cli, SynthIsReproducible) {
  const fs::path dir = scratch("synth");
  const Proc a = run_cli(dir, "synth --seed 3 --out \"" + (dir / "a.mvds").string() + "\"");
  ASSERT_EQ(a.code, 0) << a.err;
  const Proc b = run_cli(dir, "synth --seed 3 --out \"" + (dir / "b.mvds").string() + "\"");
  ASSERT_EQ(b.code, 0) << b.err;
  const Proc c = run_cli(dir, "synth --seed 4 --out \"" + (dir / "c.mvds").string() + "\"");
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(slurp(dir / "a.mvds"), slurp(dir / "b.mvds"));
  EXPECT_NE(slurp(dir / "a.mvds"), slurp(dir / "c.mvds"));
  EXPECT_NE(a.out.find("N=600"), std::string::npos) << a.out;
}

TEST(Cli, SynthCsvLoads) {
  const fs::path dir = scratch("synth_csv");
  const Proc p = run_cli(dir, "synth --csv --set synth.num_samples=30 --out \"" + (dir / "csv").string() + "\"");
  ASSERT_EQ(p.code, 0) << p.err;
  const MultiViewDataset ds = load_dataset_csv(dir / "csv");
  EXPECT_EQ(ds.num_samples(), 30);
}

TEST(Cli, BadInputExitsWithError) {
  const fs::path dir = scratch("bad");
  const Proc p = run_cli(dir, "synth --set nonsense=1 --out \"" + (dir / "x.mvds").string() + "\"");
  EXPECT_EQ(p.code, 1);
  EXPECT_NE(p.err.find("error:"), std::string::npos) << p.err;

  std::ofstream(dir / "bad.spec") << "k = 3\nwhatever = 2\n";
  const Proc q = run_cli(dir, "synth --config \"" + (dir / "bad.spec").string() + "\" --out \"" +
                                  (dir / "x.mvds").string() + "\"");
  EXPECT_EQ(q.code, 1);
  EXPECT_NE(q.err.find("bad.spec:2"), std::string::npos) << q.err;

  const Proc r = run_cli(dir, "train --data \"" + (dir / "missing.mvds").string() + "\" --out \"" +
                                  (dir / "o").string() + "\"");
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(dir / "x.mvds"));
}

TEST(Cli, FlagsOverrideConfigAndSet) {
  const fs::path dir = scratch("precedence");
  std::ofstream(dir / "a.spec") << "missing_rate = 0.5\n";
  // --set beats the file; --missing-rate beats --set. The printed fraction counts missing entries.
  const Proc p = run_cli(dir, "synth --config \"" + (dir / "a.spec").string() +
                                  "\" --set missing_rate=0.25 --missing-rate 0 --out \"" +
                                  (dir / "a.mvds").string() + "\"");
  ASSERT_EQ(p.code, 0) << p.err;
  EXPECT_EQ(missing_fraction(load_dataset(dir / "a.mvds").mask), 0.0);
  const Proc q = run_cli(dir, "synth --config \"" + (dir / "a.spec").string() + "\" --set missing_rate=0.25 --out \"" +
                                  (dir / "b.mvds").string() + "\"");
  ASSERT_EQ(q.code, 0) << q.err;
  EXPECT_NE(q.out.find("missing fraction 0.1250"), std::string::npos) << q.out;
}

TEST(Cli, GradcheckPasses) {
  const fs::path dir = scratch("grad");
  const Proc p = run_cli(dir, "gradcheck");
  EXPECT_EQ(p.code, 0) << p.out << p.err;
  EXPECT_EQ(p.out.find("FAIL"), std::string::npos) << p.out;
}

TEST(Cli, TrainEmbedAndRerun) {
  const fs::path dir = scratch("train");
  const std::string data = (dir / "d.mvds").string();
  ASSERT_EQ(run_cli(dir, "synth --set synth.num_samples=90 --missing-rate 0.5 --out \"" + data + "\"").code, 0);

  const std::string train = std::string("train --data \"") + data + "\" --seed 1" + kSmallTrain;
  const Proc a = run_cli(dir, train + " --out \"" + (dir / "a").string() + "\"");
  ASSERT_EQ(a.code, 0) << a.err;
  for (const char* f : {"model_seed1.urrl", "loss_seed1.csv", "report.json", "report.timing.json"}) {
    EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
  }
  std::istringstream loss(slurp(dir / "a" / "loss_seed1.csv"));
  std::string line;
  std::getline(loss, line);
  EXPECT_EQ(line, "epoch,iter,l_rec,l_aug,l_clu,total");
  int rows = 0;
  while (std::getline(loss, line)) {
    ++rows;
    const double total = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_TRUE(std::isfinite(total)) << line;
  }
  EXPECT_EQ(rows, 2 * 3);  // two epochs of ceil(90 / 32) batches

  const Proc b = run_cli(dir, train + " --out \"" + (dir / "b").string() + "\"");
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(dir / "a" / "report.json"), slurp(dir / "b" / "report.json"));
  EXPECT_EQ(slurp(dir / "a" / "model_seed1.urrl"), slurp(dir / "b" / "model_seed1.urrl"));

  const Proc e = run_cli(dir, "embed --data \"" + data + "\" --checkpoint \"" +
                                  (dir / "a" / "model_seed1.urrl").string() + "\" --out \"" +
                                  (dir / "emb").string() + "\"");
  ASSERT_EQ(e.code, 0) << e.err;
  const RowMatrix z = load_embeddings(dir / "emb" / "embeddings.embd");
  EXPECT_EQ(z.rows(), 90);
  EXPECT_EQ(z.cols(), 16);
  EXPECT_TRUE(z.allFinite());
  std::istringstream labels(slurp(dir / "emb" / "labels.csv"));
  std::getline(labels, line);
  EXPECT_EQ(line, "label");
  rows = 0;
  while (std::getline(labels, line)) {
    const int l = std::stoi(line);
    EXPECT_GE(l, 0);
    EXPECT_LT(l, 3);
    ++rows;
  }
  EXPECT_EQ(rows, 90);
}

TEST(Cli, ClusteringOffReportsSkippedStage) {
  const fs::path dir = scratch("cluster_off");
  const std::string data = (dir / "d.mvds").string();
  ASSERT_EQ(run_cli(dir, "synth --set synth.num_samples=60 --out \"" + data + "\"").code, 0);
  const Proc p = run_cli(dir, std::string("train --data \"") + data + "\"" + kSmallTrain +
                                  " --set clustering_module=false --out \"" + (dir / "o").string() + "\"");
  ASSERT_EQ(p.code, 0) << p.err;
  EXPECT_NE(p.out.find("note: stage 2 skipped"), std::string::npos) << p.out;
  const std::string report = slurp(dir / "o" / "report.json");
  EXPECT_NE(report.find("\"stage2_skipped\": true"), std::string::npos);
  EXPECT_NE(report.find("clustering module disabled"), std::string::npos);
}

TEST(Cli, SweepWritesArtifacts) {
  const fs::path dir = scratch("sweep");
  const std::string data = (dir / "d.mvds").string();
  ASSERT_EQ(run_cli(dir, "synth --set synth.num_samples=60 --out \"" + data + "\"").code, 0);
  const Proc p = run_cli(dir, std::string("sweep --data \"") + data + "\" --rates 0,0.5 --set repeats=2" +
                                  kSmallTrain + " --out \"" + (dir / "o").string() + "\"");
  ASSERT_EQ(p.code, 0) << p.err;
  for (const char* f : {"sweep.csv", "sweep.svg", "sweep.json", "sweep.timing.json"}) {
    EXPECT_TRUE(fs::exists(dir / "o" / f)) << f;
  }
  std::istringstream csv(slurp(dir / "o" / "sweep.csv"));
  std::string line;
  int n = 0;
  std::getline(csv, line);
  EXPECT_EQ(line, "kind,missing_rate,seed,acc,nmi,ari");
  while (std::getline(csv, line)) ++n;
  EXPECT_EQ(n, 4 + 2 + 2);
  EXPECT_NE(slurp(dir / "o" / "sweep.json").find("trend_anomaly"), std::string::npos);
}
