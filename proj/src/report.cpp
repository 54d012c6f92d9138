#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "json.hpp"

#include "binary_io.hpp"
#include "urrl/errors.hpp"
#include "urrl/experiment.hpp"

namespace urrl {

namespace {

constexpr std::uint32_t kEmbeddingVersion = 1;

nlohmann::ordered_json summary_json(const MetricSummary& s) { return {{"mean", s.mean}, {"std", s.std}}; }

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw ContractError("format_double: conversion failed");
  return std::string(buf, ptr);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  detail::write_file_atomic(path, text);
}

std::string csv_row(std::span<const std::string> fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\r\n") == std::string::npos) {
      out += f;
      continue;
    }
    out += '"';
    for (char c : f) {
      if (c == '"') out += '"';
      out += c;
    }
    out += '"';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, std::span<const std::vector<std::string>> rows) {
  std::string text;
  for (const auto& r : rows) text += csv_row(r) + "\n";
  detail::write_file_atomic(path, text);
}

void write_loss_history(const std::filesystem::path& path, std::span<const LossRecord> history) {
  std::vector<std::vector<std::string>> rows{{"epoch", "iter", "l_rec", "l_aug", "l_clu", "total"}};
  for (const LossRecord& r : history) {
    rows.push_back({std::to_string(r.epoch), std::to_string(r.iter), format_double(r.l_rec), format_double(r.l_aug),
                    format_double(r.l_clu), format_double(r.total)});
  }
  write_csv(path, rows);
}

std::string run_report_json(const ExperimentSpec& spec, std::span<const RunResult> runs, const std::string& dataset) {
  nlohmann::ordered_json j;
  j["build_id"] = build_id();
  j["dataset"] = dataset;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [k, v] : spec_entries(spec)) config[k] = v;
  j["config"] = config;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::vector<double> acc, nmi, ari;
  bool skipped = false;
  for (const RunResult& r : runs) {
    rows.push_back({{"seed", r.seed},
                    {"missing_rate", r.missing_rate},
                    {"acc", r.scores.acc},
                    {"nmi", r.scores.nmi},
                    {"ari", r.scores.ari},
                    {"phi1", r.phi1},
                    {"stage2_skipped", r.stage2_skipped}});
    acc.push_back(r.scores.acc);
    nmi.push_back(r.scores.nmi);
    ari.push_back(r.scores.ari);
    skipped = skipped || r.stage2_skipped;
  }
  j["repeats"] = runs.size();
  j["runs"] = rows;
  j["summary"] = {{"acc", summary_json(summarize(acc))},
                  {"nmi", summary_json(summarize(nmi))},
                  {"ari", summary_json(summarize(ari))}};
  j["stage2_skipped"] = skipped;
  nlohmann::ordered_json notes = nlohmann::ordered_json::array();
  if (!spec.train.clustering_module) {
    notes.push_back("stage 2 skipped: clustering module disabled");
  } else if (spec.train.joint_epochs == 0) {
    notes.push_back("stage 2 skipped: epochs_joint = 0");
  }
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

std::string timing_json(std::span<const RunResult> runs) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  double total = 0.0;
  for (const RunResult& r : runs) {
    rows.push_back({{"seed", r.seed}, {"missing_rate", r.missing_rate}, {"seconds", r.seconds}});
    total += r.seconds;
  }
  nlohmann::ordered_json j;
  j["runs"] = rows;
  j["total_seconds"] = total;
  return j.dump(2) + "\n";
}

std::vector<SweepPoint> aggregate_sweep(std::span<const RunResult> runs) {
  std::map<double, std::vector<const RunResult*>> by_rate;
  for (const RunResult& r : runs) by_rate[r.missing_rate].push_back(&r);
  std::vector<SweepPoint> out;
  for (const auto& [rate, rs] : by_rate) {
    std::vector<double> acc, nmi, ari;
    for (const RunResult* r : rs) {
      acc.push_back(r->scores.acc);
      nmi.push_back(r->scores.nmi);
      ari.push_back(r->scores.ari);
    }
    out.push_back({rate, summarize(acc), summarize(nmi), summarize(ari)});
  }
  return out;
}

std::vector<double> sweep_anomalies(std::span<const SweepPoint> points, double threshold) {
  std::vector<double> out;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].acc.mean - points[i - 1].acc.mean > threshold) out.push_back(points[i].missing_rate);
  }
  return out;
}

std::vector<std::vector<std::string>> sweep_table(std::span<const RunResult> runs) {
  std::vector<std::vector<std::string>> rows{{"kind", "missing_rate", "seed", "acc", "nmi", "ari"}};
  for (const RunResult& r : runs) {
    rows.push_back({"run", format_double(r.missing_rate), std::to_string(r.seed), format_double(r.scores.acc),
                    format_double(r.scores.nmi), format_double(r.scores.ari)});
  }
  for (const SweepPoint& p : aggregate_sweep(runs)) {
    rows.push_back({"mean", format_double(p.missing_rate), "", format_double(p.acc.mean), format_double(p.nmi.mean),
                    format_double(p.ari.mean)});
    rows.push_back({"std", format_double(p.missing_rate), "", format_double(p.acc.std), format_double(p.nmi.std),
                    format_double(p.ari.std)});
  }
  return rows;
}

std::string sweep_svg(std::span<const SweepPoint> points) {
  constexpr double W = 640, H = 400, left = 60, right = 130, top = 30, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  double lo = 0.0, hi = 1.0;
  if (!points.empty()) {
    lo = points.front().missing_rate;
    hi = points.back().missing_rate;
  }
  const auto x_of = [&](double r) { return hi > lo ? left + pw * (r - lo) / (hi - lo) : left + pw / 2; };
  // ARI can be negative; the y axis spans [-0.2, 1] only when needed.
  double ymin = 0.0;
  for (const SweepPoint& p : points) ymin = std::min(ymin, p.ari.mean);
  ymin = ymin < 0.0 ? -0.2 * std::ceil(-ymin / 0.2) : 0.0;
  const auto y_of = [&](double v) { return top + ph * (1.0 - (v - ymin) / (1.0 - ymin)); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"18\" text-anchor=\"middle\">Clustering scores vs missing rate</text>\n";
  // Axes and grid.
  for (int t = 0; t <= 5; ++t) {
    const double v = ymin + (1.0 - ymin) * t / 5.0;
    const double y = y_of(v);
    s << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + pw << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << format_double(std::round(v * 100) / 100)
      << "</text>\n";
  }
  for (const SweepPoint& p : points) {
    const double x = x_of(p.missing_rate);
    s << "<text x=\"" << x << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
      << format_double(p.missing_rate) << "</text>\n";
  }
  s << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">missing rate m_r</text>\n";

  struct Series {
    const char* name;
    const char* color;
    double (*get)(const SweepPoint&);
  };
  const Series series[] = {{"Acc", "#1f77b4", [](const SweepPoint& p) { return p.acc.mean; }},
                           {"NMI", "#ff7f0e", [](const SweepPoint& p) { return p.nmi.mean; }},
                           {"ARI", "#2ca02c", [](const SweepPoint& p) { return p.ari.mean; }}};
  int row = 0;
  for (const Series& se : series) {
    std::string pts;
    for (const SweepPoint& p : points) {
      pts += (pts.empty() ? "" : " ") + format_double(x_of(p.missing_rate)) + "," + format_double(y_of(se.get(p)));
    }
    s << "<polyline fill=\"none\" stroke=\"" << se.color << "\" stroke-width=\"2\" points=\"" << pts << "\"/>\n";
    for (const SweepPoint& p : points) {
      s << "<circle cx=\"" << x_of(p.missing_rate) << "\" cy=\"" << y_of(se.get(p)) << "\" r=\"3\" fill=\""
        << se.color << "\"/>\n";
    }
    const double ly = top + 10 + 18 * row++;
    s << "<line x1=\"" << W - right + 15 << "\" y1=\"" << ly << "\" x2=\"" << W - right + 40 << "\" y2=\"" << ly
      << "\" stroke=\"" << se.color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << W - right + 46 << "\" y=\"" << ly + 4 << "\">" << se.name << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void save_embeddings(const RowMatrix& z, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.magic("EMBD");
  w.u32(kEmbeddingVersion);
  w.u32(static_cast<std::uint32_t>(z.rows()));
  w.u32(static_cast<std::uint32_t>(z.cols()));
  for (Index i = 0; i < z.size(); ++i) w.f64(z.data()[i]);
  detail::write_file_atomic(path, w.data());
}

RowMatrix load_embeddings(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file(path), path.string());
  r.expect_magic("EMBD");
  const std::uint32_t version = r.u32("version");
  if (version != kEmbeddingVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t n = r.u32("N");
  const std::uint32_t d = r.u32("d_e");
  r.need(static_cast<std::size_t>(n) * d * 8, "payload");
  RowMatrix z(n, d);
  for (Index i = 0; i < z.size(); ++i) z.data()[i] = r.f64("payload");
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes");
  return z;
}

void write_labels_csv(const std::filesystem::path& path, std::span<const int> labels) {
  std::vector<std::vector<std::string>> rows{{"label"}};
  for (int l : labels) rows.push_back({std::to_string(l)});
  write_csv(path, rows);
}

}  // namespace urrl
