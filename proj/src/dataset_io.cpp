#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "urrl/dataset.hpp"
#include "urrl/errors.hpp"

namespace urrl {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

std::uint32_t checked_u32(Index v, const char* field) {
  if (v < 0 || v > static_cast<Index>(UINT32_MAX)) throw FormatError(std::string(field) + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::vector<double>> read_csv_numbers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const char* b = cell.data();
      while (b < cell.data() + cell.size() && *b == ' ') ++b;
      auto res = std::from_chars(b, cell.data() + cell.size(), v);
      if (res.ec != std::errc()) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not a number: \"" + cell + "\"");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void save_dataset(const MultiViewDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  detail::ByteWriter w;
  w.magic("MVDS");
  w.u32(kDatasetVersion);
  w.u32(checked_u32(ds.num_samples(), "N"));
  w.u32(checked_u32(ds.num_views(), "V"));
  w.u32(checked_u32(ds.num_clusters, "d_c"));
  for (const RowMatrix& x : ds.views) {
    w.u32(checked_u32(x.cols(), "d_v"));
    for (Index k = 0; k < x.size(); ++k) w.f64(x.data()[k]);
  }
  for (Index k = 0; k < ds.mask.size(); ++k) w.u8(ds.mask.data()[k]);
  w.u8(ds.labels ? 1 : 0);
  if (ds.labels) {
    for (int l : *ds.labels) w.u32(static_cast<std::uint32_t>(l));
  }
  detail::write_file_atomic(path, w.data());
}

MultiViewDataset load_dataset(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file(path), path.string());
  r.expect_magic("MVDS");
  const std::uint32_t version = r.u32("version");
  if (version != kDatasetVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  }
  const Index n = r.u32("N");
  const Index v = r.u32("V");
  MultiViewDataset ds;
  ds.num_clusters = static_cast<int>(r.u32("d_c"));
  if (v == 0) throw FormatError(path.string() + ": V must be positive");
  for (Index view = 0; view < v; ++view) {
    const Index d = r.u32("d_v");
    if (d == 0) throw FormatError(path.string() + ": d_v of view " + std::to_string(view) + " is zero");
    r.need(static_cast<std::size_t>(n * d) * 8, "view payload");
    RowMatrix x(n, d);
    for (Index k = 0; k < x.size(); ++k) x.data()[k] = r.f64("view payload");
    ds.views.push_back(std::move(x));
  }
  r.need(static_cast<std::size_t>(n * v), "mask");
  ds.mask.resize(n, v);
  for (Index k = 0; k < ds.mask.size(); ++k) ds.mask.data()[k] = r.u8("mask");
  const std::uint8_t has_labels = r.u8("labels flag");
  if (has_labels > 1) throw FormatError(path.string() + ": labels flag must be 0 or 1");
  if (has_labels) {
    r.need(static_cast<std::size_t>(n) * 4, "labels");
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = static_cast<int>(r.u32("labels"));
    ds.labels = std::move(labels);
  }
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after labels");
  try {
    ds.validate();
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  ds.zero_missing();
  return ds;
}

void save_dataset_csv(const MultiViewDataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);
  for (Index v = 0; v < ds.num_views(); ++v) {
    const RowMatrix& x = ds.views[static_cast<std::size_t>(v)];
    std::string out;
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index d = 0; d < x.cols(); ++d) {
        if (d) out += ',';
        out += fmt_double(x(i, d));
      }
      out += '\n';
    }
    detail::write_file_atomic(dir / ("view_" + std::to_string(v) + ".csv"), out);
  }
  std::string mask;
  for (Index i = 0; i < ds.mask.rows(); ++i) {
    for (Index v = 0; v < ds.mask.cols(); ++v) {
      if (v) mask += ',';
      mask += ds.mask(i, v) ? '1' : '0';
    }
    mask += '\n';
  }
  detail::write_file_atomic(dir / "mask.csv", mask);
  if (ds.labels) {
    std::string labels;
    for (int l : *ds.labels) labels += std::to_string(l) + '\n';
    detail::write_file_atomic(dir / "labels.csv", labels);
  }
}

MultiViewDataset load_dataset_csv(const std::filesystem::path& dir) {
  const auto mask_rows = read_csv_numbers(dir / "mask.csv");
  if (mask_rows.empty()) throw FormatError((dir / "mask.csv").string() + ": empty");
  const Index n = static_cast<Index>(mask_rows.size());
  const Index v = static_cast<Index>(mask_rows.front().size());
  MultiViewDataset ds;
  ds.mask.resize(n, v);
  for (Index i = 0; i < n; ++i) {
    if (static_cast<Index>(mask_rows[static_cast<std::size_t>(i)].size()) != v) {
      throw FormatError((dir / "mask.csv").string() + ": ragged row " + std::to_string(i));
    }
    for (Index j = 0; j < v; ++j) {
      const double m = mask_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (m != 0.0 && m != 1.0) throw FormatError((dir / "mask.csv").string() + ": non-binary entry");
      ds.mask(i, j) = static_cast<std::uint8_t>(m);
    }
  }
  for (Index view = 0; view < v; ++view) {
    const auto p = dir / ("view_" + std::to_string(view) + ".csv");
    const auto rows = read_csv_numbers(p);
    if (static_cast<Index>(rows.size()) != n) throw FormatError(p.string() + ": row count differs from mask.csv");
    const Index d = static_cast<Index>(rows.front().size());
    RowMatrix x(n, d);
    for (Index i = 0; i < n; ++i) {
      if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != d) {
        throw FormatError(p.string() + ": ragged row " + std::to_string(i));
      }
      for (Index k = 0; k < d; ++k) x(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    ds.views.push_back(std::move(x));
  }
  if (std::filesystem::exists(dir / "labels.csv")) {
    const auto rows = read_csv_numbers(dir / "labels.csv");
    if (static_cast<Index>(rows.size()) != n) throw FormatError("labels.csv: row count differs from mask.csv");
    std::vector<int> labels;
    int max_label = -1;
    for (const auto& r : rows) {
      if (r.size() != 1) throw FormatError("labels.csv: expected one column");
      labels.push_back(static_cast<int>(r[0]));
      max_label = std::max(max_label, labels.back());
    }
    ds.labels = std::move(labels);
    ds.num_clusters = max_label + 1;
  }
  ds.validate();
  ds.zero_missing();
  return ds;
}

}  // namespace urrl
