#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "firemae/bench/bench.hpp"
#include "firemae/eval/full_stream.hpp"

namespace firemae::bench {

/// One model on the latency / footprint / accuracy axes. A missing AP ranks
/// below every defined AP.
struct ParetoRow {
  std::string model_id;
  double median_ms = 0;
  double p95_ms = 0;
  std::size_t params = 0;
  std::size_t fp16_bytes = 0;
  std::optional<double> ap;
  std::optional<double> fire_f1;
  std::string metric_split;  // split the metrics come from
  bool dominated = false;
};

inline double ap_or_floor(const ParetoRow& r) { return r.ap ? *r.ap : -std::numeric_limits<double>::infinity(); }

/// a dominates b: no worse on every axis and strictly better on one.
inline bool dominates(const ParetoRow& a, const ParetoRow& b) {
  const double aa = ap_or_floor(a), ab = ap_or_floor(b);
  const bool no_worse = a.median_ms <= b.median_ms && a.fp16_bytes <= b.fp16_bytes && aa >= ab;
  const bool better = a.median_ms < b.median_ms || a.fp16_bytes < b.fp16_bytes || aa > ab;
  return no_worse && better;
}

/// Sets `dominated` on every row. Rows are visited in (latency, footprint,
/// -AP) order: a dominator always precedes the rows it dominates, and by
/// transitivity it suffices to test against the frontier found so far.
inline void mark_dominated(std::vector<ParetoRow>& rows) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const auto& a = rows[i];
    const auto& b = rows[j];
    if (a.median_ms != b.median_ms) return a.median_ms < b.median_ms;
    if (a.fp16_bytes != b.fp16_bytes) return a.fp16_bytes < b.fp16_bytes;
    return ap_or_floor(a) > ap_or_floor(b);
  });
  std::vector<std::size_t> frontier;
  for (std::size_t i : order) {
    rows[i].dominated = std::any_of(frontier.begin(), frontier.end(), [&](std::size_t f) { return dominates(rows[f], rows[i]); });
    if (!rows[i].dominated) frontier.push_back(i);
  }
}

inline ParetoRow pareto_row(const BenchResult& b, const std::optional<eval::EvalReport>& rep) {
  ParetoRow r;
  r.model_id = b.model_id;
  r.median_ms = b.median_ms;
  r.p95_ms = b.p95_ms;
  r.params = b.footprint.params;
  r.fp16_bytes = b.footprint.fp16_bytes;
  r.ap = b.ap;
  r.fire_f1 = b.fire_f1;
  if (rep) {
    r.ap = rep->ap.defined ? std::optional<double>(rep->ap.value) : std::nullopt;
    r.fire_f1 = rep->fire.f1;
    r.metric_split = rep->split;
  }
  return r;
}

/// Finds every bench.csv under `root` and joins the evaluation report in the
/// same directory (eval_test.json, else eval_val.json). Rows are ordered by
/// directory path.
inline std::vector<ParetoRow> collect_pareto_rows(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw IoError("report: not a directory: " + root.string());
  std::vector<std::filesystem::path> found;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() == "bench.csv") found.push_back(e.path());
  std::sort(found.begin(), found.end());
  std::vector<ParetoRow> rows;
  for (const auto& p : found) {
    BenchResult b = read_bench_csv(p);
    const auto dir = p.parent_path();
    if (b.model_id.empty()) b.model_id = std::filesystem::relative(dir, root).generic_string();
    std::optional<eval::EvalReport> rep;
    for (const char* name : {"eval_test.json", "eval_val.json"})
      if (std::filesystem::exists(dir / name)) {
        rep = eval::load_report(dir / name);
        break;
      }
    rows.push_back(pareto_row(b, rep));
  }
  mark_dominated(rows);
  return rows;
}

// ---- rendering -------------------------------------------------------------

inline const char* pareto_csv_header() { return "model_id,median_ms,p95_ms,params,fp16_bytes,ap,fire_f1,metric_split,dominated"; }

inline void write_pareto_csv(const std::vector<ParetoRow>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << pareto_csv_header() << '\n';
  for (const auto& r : rows)
    f << r.model_id << ',' << fmt_num(r.median_ms) << ',' << fmt_num(r.p95_ms) << ',' << r.params << ',' << r.fp16_bytes << ','
      << opt_num(r.ap) << ',' << opt_num(r.fire_f1) << ',' << r.metric_split << ',' << (r.dominated ? 1 : 0) << '\n';
}

/// Column-aligned text table.
inline std::string render_pareto_text(const std::vector<ParetoRow>& rows) {
  std::vector<std::vector<std::string>> cells{{"model", "median_ms", "p95_ms", "params", "fp16_bytes", "ap", "fire_f1", "frontier"}};
  for (const auto& r : rows)
    cells.push_back({r.model_id, fmt_num(r.median_ms, 5), fmt_num(r.p95_ms, 5), std::to_string(r.params), std::to_string(r.fp16_bytes),
                     r.ap ? fmt_num(*r.ap, 4) : "-", r.fire_f1 ? fmt_num(*r.fire_f1, 4) : "-", r.dominated ? "" : "*"});
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string pad(width[c] - row[c].size(), ' ');
      os << (c == 0 ? row[c] + pad : pad + row[c]) << (c + 1 < row.size() ? "  " : "");
    }
    os << '\n';
  }
  return os.str();
}

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

/// Latency (x) vs AP (y) scatter; marker area tracks the FP16 footprint and
/// frontier rows are filled.
inline std::string render_pareto_svg(const std::vector<ParetoRow>& rows) {
  const double W = 640, H = 420, L = 70, R = 20, T = 20, B = 50;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymax = 0;
  std::size_t fmax = 1;
  for (const auto& r : rows) {
    xmin = std::min(xmin, r.median_ms);
    xmax = std::max(xmax, r.median_ms);
    if (r.ap) ymax = std::max(ymax, *r.ap);
    fmax = std::max(fmax, r.fp16_bytes);
  }
  if (rows.empty()) xmin = 0, xmax = 1;
  if (xmax <= xmin) xmax = xmin + 1;
  const double pad = 0.05 * (xmax - xmin);
  xmin -= pad, xmax += pad;
  ymax = ymax > 0 ? std::min(1.0, ymax * 1.1) : 1.0;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - y / ymax * (H - T - B); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4.0, yv = ymax * k / 4.0;
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\">" << fmt_num(xv, 4) << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << fmt_num(yv, 3) << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">median batch latency (ms)</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (T + H - B) / 2
     << ")\">AP</text>\n";
  for (const auto& r : rows) {
    const double x = px(r.median_ms), y = py(r.ap ? *r.ap : 0.0);
    const double rad = 4.0 + 10.0 * std::sqrt(static_cast<double>(r.fp16_bytes) / static_cast<double>(fmax));
    os << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << rad << "\" stroke=\"#1f4e79\" fill=\"" << (r.dominated ? "none" : "#1f4e79")
       << "\" fill-opacity=\"0.6\"/>\n";
    os << "<text x=\"" << x + rad + 3 << "\" y=\"" << y + 4 << "\">" << xml_escape(r.model_id) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// Writes pareto.csv at `csv`, plus .txt and .svg renderings beside it.
inline void write_pareto_report(const std::vector<ParetoRow>& rows, const std::filesystem::path& csv) {
  write_pareto_csv(rows, csv);
  auto txt = csv;
  txt.replace_extension(".txt");
  std::ofstream(txt) << render_pareto_text(rows);
  auto svg = csv;
  svg.replace_extension(".svg");
  std::ofstream(svg) << render_pareto_svg(rows);
}

}  // namespace firemae::bench
