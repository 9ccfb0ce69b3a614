#pragma once

// Aggregation of completed runs across seeds: summary.csv plus one SVG panel
// per (experiment, tower, loss, alpha) with one line per tau.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "towerlab/clicks.hpp"
#include "towerlab/experiment.hpp"
#include "towerlab/io.hpp"
#include "towerlab/stats.hpp"

namespace towerlab {

struct MetricsRow {
  std::string run_id;
  double alpha = 0.0, tau = 0.0;
  std::string tower, loss;
  std::uint64_t seed = 0;
  std::size_t rank = 0;
  double theta_true = 0.0, theta_hat = 0.0, abs_err = 0.0, ndcg10 = 0.0;
  bool swap_connected = false;
};

inline std::vector<MetricsRow> parse_metrics_csv(std::string_view text) {
  std::vector<MetricsRow> out;
  for (const auto& f : csv_rows(text, kMetricsHeader)) {
    if (f.size() != 12) throw std::runtime_error("metrics.csv: expected 12 fields");
    auto num = [&](std::size_t i) {
      const auto v = parse_double(f[i]);
      if (!v) throw std::runtime_error("metrics.csv: bad number '" + std::string(f[i]) + "'");
      return *v;
    };
    MetricsRow r;
    r.run_id = std::string(f[0]);
    r.alpha = num(1);
    r.tau = num(2);
    r.tower = std::string(f[3]);
    r.loss = std::string(f[4]);
    r.seed = parse_int<std::uint64_t>(f[5]).value_or(0);
    r.rank = parse_int<std::size_t>(f[6]).value_or(0);
    r.theta_true = num(7);
    r.theta_hat = num(8);
    r.abs_err = num(9);
    r.ndcg10 = num(10);
    r.swap_connected = f[11] == "true";
    out.push_back(std::move(r));
  }
  return out;
}

/// Interval of the mean across seeds. `half_width` is 0 and `single` set when
/// only one seed contributed.
struct SeedInterval {
  std::size_t n = 0;
  double mean = 0.0;
  double half_width = 0.0;
  bool single = false;
};

inline SeedInterval seed_interval(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("seed_interval: no values");
  return {xs.size(), mean(xs), t_interval_half_width(xs), xs.size() == 1};
}

struct SummaryRow {
  std::string experiment, tower, loss;
  double alpha = 0.0, tau = 0.0;
  std::size_t rank = 0;
  double theta_true = 0.0;
  SeedInterval theta_hat;
  double mae_mean = 0.0;  // per-cell MAE averaged over seeds
  double ndcg10_mean = 0.0;
};

struct ReportResult {
  std::vector<SummaryRow> rows;
  std::vector<std::filesystem::path> panels;
  std::size_t runs = 0;
};

namespace detail {

inline std::string experiment_name(const std::filesystem::path& run_dir) {
  const auto snap = run_dir / "config.snapshot";
  if (!std::filesystem::exists(snap)) return "experiment";
  const auto text = read_file(snap);
  for (auto line : split(text, '\n')) {
    const auto eq = line.find('=');
    if (eq != std::string_view::npos && trim(line.substr(0, eq)) == "name") return std::string(trim(line.substr(eq + 1)));
  }
  return "experiment";
}

inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline std::string safe_file_name(std::string s) {
  for (auto& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  }
  return s;
}

}  // namespace detail

/// Static line chart of mean anchored theta-hat per rank, one series per tau,
/// 95% interval whiskers, and the true -ln(k) curve dashed.
inline std::string render_panel_svg(const std::string& title, const std::vector<const SummaryRow*>& rows) {
  using detail::fixed;
  constexpr double W = 520, H = 380, L = 60, R = 110, T = 40, B = 50;
  std::map<double, std::vector<const SummaryRow*>> series;
  std::size_t k_max = 1;
  double y_lo = 0.0, y_hi = 0.0;
  for (const auto* r : rows) {
    series[r->tau].push_back(r);
    k_max = std::max(k_max, r->rank);
    y_lo = std::min({y_lo, r->theta_true, r->theta_hat.mean - r->theta_hat.half_width});
    y_hi = std::max({y_hi, r->theta_true, r->theta_hat.mean + r->theta_hat.half_width});
  }
  y_lo = std::floor(y_lo * 2.0) / 2.0;
  y_hi = std::max(std::ceil(y_hi * 2.0) / 2.0, y_lo + 0.5);
  auto px = [&](double k) { return L + (k - 1.0) / std::max<double>(1.0, k_max - 1.0) * (W - L - R); };
  auto py = [&](double v) { return T + (y_hi - v) / (y_hi - y_lo) * (H - T - B); };

  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"};
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(W, 0) + "\" height=\"" + fixed(H, 0) +
                  "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fixed(W / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" + title + "</text>\n";
  // Axes and ticks.
  s += "<line x1=\"" + fixed(L) + "\" y1=\"" + fixed(H - B) + "\" x2=\"" + fixed(W - R) + "\" y2=\"" + fixed(H - B) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fixed(L) + "\" y1=\"" + fixed(T) + "\" x2=\"" + fixed(L) + "\" y2=\"" + fixed(H - B) +
       "\" stroke=\"black\"/>\n";
  for (std::size_t k = 1; k <= k_max; ++k) {
    s += "<text x=\"" + fixed(px(k)) + "\" y=\"" + fixed(H - B + 15) + "\" text-anchor=\"middle\">" +
         std::to_string(k) + "</text>\n";
  }
  for (double v = y_lo; v <= y_hi + 1e-9; v += 0.5) {
    s += "<line x1=\"" + fixed(L) + "\" y1=\"" + fixed(py(v)) + "\" x2=\"" + fixed(W - R) + "\" y2=\"" + fixed(py(v)) +
         "\" stroke=\"#eeeeee\"/>\n";
    s += "<text x=\"" + fixed(L - 6) + "\" y=\"" + fixed(py(v) + 4) + "\" text-anchor=\"end\">" + fixed(v, 1) +
         "</text>\n";
  }
  s += "<text x=\"" + fixed((L + W - R) / 2) + "\" y=\"" + fixed(H - 12) + "\" text-anchor=\"middle\">rank</text>\n";
  s += "<text x=\"16\" y=\"" + fixed((T + H - B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       fixed((T + H - B) / 2) + ")\">anchored bias logit</text>\n";

  std::string truth;
  for (std::size_t k = 1; k <= k_max; ++k) {
    truth += (k == 1 ? "M" : " L") + fixed(px(k)) + " " + fixed(py(true_bias_logit(k)));
  }
  s += "<path d=\"" + truth + "\" fill=\"none\" stroke=\"black\" stroke-dasharray=\"5,4\"/>\n";

  std::size_t i = 0;
  for (auto& [tau, pts] : series) {
    std::sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->rank < b->rank; });
    const std::string col = colors[i % std::size(colors)];
    std::string d;
    for (const auto* p : pts) {
      d += (d.empty() ? "M" : " L") + fixed(px(p->rank)) + " " + fixed(py(p->theta_hat.mean));
      if (p->theta_hat.half_width > 0.0) {
        s += "<line x1=\"" + fixed(px(p->rank)) + "\" y1=\"" + fixed(py(p->theta_hat.mean - p->theta_hat.half_width)) +
             "\" x2=\"" + fixed(px(p->rank)) + "\" y2=\"" + fixed(py(p->theta_hat.mean + p->theta_hat.half_width)) +
             "\" stroke=\"" + col + "\"/>\n";
      }
    }
    s += "<path d=\"" + d + "\" fill=\"none\" stroke=\"" + col + "\" stroke-width=\"1.5\"/>\n";
    const double ly = T + 14.0 * static_cast<double>(i);
    s += "<line x1=\"" + fixed(W - R + 10) + "\" y1=\"" + fixed(ly) + "\" x2=\"" + fixed(W - R + 30) + "\" y2=\"" +
         fixed(ly) + "\" stroke=\"" + col + "\" stroke-width=\"1.5\"/>\n";
    s += "<text x=\"" + fixed(W - R + 35) + "\" y=\"" + fixed(ly + 4) + "\">tau=" + format_double(tau) + "</text>\n";
    ++i;
  }
  const double ly = T + 14.0 * static_cast<double>(i);
  s += "<line x1=\"" + fixed(W - R + 10) + "\" y1=\"" + fixed(ly) + "\" x2=\"" + fixed(W - R + 30) + "\" y2=\"" +
       fixed(ly) + "\" stroke=\"black\" stroke-dasharray=\"5,4\"/>\n";
  s += "<text x=\"" + fixed(W - R + 35) + "\" y=\"" + fixed(ly + 4) + "\">-ln k</text>\n";
  s += "</svg>\n";
  return s;
}

inline constexpr std::string_view kSummaryHeader =
    "experiment,tower,loss,alpha,tau,rank,n_seeds,theta_true,theta_hat_mean,ci95_half_width,single_seed,mae_mean,"
    "ndcg10_mean";

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = std::string(kSummaryHeader) + "\n";
  for (const auto& r : rows) {
    out += r.experiment + ',' + r.tower + ',' + r.loss + ',' + format_double(r.alpha) + ',' + format_double(r.tau) +
           ',' + std::to_string(r.rank) + ',' + std::to_string(r.theta_hat.n) + ',' + format_double(r.theta_true) +
           ',' + format_double(r.theta_hat.mean) + ',' + format_double(r.theta_hat.half_width) + ',' +
           (r.theta_hat.single ? "true" : "false") + ',' + format_double(r.mae_mean) + ',' +
           format_double(r.ndcg10_mean) + '\n';
  }
  return out;
}

/// Reads every completed run under `runs_dir` (directories holding a
/// metrics.csv) and writes summary.csv and panel SVGs into `out_dir`.
inline ReportResult report(const std::filesystem::path& runs_dir, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(runs_dir)) throw std::runtime_error("no completed runs");
  using Key = std::tuple<std::string, std::string, std::string, double, double, std::size_t>;
  struct Acc {
    double theta_true = 0.0;
    std::vector<double> theta, mae, ndcg;
  };
  std::map<Key, Acc> acc;

  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(runs_dir)) {
    if (e.is_directory() && fs::exists(e.path() / "metrics.csv")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw std::runtime_error("no completed runs");

  ReportResult res;
  res.runs = dirs.size();
  for (const auto& dir : dirs) {
    const auto name = detail::experiment_name(dir);
    const auto rows = parse_metrics_csv(read_file(dir / "metrics.csv"));
    if (rows.empty()) continue;
    double mae = 0.0;
    for (const auto& r : rows) mae += r.abs_err;
    mae /= static_cast<double>(rows.size());
    for (const auto& r : rows) {
      auto& a = acc[{name, r.tower, r.loss, r.alpha, r.tau, r.rank}];
      a.theta_true = r.theta_true;
      a.theta.push_back(r.theta_hat);
      a.mae.push_back(mae);
      a.ndcg.push_back(r.ndcg10);
    }
  }
  for (const auto& [key, a] : acc) {
    SummaryRow row;
    std::tie(row.experiment, row.tower, row.loss, row.alpha, row.tau, row.rank) = key;
    row.theta_true = a.theta_true;
    row.theta_hat = seed_interval(a.theta);
    row.mae_mean = mean(a.mae);
    row.ndcg10_mean = mean(a.ndcg);
    res.rows.push_back(row);
  }

  fs::create_directories(out_dir);
  write_file(out_dir / "summary.csv", summary_csv(res.rows));
  std::map<std::tuple<std::string, std::string, std::string, double>, std::vector<const SummaryRow*>> panels;
  for (const auto& r : res.rows) panels[{r.experiment, r.tower, r.loss, r.alpha}].push_back(&r);
  for (const auto& [key, rows] : panels) {
    const auto& [exp, tower, loss, alpha] = key;
    const auto title = exp + ": " + tower + " tower, " + loss + ", alpha=" + format_double(alpha);
    const auto file = out_dir / (detail::safe_file_name(exp + "_" + tower + "_" + loss + "_alpha" +
                                                        format_double(alpha)) + ".svg");
    write_file(file, render_panel_svg(title, rows));
    res.panels.push_back(file);
  }
  return res;
}

}  // namespace towerlab
