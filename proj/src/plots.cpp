#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "rmix/harness.hpp"

namespace rmix {

namespace {

struct Band {
  std::vector<double> x, mean, lo, hi;
  bool has_band = false;
};

std::vector<double> smooth(const std::vector<double>& v, std::size_t window) {
  std::vector<double> out(v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    if (i >= window) acc -= v[i - window];
    out[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

Band summarize(const std::vector<std::vector<MetricsRecord>>& runs, double MetricsRecord::*field,
               std::size_t window) {
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& r : runs) n = std::min(n, r.size());
  std::vector<std::vector<double>> series;
  for (const auto& r : runs) {
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(r[i].*field);
    series.push_back(smooth(v, window));
  }
  Band b;
  b.has_band = runs.size() > 1;
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (const auto& s : series) mean += s[i];
    mean /= static_cast<double>(series.size());
    double var = 0.0;
    for (const auto& s : series) var += (s[i] - mean) * (s[i] - mean);
    const double sd = b.has_band ? std::sqrt(var / static_cast<double>(series.size() - 1)) : 0.0;
    b.x.push_back(static_cast<double>(runs.front()[i].step));
    b.mean.push_back(mean);
    b.lo.push_back(mean - sd);
    b.hi.push_back(mean + sd);
  }
  return b;
}

std::string f(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string panel(const Band& b, const std::string& title, double top) {
  const double left = 70, width = 780, height = 260;
  double x_max = b.x.empty() ? 1.0 : b.x.back();
  if (x_max <= 0.0) x_max = 1.0;
  double y_min = *std::min_element(b.lo.begin(), b.lo.end());
  double y_max = *std::max_element(b.hi.begin(), b.hi.end());
  if (y_max - y_min < 1e-12) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;
  auto px = [&](double x) { return left + width * x / x_max; };
  auto py = [&](double y) { return top + height * (1.0 - (y - y_min) / (y_max - y_min)); };

  std::string s = "<g>\n<text x=\"" + f(left) + "\" y=\"" + f(top - 10) +
                  "\" font-family=\"sans-serif\" font-size=\"14\">" + title + "</text>\n";
  s += "<rect x=\"" + f(left) + "\" y=\"" + f(top) + "\" width=\"" + f(width) + "\" height=\"" + f(height) +
       "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y_min + (y_max - y_min) * i / 4.0, xv = x_max * i / 4.0;
    s += "<text x=\"" + f(left - 6) + "\" y=\"" + f(py(yv) + 4) +
         "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" + label(yv) + "</text>\n";
    s += "<text x=\"" + f(px(xv)) + "\" y=\"" + f(top + height + 16) +
         "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" + label(xv) + "</text>\n";
  }
  if (b.has_band) {
    std::string pts;
    for (std::size_t i = 0; i < b.x.size(); ++i) pts += f(px(b.x[i])) + "," + f(py(b.hi[i])) + " ";
    for (std::size_t i = b.x.size(); i-- > 0;) pts += f(px(b.x[i])) + "," + f(py(b.lo[i])) + " ";
    s += "<polygon points=\"" + pts + "\" fill=\"#1f77b4\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
  }
  std::string line;
  for (std::size_t i = 0; i < b.x.size(); ++i) line += f(px(b.x[i])) + "," + f(py(b.mean[i])) + " ";
  s += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n</g>\n";
  return s;
}

}  // namespace

std::string render_plot_svg(const std::vector<std::vector<MetricsRecord>>& runs, std::size_t window) {
  if (runs.empty()) throw Error("plot: no metrics");
  for (const auto& r : runs) {
    if (r.empty()) throw Error("plot: empty metrics series");
  }
  if (window == 0) throw Error("plot: window must be positive");
  const Band success = summarize(runs, &MetricsRecord::eval_success, window);
  const Band ret = summarize(runs, &MetricsRecord::eval_return, window);
  std::string svg =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"680\" viewBox=\"0 0 900 680\">\n"
      "<rect width=\"900\" height=\"680\" fill=\"white\"/>\n";
  const std::string n = std::to_string(runs.size()) + (runs.size() == 1 ? " run" : " runs, mean +/- 1 std");
  svg += panel(success, "evaluation success rate (" + n + ")", 40);
  svg += panel(ret, "evaluation mean return (" + n + ")", 370);
  svg += "<text x=\"460\" y=\"672\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">"
         "environment steps</text>\n</svg>\n";
  return svg;
}

void emit_plots(const std::vector<std::filesystem::path>& metrics_files, const std::filesystem::path& out,
                std::size_t window) {
  if (metrics_files.empty()) throw Error("plot: need at least one metrics file");
  std::vector<std::vector<MetricsRecord>> runs;
  for (const auto& p : metrics_files) runs.push_back(read_metrics(p));
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + out.string());
  f << render_plot_svg(runs, window);
}

}  // namespace rmix
