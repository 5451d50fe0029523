#pragma once

// Plot data (CSV) and minimal SVG line charts for metrics logs.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "aeos/harness.hpp"

namespace aeos {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct PlotSpec {
  std::string title;
  std::string x_label = "step";
  std::string y_label;
  bool log_y = false;
  std::vector<PlotSeries> series;
};

namespace detail {

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                           "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string tick_label(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

inline std::ofstream open_for_write(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace detail

/// Line chart; dashed series are drawn with a dash pattern (threshold lines).
inline void write_svg(const fs::path& path, const PlotSpec& spec) {
  if (spec.series.empty()) throw std::invalid_argument("plot has no series");
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  double y0 = x0, y1 = -x0;
  for (const auto& s : spec.series) {
    if (s.x.empty() || s.x.size() != s.y.size()) {
      throw std::invalid_argument("empty or ragged series: " + s.label);
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double y = spec.log_y ? std::log10(std::max(s.y[i], 1e-300)) : s.y[i];
      if (!std::isfinite(y) || !std::isfinite(s.x[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0) || !std::isfinite(y0)) throw std::invalid_argument("no finite points");
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double W = 760, H = 460, L = 80, R = 170, T = 40, B = 50;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  auto out = detail::open_for_write(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << detail::xml_escape(spec.title) << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0, yv = y0 + (y1 - y0) * i / 5.0;
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
        << detail::tick_label(xv) << "</text>\n";
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
        << detail::tick_label(spec.log_y ? std::pow(10.0, yv) : yv) << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">"
      << detail::xml_escape(spec.x_label) << "</text>\n";
  out << "<text transform=\"translate(16," << (T + H - B) / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << detail::xml_escape(spec.y_label)
      << "</text>\n";

  for (std::size_t k = 0; k < spec.series.size(); ++k) {
    const auto& s = spec.series[k];
    const char* color = detail::kPalette[k % std::size(detail::kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
    if (s.dashed) out << " stroke-dasharray=\"6,4\"";
    out << " points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double y = spec.log_y ? std::log10(std::max(s.y[i], 1e-300)) : s.y[i];
      if (!std::isfinite(y)) continue;
      out << px(s.x[i]) << "," << py(y) << " ";
    }
    out << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(k);
    out << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 34
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"1.5\""
        << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n";
    out << "<text x=\"" << W - R + 40 << "\" y=\"" << ly + 4 << "\">"
        << detail::xml_escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
}

/// Wide CSV: x column then one column per series (series must share x).
inline void write_plot_csv(const fs::path& path, const PlotSpec& spec) {
  if (spec.series.empty()) throw std::invalid_argument("plot has no series");
  const auto& xs = spec.series.front().x;
  if (xs.empty()) throw std::invalid_argument("empty series: " + spec.series.front().label);
  for (const auto& s : spec.series) {
    if (s.x != xs || s.y.size() != xs.size()) {
      throw std::invalid_argument("series do not share x values: " + s.label);
    }
  }
  auto out = detail::open_for_write(path);
  out << spec.x_label;
  for (const auto& s : spec.series) out << "," << s.label;
  out << "\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out << xs[i];
    for (const auto& s : spec.series) out << "," << detail::fmt_num(s.y[i]);
    out << "\n";
  }
}

/// Series names accepted by log_series / emit_plots.
inline const std::vector<std::string>& plottable_fields() {
  static const std::vector<std::string> f{"train_loss", "test_loss",  "grad_norm",
                                          "sharpness",  "precond_sharpness", "threshold",
                                          "align_topk", "align_rest"};
  return f;
}

/// Steps/values of one metrics field. Optional fields contribute only the
/// records where they are present; `threshold` follows the checkpoint cadence.
inline PlotSeries log_series(const MetricsLog& log, const std::string& field) {
  PlotSeries s;
  s.label = field;
  s.dashed = field == "threshold";
  for (const auto& r : log.records) {
    std::optional<double> v;
    if (field == "train_loss") v = r.train_loss;
    else if (field == "test_loss") v = r.test_loss;
    else if (field == "grad_norm") v = r.grad_norm;
    else if (field == "sharpness") v = r.sharpness;
    else if (field == "precond_sharpness") v = r.precond_sharpness;
    else if (field == "threshold") v = r.is_checkpoint() ? std::optional<double>(r.threshold) : std::nullopt;
    else if (field == "align_topk") v = r.align_topk;
    else if (field == "align_rest") v = r.align_rest;
    else throw std::invalid_argument("unknown plot field: " + field);
    if (v) {
      s.x.push_back(static_cast<double>(r.step));
      s.y.push_back(*v);
    }
  }
  return s;
}

/// Writes <stem>_<name>.csv and <stem>_<name>.svg for one chart built from the
/// given fields. An empty series is an error.
inline void emit_plot(const MetricsLog& log, const fs::path& dir, const std::string& stem,
                      const std::string& name, const std::vector<std::string>& fields,
                      bool log_y = false) {
  if (log.empty()) throw std::invalid_argument("emit_plot: empty log");
  PlotSpec spec;
  spec.title = stem + ": " + name;
  spec.y_label = name;
  spec.log_y = log_y;
  for (const auto& f : fields) {
    auto s = log_series(log, f);
    if (s.x.empty()) throw std::invalid_argument("emit_plot: series '" + f + "' is empty");
    spec.series.push_back(std::move(s));
  }
  write_plot_csv(dir / (stem + "_" + name + ".csv"), spec);
  write_svg(dir / (stem + "_" + name + ".svg"), spec);
}

/// Standard charts for one run: preconditioned sharpness with its threshold,
/// raw sharpness, and loss.
inline void emit_plots(const MetricsLog& log, const fs::path& dir, const std::string& stem = "run") {
  if (log.empty()) throw std::invalid_argument("emit_plots: empty log");
  emit_plot(log, dir, stem, "precond_sharpness", {"precond_sharpness", "threshold"});
  emit_plot(log, dir, stem, "sharpness", {"sharpness"});
  emit_plot(log, dir, stem, "train_loss", {"train_loss"}, true);
}

/// Several runs on one chart (one precond_sharpness and one threshold series per
/// run). CSV is long-form: label,step,precond_sharpness,threshold.
inline void emit_comparison_plot(const std::vector<std::pair<std::string, MetricsLog>>& runs,
                                 const fs::path& dir, const std::string& stem) {
  if (runs.empty()) throw std::invalid_argument("emit_comparison_plot: no runs");
  PlotSpec spec;
  spec.title = stem;
  spec.y_label = "precond_sharpness";
  spec.log_y = true;
  auto csv = detail::open_for_write(dir / (stem + ".csv"));
  csv << "label,step,precond_sharpness,threshold\n";
  for (const auto& [label, log] : runs) {
    auto ps = log_series(log, "precond_sharpness");
    auto th = log_series(log, "threshold");
    if (ps.x.empty()) throw std::invalid_argument("emit_comparison_plot: run '" + label + "' is empty");
    for (std::size_t i = 0; i < ps.x.size(); ++i) {
      csv << label << "," << ps.x[i] << "," << detail::fmt_num(ps.y[i]) << ","
          << detail::fmt_num(th.y[i]) << "\n";
    }
    ps.label = label;
    th.label = label + " threshold";
    spec.series.push_back(std::move(ps));
    spec.series.push_back(std::move(th));
  }
  write_svg(dir / (stem + ".svg"), spec);
}

}  // namespace aeos
