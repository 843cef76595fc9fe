#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ldpo/csv.hpp"
#include "ldpo/trainer.hpp"

namespace ldpo {

inline nlohmann::json to_json(const EvalMetrics& m) {
  return {{"mean_loss_nats", m.mean_loss},
          {"top1_agreement", m.top1_agreement},
          {"mean_tv_distance", m.mean_tv},
          {"mean_kendall_tau", m.mean_kendall_tau}};
}

/// Wall-clock time is left out unless asked for, so reports are byte-stable.
inline nlohmann::json to_json(const TrainReport& r, bool include_timing = false) {
  nlohmann::json j;
  j["epochs"] = r.loss_trace.size();
  j["steps"] = r.steps.size();
  j["loss_trace_nats"] = r.loss_trace;
  j["eval_lambda"] = std::vector<double>(r.eval_lambda.begin(), r.eval_lambda.end());
  j["final_metrics"] = to_json(r.final_metrics);
  j["final_grad_max_norm"] = r.final_grad_max_norm;
  auto& draws = j["lambda_draws"] = nlohmann::json::array();
  for (const auto& d : r.lambda_draws) draws.push_back({{"step", d.step}, {"prompt_id", d.prompt_id}, {"lambda", d.lambda}});
  if (include_timing) j["wall_clock_seconds"] = r.wall_clock_seconds;
  return j;
}

/// Columns: step, epoch, loss_nats, lambda_1..lambda_m (batch-mean lambda).
inline void write_loss_csv(std::ostream& out, const TrainReport& r) {
  const std::size_t m = r.steps.empty() ? 0 : r.steps.front().lambda.size();
  out << "step,epoch,loss_nats";
  for (std::size_t k = 0; k < m; ++k) out << ",lambda_" << k + 1;
  out << "\n";
  for (const auto& s : r.steps) {
    out << s.step << ',' << s.epoch << ',' << csv::exact(s.loss);
    for (double v : s.lambda) out << ',' << csv::exact(v);
    out << "\n";
  }
}

struct PlotSeries {
  std::string label;
  std::vector<double> y;
  std::string color = "#1f77b4";
};

/// Line plot as plain SVG text: axes, four y ticks, one polyline per series.
/// Coordinates are printed at fixed precision so output is byte-deterministic.
inline std::string svg_line_plot(const std::vector<PlotSeries>& series, const std::string& title,
                                 const std::string& x_label, const std::string& y_label) {
  constexpr double width = 640, height = 400, left = 70, right = 20, top = 40, bottom = 50;
  const double pw = width - left - right, ph = height - top - bottom;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n_max = 0;
  for (const auto& s : series) {
    n_max = std::max(n_max, s.y.size());
    for (double v : s.y) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  auto fx = [&](std::size_t i) { return left + (n_max > 1 ? pw * static_cast<double>(i) / (n_max - 1) : pw / 2); };
  auto fy = [&](double v) { return top + ph * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
    << title << "</text>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    const std::string yy = csv::fixed(fy(v), 2);
    o << "<line x1=\"" << left - 5 << "\" y1=\"" << yy << "\" x2=\"" << left << "\" y2=\"" << yy
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << left - 8 << "\" y=\"" << yy << "\" text-anchor=\"end\" dominant-baseline=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"11\">" << csv::fixed(v, 4) << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label << " (0.." << (n_max ? n_max - 1 : 0)
    << ")</text>\n";
  o << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
    << "transform=\"rotate(-90 16 " << top + ph / 2 << ")\">" << y_label << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    o << "<polyline fill=\"none\" stroke=\"" << series[s].color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].y.size(); ++i) {
      if (i) o << ' ';
      o << csv::fixed(fx(i), 2) << ',' << csv::fixed(fy(series[s].y[i]), 2);
    }
    o << "\"/>\n";
    o << "<text x=\"" << left + pw - 4 << "\" y=\"" << top + 14 + 14 * s << "\" text-anchor=\"end\" fill=\""
      << series[s].color << "\" font-family=\"sans-serif\" font-size=\"11\">" << series[s].label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline std::string loss_curve_svg(const TrainReport& r) {
  std::vector<double> per_step;
  per_step.reserve(r.steps.size());
  for (const auto& s : r.steps) per_step.push_back(s.loss);
  return svg_line_plot({{"batch loss", per_step, "#1f77b4"}}, "lambda-DPO training loss", "step", "loss (nats)");
}

}  // namespace ldpo
