#include "mplane/plot.hpp"

#include "mplane/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace mplane {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

const char* curve_field_name(CurveField f) {
  switch (f) {
    case CurveField::AccumulatedReward: return "accumulated_reward";
    case CurveField::MeanSad: return "mean_SAD";
    case CurveField::Loss: return "loss";
    case CurveField::Epsilon: return "epsilon";
    case CurveField::Tau: return "tau";
  }
  return "?";
}

double curve_value(const EpochRecord& r, CurveField f) {
  switch (f) {
    case CurveField::AccumulatedReward: return r.accumulated_reward;
    case CurveField::MeanSad: return r.mean_sad;
    case CurveField::Loss: return r.loss;
    case CurveField::Epsilon: return r.epsilon;
    case CurveField::Tau: return r.tau;
  }
  return 0.0;
}

void write_curve_svg(const std::vector<CurveSeries>& series, CurveField field, std::ostream& os, int width,
                     int height) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (const auto& r : s.records) {
      const double y = curve_value(r, field);
      if (!std::isfinite(y)) continue;
      x0 = std::min(x0, double(r.epoch));
      x1 = std::max(x1, double(r.epoch));
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (!std::isfinite(x0)) throw InsufficientDataError("no curve points to plot");
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double left = 60, right = 20 + 120, top = 30, bottom = 40;
  const double pw = width - left - right, ph = height - top - bottom;
  const auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  const auto py = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
     << curve_field_name(field) << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = y0 + (y1 - y0) * i / 4.0;
    os << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << py(y) << "\" y2=\"" << py(y)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << left - 4 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << fmt(y) << "</text>\n";
    const double x = x0 + (x1 - x0) * i / 4.0;
    os << "<text x=\"" << px(x) << "\" y=\"" << top + ph + 15 << "\" text-anchor=\"middle\">" << fmt(x)
       << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 8 << "\" text-anchor=\"middle\">epoch</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& r : series[i].records) {
      const double y = curve_value(r, field);
      if (std::isfinite(y)) os << px(r.epoch) << "," << py(y) << " ";
    }
    os << "\"/>\n";
    const double ly = top + 14 + 16.0 * i;
    os << "<line x1=\"" << left + pw + 10 << "\" x2=\"" << left + pw + 30 << "\" y1=\"" << ly - 4 << "\" y2=\""
       << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 34 << "\" y=\"" << ly << "\">" << escape(series[i].label) << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace mplane
