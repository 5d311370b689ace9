#pragma once

#include "mplane/qlearn.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mplane {

enum class CurveField { AccumulatedReward, MeanSad, Loss, Epsilon, Tau };

const char* curve_field_name(CurveField f);
double curve_value(const EpochRecord& r, CurveField f);

struct CurveSeries {
  std::string label;
  std::vector<EpochRecord> records;
};

/// Line chart of one field against epoch, one polyline per series, as SVG.
/// Throws InsufficientDataError when no series holds a point.
void write_curve_svg(const std::vector<CurveSeries>& series, CurveField field, std::ostream& os,
                     int width = 640, int height = 400);

}  // namespace mplane
