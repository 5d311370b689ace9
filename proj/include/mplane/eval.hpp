#pragma once

#include "mplane/geometry.hpp"
#include "mplane/phantom.hpp"

#include <array>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace mplane {

struct PlaneMetrics {
  double ang = 0.0;   ///< degrees
  double dis = 0.0;   ///< voxels
  double ssim = 1.0;
  double sad = 0.0;   ///< ang + dis
};

struct CaseRecord {
  std::string case_name;
  std::array<PlaneMetrics, 3> planes;
};

std::array<PlaneMetrics, 3> evaluate_case(const std::array<Plane, 3>& pred, const PhantomCase& scene,
                                          int slice_size = 64);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

enum class Metric { Ang = 0, Dis = 1, Ssim = 2, Sad = 3 };
inline constexpr int kMetricCount = 4;
const char* metric_name(Metric m);

struct MetricsReport {
  std::string variant;
  /// [metric][plane]
  std::array<std::array<MeanStd, 3>, kMetricCount> per_plane{};
  /// [metric], pooled over all planes of all cases
  std::array<MeanStd, kMetricCount> avg{};
  std::vector<CaseRecord> records;

  /// Per-case values of a metric averaged over the three planes.
  std::vector<double> case_means(Metric m) const;
};

MetricsReport aggregate(const std::vector<CaseRecord>& records, const std::string& variant = "");

struct TTestResult {
  double p_value = 1.0;
  double t = 0.0;
  bool degenerate = false;  ///< differences had zero variance
};

/// Two-sided paired t-test. Zero-variance differences give p = 1 when all
/// differences vanish and p = 0 otherwise, flagged as degenerate.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

void write_report_csv(const std::vector<MetricsReport>& reports, std::ostream& os);
/// Aligned table with one row per (variant, metric); columns are planes then Avg.
void write_report_table(const std::vector<MetricsReport>& reports, std::ostream& os);
void write_case_records(const MetricsReport& report, std::ostream& os);

}  // namespace mplane
