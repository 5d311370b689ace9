#include "mplane/eval.hpp"

#include "mplane/error.hpp"
#include "mplane/stats.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace mplane {

namespace {

double metric_value(const PlaneMetrics& m, Metric which) {
  switch (which) {
    case Metric::Ang: return m.ang;
    case Metric::Dis: return m.dis;
    case Metric::Ssim: return m.ssim;
    case Metric::Sad: return m.sad;
  }
  return 0.0;
}

MeanStd summarize(const std::vector<double>& xs) { return {stats::mean(xs), stats::stddev(xs)}; }

std::string fmt_ms(const MeanStd& s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << s.mean << "+-" << s.std;
  return os.str();
}

}  // namespace

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::Ang: return "Ang";
    case Metric::Dis: return "Dis";
    case Metric::Ssim: return "SSIM";
    case Metric::Sad: return "SAD";
  }
  return "?";
}

std::array<PlaneMetrics, 3> evaluate_case(const std::array<Plane, 3>& pred, const PhantomCase& scene,
                                          int slice_size) {
  std::array<PlaneMetrics, 3> out;
  for (int k = 0; k < 3; ++k) {
    const Plane& g = scene.gt_planes[k];
    auto& m = out[k];
    m.ang = dihedral_angle(pred[k], g);
    m.dis = origin_distance_diff(pred[k], g);
    const PlaneImage truth = slice_volume(scene.volume, g, slice_size);
    const auto [u, v] = transport_basis(truth.u, truth.v, g.normal, pred[k].normal);
    m.ssim = ssim(slice_volume(scene.volume, pred[k], slice_size, u, v), truth);
    m.sad = m.ang + m.dis;
  }
  return out;
}

std::vector<double> MetricsReport::case_means(Metric m) const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    double s = 0.0;
    for (const auto& p : r.planes) s += metric_value(p, m);
    out.push_back(s / 3.0);
  }
  return out;
}

MetricsReport aggregate(const std::vector<CaseRecord>& records, const std::string& variant) {
  if (records.empty()) throw InsufficientDataError("aggregate needs at least one record");
  MetricsReport rep;
  rep.variant = variant;
  rep.records = records;
  for (int mi = 0; mi < kMetricCount; ++mi) {
    const auto m = static_cast<Metric>(mi);
    std::vector<double> pooled;
    for (int k = 0; k < 3; ++k) {
      std::vector<double> xs;
      for (const auto& r : records) xs.push_back(metric_value(r.planes[k], m));
      rep.per_plane[mi][k] = summarize(xs);
      pooled.insert(pooled.end(), xs.begin(), xs.end());
    }
    rep.avg[mi] = summarize(pooled);
  }
  return rep;
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeMismatchError("paired t-test needs equal lengths");
  if (a.size() < 2) throw InsufficientDataError("paired t-test needs at least two pairs");
  const auto n = static_cast<double>(a.size());
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const double m = stats::mean(diff);
  double ss = 0.0;
  for (double d : diff) ss += (d - m) * (d - m);
  TTestResult r;
  if (ss == 0.0) {
    r.degenerate = true;
    const bool all_zero = std::all_of(diff.begin(), diff.end(), [](double d) { return d == 0.0; });
    r.p_value = all_zero ? 1.0 : 0.0;
    r.t = all_zero ? 0.0 : std::copysign(INFINITY, m);
    return r;
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  r.t = m / (sd / std::sqrt(n));
  r.p_value = stats::student_t_two_sided(r.t, n - 1.0);
  return r;
}

void write_report_csv(const std::vector<MetricsReport>& reports, std::ostream& os) {
  os << "variant,metric,plane,mean,std\n";
  os << std::setprecision(10);
  for (const auto& r : reports)
    for (int mi = 0; mi < kMetricCount; ++mi) {
      for (int k = 0; k < 3; ++k)
        os << r.variant << ',' << metric_name(static_cast<Metric>(mi)) << ',' << (k + 1) << ','
           << r.per_plane[mi][k].mean << ',' << r.per_plane[mi][k].std << '\n';
      os << r.variant << ',' << metric_name(static_cast<Metric>(mi)) << ",Avg," << r.avg[mi].mean
         << ',' << r.avg[mi].std << '\n';
    }
}

void write_report_table(const std::vector<MetricsReport>& reports, std::ostream& os) {
  os << std::left << std::setw(12) << "Variant" << std::setw(8) << "Metric";
  for (const char* h : {"P1", "P2", "P3", "Avg"}) os << std::setw(16) << h;
  os << '\n';
  for (const auto& r : reports)
    for (int mi = 0; mi < kMetricCount; ++mi) {
      os << std::setw(12) << r.variant << std::setw(8) << metric_name(static_cast<Metric>(mi));
      for (int k = 0; k < 3; ++k) os << std::setw(16) << fmt_ms(r.per_plane[mi][k]);
      os << std::setw(16) << fmt_ms(r.avg[mi]) << '\n';
    }
  os << "(mean+-std, population std; Dis in voxels)\n";
}

void write_case_records(const MetricsReport& report, std::ostream& os) {
  os << "case,plane,ang,dis,ssim,sad\n" << std::setprecision(17);
  for (const auto& r : report.records)
    for (int k = 0; k < 3; ++k)
      os << r.case_name << ',' << (k + 1) << ',' << r.planes[k].ang << ',' << r.planes[k].dis << ','
         << r.planes[k].ssim << ',' << r.planes[k].sad << '\n';
}

}  // namespace mplane
