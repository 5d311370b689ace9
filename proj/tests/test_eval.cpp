#include "mplane/error.hpp"
#include "mplane/eval.hpp"
#include "mplane/phantom.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

using namespace mplane;

namespace {

const PhantomCase& scene() {
  static const PhantomCase c = generate_phantom(31);
  return c;
}

Plane rotated(const Plane& p, const Eigen::Vector3d& axis, double degrees) {
  return plane_from_normal(axis_angle(axis, degrees) * p.normal, p.d);
}

CaseRecord record_with(double value) {
  CaseRecord r;
  r.case_name = "c" + std::to_string(value);
  for (auto& p : r.planes) p = {value, 2 * value, 1.0 - value / 10, 3 * value};
  return r;
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("ground-truth prediction scores perfectly") {
  const auto m = evaluate_case(scene().gt_planes, scene(), 48);
  for (const auto& p : m) {
    CHECK(p.ang <= 1e-6);
    CHECK(p.dis <= 1e-9);
    CHECK(p.ssim == doctest::Approx(1.0));
    CHECK(p.sad <= 1e-6);
  }
}

TEST_CASE("tilted and shifted predictions") {
  std::array<Plane, 3> pred = scene().gt_planes;
  const Plane& g0 = scene().gt_planes[0];
  const Eigen::Vector3d axis = g0.normal.unitOrthogonal();
  pred[0] = rotated(g0, axis, 10.0);
  pred[1].d += 2.0;
  pred[2] = rotated(scene().gt_planes[2], scene().gt_planes[2].normal.unitOrthogonal(), 4.0);
  pred[2].d -= 1.5;
  const auto m = evaluate_case(pred, scene(), 48);
  CHECK(m[0].ang == doctest::Approx(10.0));
  CHECK(m[0].dis <= 1e-9);
  CHECK(m[1].ang <= 1e-6);
  CHECK(m[1].dis == doctest::Approx(2.0));
  CHECK(m[1].sad == doctest::Approx(2.0));
  CHECK(m[2].ang == doctest::Approx(4.0));
  CHECK(m[2].dis == doctest::Approx(1.5));
  CHECK(m[2].sad == doctest::Approx(5.5));
  for (const auto& p : m) {
    CHECK(p.ssim < 1.0);
    CHECK(p.ssim > -1.0);
  }
}

TEST_CASE("angle and distance errors are symmetric in prediction and truth") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const Plane a = plane_from_normal({u(rng), u(rng), u(rng)}, 5 * u(rng));
    const Plane b = plane_from_normal({u(rng), u(rng), u(rng)}, 5 * u(rng));
    CHECK(dihedral_angle(a, b) == doctest::Approx(dihedral_angle(b, a)));
    CHECK(origin_distance_diff(a, b) == doctest::Approx(origin_distance_diff(b, a)));
    CHECK(dihedral_angle(a, b) <= 90.0 + 1e-9);
  }
}

TEST_CASE("aggregation uses population standard deviation") {
  const MetricsReport r = aggregate({record_with(1.0), record_with(3.0)}, "X");
  CHECK(r.variant == "X");
  CHECK(r.per_plane[static_cast<int>(Metric::Ang)][0].mean == doctest::Approx(2.0));
  CHECK(r.per_plane[static_cast<int>(Metric::Ang)][0].std == doctest::Approx(1.0));
  CHECK(r.avg[static_cast<int>(Metric::Dis)].mean == doctest::Approx(4.0));
  CHECK(r.avg[static_cast<int>(Metric::Dis)].std == doctest::Approx(2.0));
  CHECK(r.avg[static_cast<int>(Metric::Sad)].mean == doctest::Approx(6.0));
  const auto cm = r.case_means(Metric::Ssim);
  REQUIRE(cm.size() == 2);
  CHECK(cm[0] == doctest::Approx(0.9));
  CHECK(cm[1] == doctest::Approx(0.7));
  CHECK_THROWS_AS(aggregate({}), InsufficientDataError);
}

TEST_CASE("paired t-test matches reference values") {
  // scipy.stats.ttest_rel
  std::vector<double> a, b;
  for (int i = 0; i < 12; ++i) {
    a.push_back(std::sin(1.7 * i) * 3 + 0.1 * i);
    b.push_back(std::cos(0.9 * i) * 2 + 0.12 * i);
  }
  TTestResult r = paired_ttest(a, b);
  CHECK(r.t == doctest::Approx(-0.0853678961403465).epsilon(1e-10));
  CHECK(r.p_value == doctest::Approx(0.933502894807371).epsilon(1e-10));
  CHECK_FALSE(r.degenerate);

  a.clear();
  b.clear();
  for (int i = 0; i < 30; ++i) {
    a.push_back(std::sin(0.37 * i) + 0.05 * i);
    b.push_back(std::sin(0.37 * i + 0.2) + 0.04 * i);
  }
  r = paired_ttest(a, b);
  CHECK(r.t == doctest::Approx(4.71105663834639).epsilon(1e-10));
  CHECK(r.p_value == doctest::Approx(5.65975789410484e-05).epsilon(1e-8));

  const TTestResult swapped = paired_ttest(b, a);
  CHECK(swapped.t == doctest::Approx(-r.t));
  CHECK(swapped.p_value == doctest::Approx(r.p_value));
}

TEST_CASE("degenerate t-tests") {
  const std::vector<double> a = {1.0, 2.0, 3.0}, shifted = {2.0, 3.0, 4.0};
  TTestResult same = paired_ttest(a, a);
  CHECK(same.degenerate);
  CHECK(same.p_value == 1.0);
  CHECK(same.t == 0.0);
  TTestResult shift = paired_ttest(a, shifted);
  CHECK(shift.degenerate);
  CHECK(shift.p_value == 0.0);
  CHECK(std::isinf(shift.t));
  CHECK(shift.t < 0);
  CHECK_THROWS_AS(paired_ttest(a, std::vector<double>{1.0}), ShapeMismatchError);
  CHECK_THROWS_AS(paired_ttest(std::vector<double>{1.0}, std::vector<double>{2.0}), InsufficientDataError);
}

TEST_CASE("report writers") {
  const MetricsReport r1 = aggregate({record_with(1.0), record_with(3.0)}, "Ours");
  const MetricsReport r2 = aggregate({record_with(2.0), record_with(2.0)}, "MARL");

  std::ostringstream csv;
  write_report_csv({r1, r2}, csv);
  CHECK(count_lines(csv.str()) == 1 + 2 * kMetricCount * 4);
  CHECK(csv.str().rfind("variant,metric,plane,mean,std\n", 0) == 0);
  CHECK(csv.str().find("Ours,Ang,1,2,1\n") != std::string::npos);
  CHECK(csv.str().find("MARL,SAD,Avg,6,0\n") != std::string::npos);

  std::ostringstream table;
  write_report_table({r1, r2}, table);
  CHECK(count_lines(table.str()) == 2 + 2 * kMetricCount);
  CHECK(table.str().find("2.00+-1.00") != std::string::npos);

  std::ostringstream cases;
  write_case_records(r1, cases);
  CHECK(count_lines(cases.str()) == 1 + 2 * 3);
  CHECK(cases.str().find("c1.000000,2,1,2,0.90000000000000002,3\n") != std::string::npos);
}

TEST_CASE("metrics are invariant under a joint rotation of volume and planes") {
  // quarter turns about the center map the voxel grid onto itself
  const PhantomCase& c = scene();
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::array<Plane, 3> pred;
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d axis = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
    pred[k] = rotated(c.gt_planes[k], axis, 6.0 + 3 * k);
    pred[k].d += n(rng);
  }
  const auto before = evaluate_case(pred, c, 48);
  for (const Eigen::Vector3d axis : {Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ()}) {
    RigidTransform t;
    t.rotation = axis_angle(axis, 90.0);
    const Eigen::Vector3d center = c.volume.center();
    t.translation = center - t.rotation * center;
    PhantomCase moved = c;
    moved.volume = apply_transform(c.volume, t);
    std::array<Plane, 3> pred_moved;
    for (int k = 0; k < 3; ++k) {
      moved.gt_planes[k] = apply_transform(c.gt_planes[k], t, center);
      pred_moved[k] = apply_transform(pred[k], t, center);
    }
    const auto after = evaluate_case(pred_moved, moved, 48);
    for (int k = 0; k < 3; ++k) {
      CHECK(after[k].ang == doctest::Approx(before[k].ang).epsilon(1e-6));
      CHECK(std::abs(after[k].dis - before[k].dis) <= 1e-6);
      CHECK(std::abs(after[k].ssim - before[k].ssim) <= 1e-3);
    }
  }
}

TEST_CASE("aggregation ignores record order") {
  std::vector<CaseRecord> recs;
  for (double v : {0.5, 4.0, 2.0, 7.5, 1.0}) recs.push_back(record_with(v));
  const MetricsReport a = aggregate(recs);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(recs.begin(), recs.end(), rng);
    const MetricsReport b = aggregate(recs);
    for (int m = 0; m < kMetricCount; ++m) {
      CHECK(b.avg[m].mean == doctest::Approx(a.avg[m].mean));
      CHECK(b.avg[m].std == doctest::Approx(a.avg[m].std));
      for (int k = 0; k < 3; ++k) CHECK(b.per_plane[m][k].mean == doctest::Approx(a.per_plane[m][k].mean));
    }
  }
}
