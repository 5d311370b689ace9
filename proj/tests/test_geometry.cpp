#include "mplane/error.hpp"
#include "mplane/geometry.hpp"

#include <doctest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <filesystem>
#include <random>

using namespace mplane;
using Eigen::Vector3d;

namespace {

Plane random_plane(std::mt19937_64& rng, double d_range = 10.0) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(-d_range, d_range);
  return plane_from_normal(Vector3d(g(rng), g(rng), g(rng)), u(rng));
}

Volume affine_volume(const Eigen::Vector3i& shape, const Vector3d& grad, double offset) {
  Volume v(shape);
  for (int z = 0; z < shape.z(); ++z)
    for (int y = 0; y < shape.y(); ++y)
      for (int x = 0; x < shape.x(); ++x) v.at(x, y, z) = static_cast<float>(grad.dot(Vector3d(x, y, z)) + offset);
  return v;
}

// Interior pixels: sample points whose whole trilinear stencil lies inside the volume.
template <typename F>
void for_interior(const PlaneImage& img, const Volume& v, F&& f) {
  const int s = static_cast<int>(img.pixels.rows());
  for (int r = 0; r < s; ++r)
    for (int c = 0; c < s; ++c) {
      const Vector3d p = img.center + (c - (s - 1) / 2.0) * img.u + (r - (s - 1) / 2.0) * img.v;
      if ((p.array() >= 0.0).all() && (p.array() <= v.shape().cast<double>().array() - 1.0).all()) f(r, c, p);
    }
}

Eigen::MatrixXf oracle_image_a() {
  Eigen::MatrixXf a(32, 40);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 40; ++c)
      a(r, c) = static_cast<float>(std::sin(0.3 * r) * std::cos(0.2 * c) + 0.1 * (std::fmod(7.0 * r + 13.0 * c, 11.0) / 11.0));
  return a;
}

}  // namespace

TEST_CASE("plane_from_params examples") {
  Plane p = plane_from_params(0, 90, 90, 5);
  CHECK((p.normal - Vector3d(1, 0, 0)).norm() < 1e-12);
  CHECK(p.d == doctest::Approx(5.0));

  p = plane_from_params(60, 60, 45, 0);
  CHECK((p.normal - Vector3d(0.5, 0.5, std::sqrt(2.0) / 2)).norm() < 1e-12);
  CHECK(p.d == doctest::Approx(0.0));

  p = plane_from_params(0, 0, 0, 3);
  const Vector3d n = Vector3d::Ones() / std::sqrt(3.0);
  CHECK((p.normal - n).norm() < 1e-12);
  CHECK(p.d == doctest::Approx(3.0 / std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("degenerate cosines are rejected") {
  CHECK_THROWS_AS(plane_from_params(90, 90, 90, 1), DegenerateError);
  CHECK_THROWS_AS(plane_from_normal(Vector3d::Zero(), 1), DegenerateError);
}

TEST_CASE("normals are unit and canonically signed") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int i = 0; i < 500; ++i) {
    const Vector3d raw(g(rng), g(rng), g(rng));
    const double d = g(rng) * 5;
    const Plane a = plane_from_normal(raw, d);
    const Plane b = plane_from_normal(-raw, -d);
    CHECK(std::abs(a.normal.norm() - 1.0) < 1e-9);
    int first = 0;
    while (std::abs(a.normal[first]) <= 1e-9) ++first;
    CHECK(a.normal[first] > 0);
    CHECK((a.normal - b.normal).norm() < 1e-12);
    CHECK(a.d == doctest::Approx(b.d).epsilon(1e-12));
  }
}

TEST_CASE("angles read back are idempotent on the normal") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 500; ++i) {
    const Plane p = random_plane(rng);
    const Vector3d ang = angles_from_normal(p.normal);
    const Plane q = plane_from_params(ang.x(), ang.y(), ang.z(), p.d);
    CHECK((q.normal - p.normal).norm() < 1e-9);
    CHECK(std::abs(q.d - p.d) < 1e-9);
  }
}

TEST_CASE("dihedral angle") {
  const Plane x = plane_from_normal(Vector3d::UnitX(), 0), y = plane_from_normal(Vector3d::UnitY(), 0);
  CHECK(dihedral_angle(x, y) == doctest::Approx(90.0));
  CHECK(dihedral_angle(x, x) == doctest::Approx(0.0));
  Plane flipped = x;
  flipped.normal = -x.normal;
  CHECK(dihedral_angle(x, flipped) == doctest::Approx(0.0));

  std::mt19937_64 rng(13);
  for (int i = 0; i < 500; ++i) {
    const Plane a = random_plane(rng), b = random_plane(rng);
    const double ang = dihedral_angle(a, b);
    CHECK(ang >= 0.0);
    CHECK(ang <= 90.0);
    CHECK(ang == doctest::Approx(dihedral_angle(b, a)).epsilon(1e-12));
    Plane nb = b;
    nb.normal = -b.normal;
    CHECK(std::abs(dihedral_angle(a, nb) - ang) < 1e-9);
  }
}

TEST_CASE("origin distance difference") {
  CHECK(origin_distance_diff(plane_from_normal(Vector3d::UnitZ(), 5), plane_from_normal(Vector3d::UnitZ(), 3)) ==
        doctest::Approx(2.0));
  const Vector3d n(0.3, -0.4, 0.5);
  CHECK(origin_distance_diff(plane_from_normal(n, 2), plane_from_normal(-n, -2)) == doctest::Approx(0.0));

  // Oracle: plane through three points, normal from a cross product,
  // sign fixed by the first non-negligible component.
  std::mt19937_64 rng(14);
  std::normal_distribution<double> g;
  const auto through = [&](const Vector3d& p0, const Vector3d& p1, const Vector3d& p2) {
    Vector3d n = (p1 - p0).cross(p2 - p0).normalized();
    int i = 0;
    while (std::abs(n[i]) <= 1e-9) ++i;
    if (n[i] < 0) n = -n;
    return -n.dot(p0);
  };
  for (int i = 0; i < 100; ++i) {
    const Plane a = random_plane(rng), b = random_plane(rng);
    const auto pts = [&](const Plane& p) {
      const auto [u, v] = in_plane_basis(p.normal);
      const Vector3d f = p.foot();
      return std::array<Vector3d, 3>{f + g(rng) * u + g(rng) * v, f + 3 * u + g(rng) * v, f - 2 * v + g(rng) * u};
    };
    const auto pa = pts(a), pb = pts(b);
    const double oracle = std::abs(through(pa[0], pa[1], pa[2]) - through(pb[0], pb[1], pb[2]));
    CHECK(origin_distance_diff(a, b) == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("param distance") {
  const ParamDistance dist = ParamDistance::for_shape(Eigen::Vector3i(64, 64, 64));
  CHECK(dist.d_norm() == doctest::Approx(0.5 * std::sqrt(3.0 * 64 * 64)));
  std::mt19937_64 rng(15);
  const Plane p = random_plane(rng);
  CHECK(dist(p, p) == 0.0);
  Plane q = p;
  q.d += 0.5 * dist.d_norm();
  CHECK(dist(p, q) == doctest::Approx(0.5));

  for (int i = 0; i < 500; ++i) {
    const Plane a = random_plane(rng), b = random_plane(rng), c = random_plane(rng);
    Eigen::Vector4d ea, eb;
    ea << a.normal, a.d / dist.d_norm();
    eb << b.normal, b.d / dist.d_norm();
    CHECK(dist(a, b) == doctest::Approx((ea - eb).norm()).epsilon(1e-12));
    CHECK(dist(a, c) <= dist(a, b) + dist(b, c) + 1e-12);
  }
}

TEST_CASE("in-plane basis is orthonormal and deterministic") {
  std::mt19937_64 rng(16);
  for (int i = 0; i < 500; ++i) {
    const Plane p = random_plane(rng);
    const auto [u, v] = in_plane_basis(p.normal);
    CHECK(std::abs(u.dot(p.normal)) < 1e-9);
    CHECK(std::abs(v.dot(p.normal)) < 1e-9);
    CHECK(std::abs(u.dot(v)) < 1e-9);
    CHECK(std::abs(u.norm() - 1) < 1e-9);
    CHECK((v - p.normal.cross(u)).norm() < 1e-12);
  }
  // smallest |n.e| is z here, so u = normalize(n x z)
  const Vector3d n = Vector3d(0.8, 0.55, 0.1).normalized();
  const auto [u, v] = in_plane_basis(n);
  CHECK((u - n.cross(Vector3d::UnitZ()).normalized()).norm() < 1e-12);
}

TEST_CASE("slicing examples") {
  const Eigen::Vector3i shape(24, 24, 24);
  Volume constant(shape, 2.5f);
  std::mt19937_64 rng(17);
  for (int i = 0; i < 20; ++i) {
    const Plane p = random_plane(rng, 3.0);
    const PlaneImage img = slice_volume(constant, p, 16);
    int interior = 0;
    for_interior(img, constant, [&](int r, int c, const Vector3d&) {
      ++interior;
      CHECK(img.pixels(r, c) == 2.5f);
    });
    CHECK(interior > 0);
  }

  const Volume ramp = affine_volume(shape, Vector3d::UnitZ(), 0.0);
  for (int k = 2; k < 22; k += 5) {
    const Plane p = plane_from_normal(Vector3d::UnitZ(), -(k - ramp.center().z()));
    const PlaneImage img = slice_volume(ramp, p, 16);
    int interior = 0;
    for_interior(img, ramp, [&](int r, int c, const Vector3d&) {
      ++interior;
      CHECK(std::abs(img.pixels(r, c) - k) < 1e-6);
    });
    CHECK(interior > 0);
  }

  const PlaneImage outside = slice_volume(constant, plane_from_normal(Vector3d(1, 1, 0), 100.0), 16);
  CHECK(outside.pixels.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("slicing is equivariant to translation along the normal") {
  const Eigen::Vector3i shape(32, 32, 32);
  const Vector3d grad(0.3, -0.2, 0.5);
  const Volume v = affine_volume(shape, grad, 1.0);
  std::mt19937_64 rng(18);
  for (int i = 0; i < 50; ++i) {
    const Plane p = random_plane(rng, 2.0);
    const double t = static_cast<double>(1 + i % 3);
    // content shifted by t along the normal: w(x) = v(x - t n)
    const Volume w = affine_volume(shape, grad, 1.0 - t * grad.dot(p.normal));
    Plane moved = p;
    moved.d = p.d - t;  // the plane point moves by +t along n
    const PlaneImage a = slice_volume(v, p, 12);
    const PlaneImage b = slice_volume(w, moved, 12);
    for_interior(a, v, [&](int r, int c, const Vector3d& x) {
      const Vector3d y = x + t * p.normal;
      if ((y.array() >= 0.0).all() && (y.array() <= 31.0).all()) CHECK(std::abs(a.pixels(r, c) - b.pixels(r, c)) < 1e-4);
    });
  }
}

TEST_CASE("slice_into matches slice_volume") {
  const Volume v = affine_volume(Eigen::Vector3i(16, 16, 16), Vector3d(1, 2, 3), 0.0);
  const Plane p = plane_from_params(70, 40, 55, 1.5);
  const PlaneImage img = slice_volume(v, p, 10);
  std::vector<float> buf(100);
  slice_into(v, p, 10, buf.data());
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 10; ++c) CHECK(buf[r * 10 + c] == img.pixels(r, c));
}

TEST_CASE("basis transport between planes") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g;
  for (int i = 0; i < 300; ++i) {
    const Plane a = random_plane(rng), b = random_plane(rng);
    const auto [u, v] = in_plane_basis(a.normal);
    const auto [tu, tv] = transport_basis(u, v, a.normal, b.normal);
    CHECK(std::abs(tu.dot(b.normal)) < 1e-9);
    CHECK(std::abs(tv.dot(b.normal)) < 1e-9);
    CHECK(std::abs(tu.dot(tv)) < 1e-9);
    CHECK(std::abs(tu.norm() - 1) < 1e-9);
    CHECK(std::abs(tv.norm() - 1) < 1e-9);

    const auto [su, sv] = transport_basis(u, v, a.normal, a.normal);
    CHECK((su - u).norm() < 1e-12);
    CHECK((sv - v).norm() < 1e-12);
    // the sign of either normal does not matter
    const auto [fu, fv] = transport_basis(u, v, -a.normal, -b.normal);
    CHECK((fu - tu).norm() < 1e-9);
    CHECK((fv - tv).norm() < 1e-9);

    // equivariant under rotations of the whole configuration
    const Eigen::Matrix3d r = Eigen::AngleAxisd(g(rng), Vector3d(g(rng), g(rng), g(rng)).normalized()).toRotationMatrix();
    const auto [ru, rv] = transport_basis(r * u, r * v, r * a.normal, r * b.normal);
    CHECK((ru - r * tu).norm() < 1e-9);
    CHECK((rv - r * tv).norm() < 1e-9);
  }
}

TEST_CASE("slicing with an explicit basis") {
  const Volume v = affine_volume(Eigen::Vector3i(16, 16, 16), Vector3d(1, 2, 3), 0.0);
  const Plane p = plane_from_params(70, 40, 55, 1.5);
  const auto [u, w] = in_plane_basis(p.normal);
  CHECK(slice_volume(v, p, 10, u, w).pixels == slice_volume(v, p, 10).pixels);
  const PlaneImage swapped = slice_volume(v, p, 10, w, u);
  CHECK(swapped.pixels == slice_volume(v, p, 10).pixels.transpose());
  CHECK_THROWS_AS(slice_volume(v, p, 10, u, u), InvalidConfigError);
  CHECK_THROWS_AS(slice_volume(v, p, 10, p.normal, w), InvalidConfigError);
}

TEST_CASE("ssim properties") {
  std::mt19937_64 rng(19);
  std::normal_distribution<float> g;
  Eigen::MatrixXf a(64, 64), b(64, 64);
  for (int i = 0; i < a.size(); ++i) {
    a.data()[i] = g(rng);
    b.data()[i] = g(rng);
  }
  CHECK(ssim(a, a) == doctest::Approx(1.0));
  CHECK(std::abs(ssim(a, b)) < 0.1);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  const Eigen::MatrixXf c = Eigen::MatrixXf::Constant(16, 16, 0.7f);
  CHECK(ssim(c, c) == doctest::Approx(1.0));
  CHECK_THROWS_AS(ssim(a, Eigen::MatrixXf(32, 32)), ShapeMismatchError);
}

TEST_CASE("ssim matches frozen reference values") {
  // scikit-image structural_similarity, win_size=7, uniform window, sample
  // covariance, data_range = joint max - min.
  const Eigen::MatrixXf a = oracle_image_a();
  Eigen::MatrixXf b(32, 40), affine(32, 40);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 40; ++c) {
      b(r, c) = static_cast<float>(a(r, c) + 0.3 * std::cos(0.5 * r + 0.1 * c * c));
      affine(r, c) = static_cast<float>(2.0 * a(r, c) + 1.0);
    }
  CHECK(ssim(a, b) == doctest::Approx(0.766580654458).epsilon(1e-7));
  CHECK(ssim(a, affine) == doctest::Approx(0.077553162675).epsilon(1e-6));
}

TEST_CASE("volume and plane serialization round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "mplane_test_geometry";
  std::filesystem::create_directories(dir);
  Volume v(Eigen::Vector3i(9, 10, 11));
  for (std::size_t i = 0; i < v.data().size(); ++i) v.data()[i] = static_cast<float>(i) * 0.25f - 3.0f;
  write_volume(v, dir / "vol");
  const Volume r = read_volume(dir / "vol");
  CHECK(r.shape() == v.shape());
  CHECK(r.data() == v.data());

  std::mt19937_64 rng(20);
  for (int i = 0; i < 50; ++i) {
    const Plane p = random_plane(rng);
    const Plane q = parse_plane(format_plane(p));
    CHECK((q.normal - p.normal).norm() < 1e-12);
    CHECK(q.d == doctest::Approx(p.d).epsilon(1e-12));
  }
  std::filesystem::remove_all(dir);
}
