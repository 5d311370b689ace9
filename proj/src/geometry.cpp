#include "mplane/geometry.hpp"

#include "mplane/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace mplane {

namespace {

constexpr double kDegenerateNorm = 1e-12;
constexpr double kSignEps = 1e-9;

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

void canonicalize(Eigen::Vector3d& n, double& d) {
  for (int i = 0; i < 3; ++i) {
    if (std::abs(n[i]) > kSignEps) {
      if (n[i] < 0.0) {
        n = -n;
        d = -d;
      }
      return;
    }
  }
}

}  // namespace

Plane plane_from_params(double zeta, double beta, double phi, double d) {
  const Eigen::Vector3d cosines(std::cos(deg2rad(zeta)), std::cos(deg2rad(beta)),
                                std::cos(deg2rad(phi)));
  const double norm = cosines.norm();
  if (norm < kDegenerateNorm) throw DegenerateError("plane direction cosines vanish");
  Plane p;
  p.normal = cosines / norm;
  p.d = d / norm;
  canonicalize(p.normal, p.d);
  p.angles = angles_from_normal(p.normal);
  return p;
}

Plane plane_from_params(const Eigen::Vector4d& params) {
  return plane_from_params(params[0], params[1], params[2], params[3]);
}

Plane plane_from_normal(const Eigen::Vector3d& normal, double d) {
  const double norm = normal.norm();
  if (norm < kDegenerateNorm) throw DegenerateError("plane normal vanishes");
  Plane p;
  p.normal = normal / norm;
  p.d = d / norm;
  canonicalize(p.normal, p.d);
  p.angles = angles_from_normal(p.normal);
  return p;
}

Eigen::Vector3d angles_from_normal(const Eigen::Vector3d& normal) {
  return normal.unaryExpr([](double c) { return rad2deg(std::acos(std::clamp(c, -1.0, 1.0))); });
}

double dihedral_angle(const Plane& a, const Plane& b) {
  const double c = std::clamp(std::abs(a.normal.dot(b.normal)), 0.0, 1.0);
  return rad2deg(std::acos(c));
}

double origin_distance_diff(const Plane& a, const Plane& b) { return std::abs(a.d - b.d); }

ParamDistance::ParamDistance(double d_norm) : d_norm_(d_norm) {
  if (!(d_norm > 0.0)) throw InvalidConfigError("d_norm must be positive");
}

ParamDistance ParamDistance::for_shape(const Eigen::Vector3i& shape) {
  return ParamDistance(0.5 * shape.cast<double>().norm());
}

double ParamDistance::operator()(const Plane& p, const Plane& g) const {
  Eigen::Vector4d diff;
  diff.head<3>() = p.normal - g.normal;
  diff[3] = (p.d - g.d) / d_norm_;
  return diff.norm();
}

Volume::Volume(const Eigen::Vector3i& shape, float fill) : shape_(shape) {
  if ((shape.array() < 1).any()) throw InvalidConfigError("volume shape must be positive");
  data_.assign(static_cast<std::size_t>(shape.prod()), fill);
}

float Volume::sample(const Eigen::Vector3d& p) const {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy), z0 = static_cast<int>(fz);
  if (x0 < -1 || y0 < -1 || z0 < -1 || x0 >= shape_.x() || y0 >= shape_.y() || z0 >= shape_.z())
    return 0.0f;
  const double tx = p.x() - fx, ty = p.y() - fy, tz = p.z() - fz;

  const bool interior = x0 >= 0 && y0 >= 0 && z0 >= 0 && x0 + 1 < shape_.x() &&
                        y0 + 1 < shape_.y() && z0 + 1 < shape_.z();
  double c[2][2][2];
  if (interior) {
    const std::size_t sx = 1, sy = shape_.x(), sz = static_cast<std::size_t>(shape_.x()) * shape_.y();
    const float* base = data_.data() + index(x0, y0, z0);
    c[0][0][0] = base[0];
    c[1][0][0] = base[sx];
    c[0][1][0] = base[sy];
    c[1][1][0] = base[sx + sy];
    c[0][0][1] = base[sz];
    c[1][0][1] = base[sx + sz];
    c[0][1][1] = base[sy + sz];
    c[1][1][1] = base[sx + sy + sz];
  } else {
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int x = x0 + dx, y = y0 + dy, z = z0 + dz;
          const bool inside = x >= 0 && y >= 0 && z >= 0 && x < shape_.x() && y < shape_.y() &&
                              z < shape_.z();
          c[dx][dy][dz] = inside ? at(x, y, z) : 0.0;
        }
  }
  const double c00 = c[0][0][0] * (1 - tx) + c[1][0][0] * tx;
  const double c10 = c[0][1][0] * (1 - tx) + c[1][1][0] * tx;
  const double c01 = c[0][0][1] * (1 - tx) + c[1][0][1] * tx;
  const double c11 = c[0][1][1] * (1 - tx) + c[1][1][1] * tx;
  const double c0 = c00 * (1 - ty) + c10 * ty;
  const double c1 = c01 * (1 - ty) + c11 * ty;
  return static_cast<float>(c0 * (1 - tz) + c1 * tz);
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> in_plane_basis(const Eigen::Vector3d& normal) {
  int axis = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(normal[i]) < std::abs(normal[axis])) axis = i;
  const Eigen::Vector3d u = normal.cross(Eigen::Vector3d::Unit(axis)).normalized();
  const Eigen::Vector3d v = normal.cross(u);
  return {u, v};
}

namespace {

void sample_grid(const Volume& volume, const Plane& plane, int size, const Eigen::Vector3d& u,
                 const Eigen::Vector3d& v, float* out) {
  const Eigen::Vector3d origin = volume.center() + plane.foot();
  const double half = 0.5 * (size - 1);
  for (int r = 0; r < size; ++r) {
    const Eigen::Vector3d row = origin + (r - half) * v;
    for (int c = 0; c < size; ++c) out[r * size + c] = volume.sample(row + (c - half) * u);
  }
}

}  // namespace

void slice_into(const Volume& volume, const Plane& plane, int size, float* out) {
  const auto [u, v] = in_plane_basis(plane.normal);
  sample_grid(volume, plane, size, u, v, out);
}

PlaneImage slice_volume(const Volume& volume, const Plane& plane, int size) {
  const auto [u, v] = in_plane_basis(plane.normal);
  return slice_volume(volume, plane, size, u, v);
}

PlaneImage slice_volume(const Volume& volume, const Plane& plane, int size, const Eigen::Vector3d& u,
                        const Eigen::Vector3d& v) {
  if (size < 8) throw InvalidConfigError("slice size must be at least 8");
  if (std::abs(u.norm() - 1.0) > 1e-9 || std::abs(v.norm() - 1.0) > 1e-9 || std::abs(u.dot(v)) > 1e-9 ||
      std::abs(u.dot(plane.normal)) > 1e-9 || std::abs(v.dot(plane.normal)) > 1e-9)
    throw InvalidConfigError("slice basis must be orthonormal and lie in the plane");
  PlaneImage img;
  img.plane = plane;
  img.u = u;
  img.v = v;
  img.center = volume.center() + plane.foot();
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> buf(size, size);
  sample_grid(volume, plane, size, u, v, buf.data());
  img.pixels = buf;
  return img;
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> transport_basis(const Eigen::Vector3d& u, const Eigen::Vector3d& v,
                                                            const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
  const Eigen::Vector3d a = from.normalized();
  Eigen::Vector3d b = to.normalized();
  if (a.dot(b) < 0.0) b = -b;
  const Eigen::Vector3d w = a.cross(b);
  const double c = a.dot(b);
  Eigen::Matrix3d k;
  k << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  const Eigen::Matrix3d q = Eigen::Matrix3d::Identity() + k + k * k / (1.0 + c);
  Eigen::Vector3d tu = q * u, tv = q * v;
  tu = (tu - tu.dot(b) * b).normalized();
  tv = (tv - tv.dot(b) * b - tv.dot(tu) * tu).normalized();
  return {tu, tv};
}

double ssim(const Eigen::MatrixXf& a, const Eigen::MatrixXf& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatchError("ssim: image shapes differ");
  constexpr int win = 7;
  if (a.rows() < win || a.cols() < win) throw ShapeMismatchError("ssim: image smaller than window");
  const Eigen::MatrixXd x = a.cast<double>(), y = b.cast<double>();
  double range = std::max(x.maxCoeff(), y.maxCoeff()) - std::min(x.minCoeff(), y.minCoeff());
  if (range <= 0.0) range = 1.0;
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  constexpr double n = win * win;
  constexpr double cov_norm = n / (n - 1.0);

  double total = 0.0;
  const Eigen::Index rows = x.rows() - win + 1, cols = x.cols() - win + 1;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto wx = x.block<win, win>(r, c);
      const auto wy = y.block<win, win>(r, c);
      const double mx = wx.mean(), my = wy.mean();
      const double vx = cov_norm * (wx.array().square().mean() - mx * mx);
      const double vy = cov_norm * (wy.array().square().mean() - my * my);
      const double vxy = cov_norm * ((wx.array() * wy.array()).mean() - mx * my);
      total += ((2 * mx * my + c1) * (2 * vxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return total / static_cast<double>(rows * cols);
}

double ssim(const PlaneImage& a, const PlaneImage& b) { return ssim(a.pixels, b.pixels); }

void write_volume(const Volume& volume, const std::filesystem::path& stem) {
  std::filesystem::path hdr = stem, raw = stem;
  hdr += ".hdr";
  raw += ".raw";
  {
    std::ofstream h(hdr);
    if (!h) throw IoError("cannot write " + hdr.string());
    const auto& s = volume.shape();
    h << "mplane-volume 1\n"
      << "shape " << s.x() << ' ' << s.y() << ' ' << s.z() << '\n'
      << "spacing 1\n"
      << "byte_order little\n"
      << "type float32\n"
      << "order x_fastest\n"
      << "data " << raw.filename().string() << '\n';
  }
  std::ofstream r(raw, std::ios::binary);
  if (!r) throw IoError("cannot write " + raw.string());
  if constexpr (std::endian::native == std::endian::little) {
    r.write(reinterpret_cast<const char*>(volume.data().data()),
            static_cast<std::streamsize>(volume.data().size() * sizeof(float)));
  } else {
    for (float f : volume.data()) {
      auto bits = std::bit_cast<std::uint32_t>(f);
      bits = __builtin_bswap32(bits);
      r.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  }
  if (!r) throw IoError("short write to " + raw.string());
}

Volume read_volume(const std::filesystem::path& stem) {
  std::filesystem::path hdr = stem;
  hdr += ".hdr";
  std::ifstream h(hdr);
  if (!h) throw IoError("cannot read " + hdr.string());
  std::string line, magic;
  Eigen::Vector3i shape = Eigen::Vector3i::Zero();
  std::string data_name, byte_order = "little";
  std::getline(h, magic);
  if (magic.rfind("mplane-volume", 0) != 0) throw IoError("not a volume header: " + hdr.string());
  while (std::getline(h, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "shape") ls >> shape.x() >> shape.y() >> shape.z();
    else if (key == "data") ls >> data_name;
    else if (key == "byte_order") ls >> byte_order;
    else if (key == "spacing") {
      double sp = 0;
      ls >> sp;
      if (sp != 1.0) throw IoError("only unit isotropic spacing is supported");
    }
  }
  if ((shape.array() < 1).any() || data_name.empty()) throw IoError("incomplete header " + hdr.string());
  if (byte_order != "little") throw IoError("unsupported byte order " + byte_order);
  Volume vol(shape);
  std::ifstream r(stem.parent_path() / data_name, std::ios::binary);
  if (!r) throw IoError("cannot read voxel data for " + stem.string());
  r.read(reinterpret_cast<char*>(vol.data().data()),
         static_cast<std::streamsize>(vol.data().size() * sizeof(float)));
  if (r.gcount() != static_cast<std::streamsize>(vol.data().size() * sizeof(float)))
    throw IoError("truncated voxel data for " + stem.string());
  if constexpr (std::endian::native != std::endian::little) {
    for (float& f : vol.data())
      f = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(f)));
  }
  return vol;
}

std::string format_plane(const Plane& plane) {
  std::ostringstream os;
  os << std::setprecision(17) << plane.angles.x() << ' ' << plane.angles.y() << ' '
     << plane.angles.z() << ' ' << plane.d;
  return os.str();
}

Plane parse_plane(const std::string& line) {
  std::istringstream is(line);
  Eigen::Vector4d p;
  if (!(is >> p[0] >> p[1] >> p[2] >> p[3])) throw IoError("malformed plane line: " + line);
  return plane_from_params(p);
}

}  // namespace mplane
