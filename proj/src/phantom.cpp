#include "mplane/phantom.hpp"

#include "mplane/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace mplane {

namespace {

constexpr std::array<double, 3> kSemiAxes = {20.0, 16.0, 13.0};
constexpr std::array<double, 3> kLandmarkReach = {12.0, 10.0, 8.0};
constexpr std::array<double, 3> kRingWavelength = {5.0, 7.0, 9.0};
constexpr double kRampWidth = 8.0;
constexpr double kRampAmplitude = 0.12;
constexpr double kSheetAmplitude = 0.30;
constexpr double kSheetSigma = 1.2;
constexpr double kBlobAmplitude = 0.6;
constexpr double kBlobSigma = 1.8;
constexpr double kBackground = 0.04;
constexpr double kTissue = 0.30;

/// Orthonormal frame whose columns have no component near +/-1 and an x
/// component bounded away from 0.
Eigen::Matrix3d base_frame() {
  const double a = 1.0 / std::sqrt(3.0), b = 1.0 / std::sqrt(2.0), c = 1.0 / std::sqrt(6.0);
  Eigen::Matrix3d f;
  f.col(0) << a, b, c;
  f.col(1) << a, -b, c;
  f.col(2) << a, 0.0, -2.0 * c;
  return f;
}

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(g(rng), g(rng), g(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

struct CanonicalLayout {
  Eigen::Matrix3d normals;           // columns, canonical frame
  Eigen::Vector3d offsets;           // d per plane, canonical frame
  std::array<Eigen::Vector3d, 4> landmarks;  // center-relative
};

CanonicalLayout layout(const Eigen::Matrix3d& normals, const Eigen::Vector3d& offsets) {
  CanonicalLayout out{normals, offsets, {}};
  const Eigen::Vector3d l0 = normals.transpose().partialPivLu().solve(-offsets);
  out.landmarks[0] = l0;
  for (int k = 0; k < 3; ++k) {
    const int i = (k + 1) % 3, j = (k + 2) % 3;
    Eigen::Vector3d dir = normals.col(std::min(i, j)).cross(normals.col(std::max(i, j))).normalized();
    if (dir.dot(base_frame().col(k)) < 0) dir = -dir;
    out.landmarks[k + 1] = l0 + kLandmarkReach[k] * dir;
  }
  return out;
}

double canonical_intensity(const CanonicalLayout& lay, const Eigen::Matrix3d& frame,
                           const Eigen::Vector3d& y) {
  double q = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double t = frame.col(k).dot(y) / kSemiAxes[k];
    q += t * t;
  }
  const double r = std::sqrt(q);
  const double organ = 1.0 / (1.0 + std::exp((r - 1.0) * kSemiAxes[2] / 1.5));

  double inside = kTissue;
  const Eigen::Vector3d& l0 = lay.landmarks[0];
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d n = lay.normals.col(k);
    const double s = n.dot(y) + lay.offsets[k];
    inside += kRampAmplitude * std::clamp(s / kRampWidth, -1.0, 1.0);
    if (std::abs(s) < 6.0 * kSheetSigma) {
      const double rho = ((y - l0) - s * n).norm();
      const double ring = 0.6 + 0.4 * std::cos(2.0 * std::numbers::pi * rho / kRingWavelength[k]);
      inside += kSheetAmplitude * std::exp(-s * s / (2.0 * kSheetSigma * kSheetSigma)) * ring;
    }
  }
  double blobs = 0.0;
  for (const auto& l : lay.landmarks) {
    const double r2 = (y - l).squaredNorm();
    if (r2 < 36.0 * kBlobSigma * kBlobSigma)
      blobs += kBlobAmplitude * std::exp(-r2 / (2.0 * kBlobSigma * kBlobSigma));
  }
  return kBackground + organ * (inside - kBackground) + blobs;
}

}  // namespace

void PhantomConfig::validate() const {
  if (shape < 48) throw InvalidConfigError("phantom shape must be >= 48");
  if (!(noise >= 0.0)) throw InvalidConfigError("noise level must be >= 0");
  if (!(angle_spread >= 0.0 && angle_spread < 45.0))
    throw InvalidConfigError("angle spread must be in [0, 45)");
  if (!(max_rotation >= 0.0 && max_rotation <= 90.0))
    throw InvalidConfigError("max rotation must be in [0, 90]");
  if (!(max_translation >= 0.0)) throw InvalidConfigError("max translation must be >= 0");
  if (!(offset_range >= 0.0)) throw InvalidConfigError("offset range must be >= 0");
  if (!(landmark_jitter >= 0.0)) throw InvalidConfigError("landmark jitter must be >= 0");
  if (!(min_normal_x >= 0.0 && min_normal_x < 0.55))
    throw InvalidConfigError("min_normal_x must be in [0, 0.55)");
}

std::string PhantomConfig::describe() const {
  std::ostringstream os;
  os << std::setprecision(17) << "shape " << shape << "\nangle_spread " << angle_spread
     << "\nnoise " << noise << "\nmax_rotation " << max_rotation << "\nmax_translation "
     << max_translation << "\noffset_range " << offset_range << "\nlandmark_jitter "
     << landmark_jitter << "\nmin_normal_x " << min_normal_x << '\n';
  return os.str();
}

std::vector<int> PhantomCase::plane_landmarks(int k) {
  std::vector<int> out{0};
  for (int l = 1; l <= 3; ++l)
    if (l != k + 1) out.push_back(l);
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::compose(const RigidTransform& inner) const {
  RigidTransform out;
  out.rotation = rotation * inner.rotation;
  out.translation = rotation * inner.translation + translation;
  return out;
}

Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double degrees) {
  return Eigen::AngleAxisd(degrees * std::numbers::pi / 180.0, axis.normalized()).toRotationMatrix();
}

std::vector<Landmark> atlas_landmarks(const PhantomConfig& cfg) {
  const Eigen::Vector3d center = Eigen::Vector3d::Constant(0.5 * (cfg.shape - 1));
  const CanonicalLayout lay = layout(base_frame(), Eigen::Vector3d::Zero());
  std::vector<Landmark> out;
  for (int l = 0; l < 4; ++l) out.push_back({l, center + lay.landmarks[l]});
  return out;
}

PhantomCase generate_phantom(std::uint64_t seed, const PhantomConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Eigen::Matrix3d frame = base_frame();
  Eigen::Matrix3d normals;
  Eigen::Vector3d offsets;
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d n = frame.col(k);
    Eigen::Vector3d axis = random_unit(rng);
    axis = (axis - axis.dot(n) * n);
    if (axis.norm() < 1e-6) axis = n.unitOrthogonal();
    const double tilt = unit(rng) * 0.5 * cfg.angle_spread;
    normals.col(k) = axis_angle(axis, tilt) * n;
    offsets[k] = (2.0 * unit(rng) - 1.0) * cfg.offset_range;
  }
  const CanonicalLayout lay = layout(normals, offsets);

  const Eigen::Vector3i shape = Eigen::Vector3i::Constant(cfg.shape);
  const Eigen::Vector3d center = Eigen::Vector3d::Constant(0.5 * (cfg.shape - 1));

  // Rigid pose about the volume center, rejected until every posed normal
  // keeps a clear x component.
  Eigen::Matrix3d rot;
  Eigen::Vector3d shift;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 1000) throw InvalidConfigError("no admissible pose found; relax min_normal_x");
    rot = axis_angle(random_unit(rng), unit(rng) * cfg.max_rotation);
    do {
      shift = Eigen::Vector3d(2 * unit(rng) - 1, 2 * unit(rng) - 1, 2 * unit(rng) - 1);
    } while (shift.norm() > 1.0);
    shift *= cfg.max_translation;
    const Eigen::Matrix3d posed = rot * normals;
    if ((posed.row(0).array().abs() >= cfg.min_normal_x).all()) break;
  }
  RigidTransform pose;
  pose.rotation = rot;
  pose.translation = center + shift - rot * center;

  PhantomCase out;
  out.seed = seed;
  out.config = cfg;
  for (int k = 0; k < 3; ++k)
    out.gt_planes[k] = apply_transform(plane_from_normal(normals.col(k), offsets[k]), pose, center);
  for (int l = 0; l < 4; ++l) out.landmarks.push_back({l, pose(center + lay.landmarks[l])});

  out.volume = Volume(shape);
  std::mt19937_64 speckle_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> speckle(0.0, 1.0);
  const Eigen::Matrix3d rot_t = rot.transpose();
  for (int z = 0; z < shape.z(); ++z)
    for (int y = 0; y < shape.y(); ++y)
      for (int x = 0; x < shape.x(); ++x) {
        const Eigen::Vector3d rel = rot_t * (Eigen::Vector3d(x, y, z) - center - shift);
        double v = canonical_intensity(lay, frame, rel);
        if (cfg.noise > 0.0) v *= std::max(0.0, 1.0 + cfg.noise * speckle(speckle_rng));
        out.volume.at(x, y, z) = static_cast<float>(v);
      }
  return out;
}

std::vector<Landmark> observed_landmarks(const PhantomCase& c) {
  std::mt19937_64 rng(c.seed ^ 0x5851f42d4c957f2dULL);
  std::normal_distribution<double> g(0.0, c.config.landmark_jitter);
  std::vector<Landmark> out = c.landmarks;
  if (c.config.landmark_jitter > 0.0)
    for (auto& l : out) l.position += Eigen::Vector3d(g(rng), g(rng), g(rng));
  return out;
}

RigidTransform align_landmarks(const std::vector<Landmark>& src, const std::vector<Landmark>& atlas) {
  std::map<int, Eigen::Vector3d> by_label;
  for (const auto& a : atlas) by_label[a.label] = a.position;
  std::vector<Eigen::Vector3d> ps, qs;
  for (const auto& s : src) {
    auto it = by_label.find(s.label);
    if (it == by_label.end()) continue;
    ps.push_back(s.position);
    qs.push_back(it->second);
  }
  if (ps.size() < 3) throw DegenerateError("alignment needs at least 3 labeled correspondences");

  const auto n = static_cast<Eigen::Index>(ps.size());
  Eigen::Matrix3Xd p(3, n), q(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    p.col(i) = ps[i];
    q.col(i) = qs[i];
  }
  const Eigen::Vector3d pc = p.rowwise().mean(), qc = q.rowwise().mean();
  p.colwise() -= pc;
  q.colwise() -= qc;

  Eigen::JacobiSVD<Eigen::Matrix3Xd> shape_svd(p);
  if (shape_svd.singularValues()[1] < 1e-9) throw DegenerateError("landmarks are collinear");

  const Eigen::Matrix3d h = p * q.transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
  fix(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = svd.matrixV() * fix * svd.matrixU().transpose();
  t.translation = qc - t.rotation * pc;
  return t;
}

double landmark_rmsd(const std::vector<Landmark>& a, const std::vector<Landmark>& b) {
  std::map<int, Eigen::Vector3d> by_label;
  for (const auto& l : b) by_label[l.label] = l.position;
  double sum = 0.0;
  int count = 0;
  for (const auto& l : a) {
    auto it = by_label.find(l.label);
    if (it == by_label.end()) continue;
    sum += (l.position - it->second).squaredNorm();
    ++count;
  }
  if (count == 0) throw DegenerateError("no matching landmark labels");
  return std::sqrt(sum / count);
}

Plane apply_transform(const Plane& p, const RigidTransform& t, const Eigen::Vector3d& center) {
  const Eigen::Vector3d n = t.rotation * p.normal;
  const double d = p.d + n.dot(center - t.translation - t.rotation * center);
  return plane_from_normal(n, d);
}

std::vector<Landmark> apply_transform(const std::vector<Landmark>& pts, const RigidTransform& t) {
  std::vector<Landmark> out = pts;
  for (auto& l : out) l.position = t(l.position);
  return out;
}

Volume apply_transform(const Volume& v, const RigidTransform& t) {
  Volume out(v.shape());
  const RigidTransform inv = t.inverse();
  const auto& s = v.shape();
  for (int z = 0; z < s.z(); ++z)
    for (int y = 0; y < s.y(); ++y)
      for (int x = 0; x < s.x(); ++x) out.at(x, y, z) = v.sample(inv(Eigen::Vector3d(x, y, z)));
  return out;
}

void write_case(const PhantomCase& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_volume(c.volume, dir / "volume");
  {
    std::ofstream f(dir / "planes.txt");
    for (const auto& p : c.gt_planes) f << format_plane(p) << '\n';
    if (!f) throw IoError("cannot write planes for " + dir.string());
  }
  {
    std::ofstream f(dir / "landmarks.txt");
    f << std::setprecision(17);
    for (const auto& l : c.landmarks)
      f << l.label << ' ' << l.position.x() << ' ' << l.position.y() << ' ' << l.position.z() << '\n';
    if (!f) throw IoError("cannot write landmarks for " + dir.string());
  }
  std::ofstream f(dir / "meta.txt");
  f << "seed " << c.seed << '\n' << c.config.describe();
  if (!f) throw IoError("cannot write meta for " + dir.string());
}

PhantomCase read_case(const std::filesystem::path& dir) {
  PhantomCase c;
  c.name = dir.filename().string();
  c.volume = read_volume(dir / "volume");
  std::ifstream pf(dir / "planes.txt");
  if (!pf) throw IoError("missing planes.txt in " + dir.string());
  std::string line;
  for (int k = 0; k < 3; ++k) {
    if (!std::getline(pf, line)) throw IoError("expected three planes in " + dir.string());
    c.gt_planes[k] = parse_plane(line);
  }
  std::ifstream lf(dir / "landmarks.txt");
  if (!lf) throw IoError("missing landmarks.txt in " + dir.string());
  Landmark l;
  while (lf >> l.label >> l.position.x() >> l.position.y() >> l.position.z()) c.landmarks.push_back(l);
  std::ifstream mf(dir / "meta.txt");
  if (!mf) throw IoError("missing meta.txt in " + dir.string());
  std::string key;
  while (mf >> key) {
    if (key == "seed") mf >> c.seed;
    else if (key == "shape") mf >> c.config.shape;
    else if (key == "angle_spread") mf >> c.config.angle_spread;
    else if (key == "noise") mf >> c.config.noise;
    else if (key == "max_rotation") mf >> c.config.max_rotation;
    else if (key == "max_translation") mf >> c.config.max_translation;
    else if (key == "offset_range") mf >> c.config.offset_range;
    else if (key == "landmark_jitter") mf >> c.config.landmark_jitter;
    else if (key == "min_normal_x") mf >> c.config.min_normal_x;
    else throw IoError("unknown meta key '" + key + "' in " + dir.string());
  }
  return c;
}

std::vector<std::filesystem::path> list_cases(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw MissingPrerequisiteError("no dataset at " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_directory() && std::filesystem::exists(e.path() / "planes.txt")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<PhantomCase> read_dataset(const std::filesystem::path& dir) {
  std::vector<PhantomCase> out;
  for (const auto& p : list_cases(dir)) out.push_back(read_case(p));
  return out;
}

}  // namespace mplane
