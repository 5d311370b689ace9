#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace mplane {

/// A plane n.(x - c) + d = 0, where c is the volume center and n a unit
/// normal with canonical sign (first non-negligible component positive).
/// `angles` are the direction angles (degrees) of the canonical normal.
struct Plane {
  Eigen::Vector3d angles = Eigen::Vector3d(0.0, 90.0, 90.0);
  Eigen::Vector3d normal = Eigen::Vector3d::UnitX();
  double d = 0.0;

  /// Point of the plane closest to the volume center, relative to the center.
  Eigen::Vector3d foot() const { return -d * normal; }
  /// Signed distance of a center-relative point to the plane.
  double signed_distance(const Eigen::Vector3d& rel) const { return normal.dot(rel) + d; }
};

/// Builds a plane from direction angles (degrees) and an offset. The cosine
/// vector is normalized and `d` is divided by the same factor.
Plane plane_from_params(double zeta, double beta, double phi, double d);
Plane plane_from_params(const Eigen::Vector4d& params);

/// Canonicalizes an arbitrary (non-zero) normal and offset.
Plane plane_from_normal(const Eigen::Vector3d& normal, double d);

/// Direction angles in degrees, acos of each component of a unit vector.
Eigen::Vector3d angles_from_normal(const Eigen::Vector3d& normal);

/// Unsigned dihedral angle in degrees, in [0, 90].
double dihedral_angle(const Plane& a, const Plane& b);

/// |d_a - d_b| of the canonical forms.
double origin_distance_diff(const Plane& a, const Plane& b);

/// Euclidean distance between (normal, d / d_norm) embeddings.
class ParamDistance {
 public:
  explicit ParamDistance(double d_norm);
  /// d_norm = half the diagonal of a volume with the given shape.
  static ParamDistance for_shape(const Eigen::Vector3i& shape);

  double operator()(const Plane& p, const Plane& g) const;
  double d_norm() const { return d_norm_; }

 private:
  double d_norm_;
};

/// Dense scalar grid, x fastest.
class Volume {
 public:
  Volume() = default;
  explicit Volume(const Eigen::Vector3i& shape, float fill = 0.0f);

  const Eigen::Vector3i& shape() const { return shape_; }
  Eigen::Vector3d center() const { return (shape_.cast<double>().array() - 1.0).matrix() * 0.5; }
  double spacing() const { return 1.0; }

  float& at(int x, int y, int z) { return data_[index(x, y, z)]; }
  float at(int x, int y, int z) const { return data_[index(x, y, z)]; }

  /// Trilinear interpolation at voxel coordinates; voxels outside read as 0.
  float sample(const Eigen::Vector3d& p) const;

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

 private:
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(shape_.x()) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(shape_.y()) * z);
  }

  Eigen::Vector3i shape_ = Eigen::Vector3i::Zero();
  std::vector<float> data_;
};

/// S x S resampled plane. Row index runs along `v`, column index along `u`.
struct PlaneImage {
  Eigen::MatrixXf pixels;
  Plane plane;
  Eigen::Vector3d u = Eigen::Vector3d::UnitY();
  Eigen::Vector3d v = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
};

/// Deterministic orthonormal in-plane basis (u, v) with v = n x u.
std::pair<Eigen::Vector3d, Eigen::Vector3d> in_plane_basis(const Eigen::Vector3d& normal);

/// Samples an S x S grid at unit spacing centered on the plane point closest
/// to the volume center.
PlaneImage slice_volume(const Volume& volume, const Plane& plane, int size);

/// Same sampling with an explicit orthonormal in-plane basis.
PlaneImage slice_volume(const Volume& volume, const Plane& plane, int size, const Eigen::Vector3d& u,
                        const Eigen::Vector3d& v);

/// Same sampling written into a caller-provided row-major buffer of size*size.
void slice_into(const Volume& volume, const Plane& plane, int size, float* out);

/// Carries the basis (u, v) of a plane with normal `from` onto a plane with
/// normal `to` by the smallest rotation between the two unsigned normals.
std::pair<Eigen::Vector3d, Eigen::Vector3d> transport_basis(const Eigen::Vector3d& u, const Eigen::Vector3d& v,
                                                            const Eigen::Vector3d& from, const Eigen::Vector3d& to);

/// Mean SSIM over 7x7 uniform windows (valid region), K1 = 0.01, K2 = 0.03.
double ssim(const Eigen::MatrixXf& a, const Eigen::MatrixXf& b);
double ssim(const PlaneImage& a, const PlaneImage& b);

// I/O. A volume is a text header `<stem>.hdr` plus little-endian float32
// voxels `<stem>.raw` in x-fastest order.
void write_volume(const Volume& volume, const std::filesystem::path& stem);
Volume read_volume(const std::filesystem::path& stem);

/// "zeta beta phi d" with round-trip precision.
std::string format_plane(const Plane& plane);
Plane parse_plane(const std::string& line);

}  // namespace mplane
