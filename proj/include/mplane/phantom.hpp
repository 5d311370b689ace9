#pragma once

#include "mplane/geometry.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mplane {

struct PhantomConfig {
  int shape = 64;
  double angle_spread = 12.0;     ///< pairwise gt dihedral angles lie in 90 +/- spread
  double noise = 0.1;             ///< multiplicative speckle standard deviation
  double max_rotation = 30.0;     ///< degrees
  double max_translation = 8.0;   ///< voxels
  double offset_range = 3.0;      ///< canonical plane offsets, voxels
  double landmark_jitter = 0.5;   ///< sigma of observed-landmark noise, voxels
  double min_normal_x = 0.3;      ///< pose rejection bound keeping the canonical sign stable

  void validate() const;
  std::string describe() const;
};

struct Landmark {
  int label = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  ///< voxel coordinates
};

/// One synthetic volume with three planted planes and four landmarks.
/// Landmark 0 lies on all planes; landmark k (1..3) lies on the two planes
/// other than plane k.
struct PhantomCase {
  Volume volume;
  std::array<Plane, 3> gt_planes;
  std::vector<Landmark> landmarks;
  std::uint64_t seed = 0;
  PhantomConfig config;
  std::string name;

  /// Indices into `landmarks` designated to plane k.
  static std::vector<int> plane_landmarks(int k);
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d operator()(const Eigen::Vector3d& x) const { return rotation * x + translation; }
  RigidTransform inverse() const;
  RigidTransform compose(const RigidTransform& inner) const;  ///< this o inner
};

PhantomCase generate_phantom(std::uint64_t seed, const PhantomConfig& cfg = {});

/// Landmarks of the canonical unperturbed phantom for a given config.
std::vector<Landmark> atlas_landmarks(const PhantomConfig& cfg = {});

/// Landmarks with annotation noise of the configured sigma, deterministic in the seed.
std::vector<Landmark> observed_landmarks(const PhantomCase& c);

/// Least-squares rigid transform mapping src onto atlas (matched by label).
RigidTransform align_landmarks(const std::vector<Landmark>& src, const std::vector<Landmark>& atlas);

double landmark_rmsd(const std::vector<Landmark>& a, const std::vector<Landmark>& b);

/// Transforms are expressed in voxel coordinates: x' = R x + t.
Plane apply_transform(const Plane& p, const RigidTransform& t, const Eigen::Vector3d& center);
std::vector<Landmark> apply_transform(const std::vector<Landmark>& pts, const RigidTransform& t);
Volume apply_transform(const Volume& v, const RigidTransform& t);

/// Rotation about a unit axis by an angle in degrees.
Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double degrees);

// Dataset layout: <dir>/case_NNNN/{volume.hdr, volume.raw, planes.txt, landmarks.txt, meta.txt}
void write_case(const PhantomCase& c, const std::filesystem::path& dir);
PhantomCase read_case(const std::filesystem::path& dir);
std::vector<PhantomCase> read_dataset(const std::filesystem::path& dir);
std::vector<std::filesystem::path> list_cases(const std::filesystem::path& dir);

}  // namespace mplane
