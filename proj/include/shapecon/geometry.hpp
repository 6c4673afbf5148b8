#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "shapecon/rng.hpp"

namespace shapecon {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a);

// An ordered, nonempty set of finite 3D points in model coordinates.
class PointCloud {
 public:
  PointCloud() = default;
  // Throws Error("empty cloud") for no points and on any non-finite coordinate.
  explicit PointCloud(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vec3& operator[](std::size_t i) const { return points_[i]; }
  std::span<const Vec3> points() const { return points_; }

  // Cloud made of the listed points, in the listed order.
  PointCloud gather(std::span<const std::size_t> indices) const;

  bool operator==(const PointCloud&) const = default;

 private:
  std::vector<Vec3> points_;
};

Vec3 centroid(const PointCloud& cloud);

// Recenters at the centroid and scales so the farthest point has norm 1.
// Throws Error("zero-radius cloud") when every point sits on the centroid.
PointCloud normalize_bounding_sphere(const PointCloud& cloud);

struct Quaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  double norm() const;
  Quaternion normalized() const;
  Quaternion conjugate() const { return {w, -x, -y, -z}; }
  // Row-major 3x3 rotation matrix; assumes unit norm.
  std::array<double, 9> rotation_matrix() const;

  static Quaternion from_axis_angle(const Vec3& axis, double angle);
};

Quaternion operator*(const Quaternion& a, const Quaternion& b);

// Uniform sample over SO(3) (Shoemake's subgroup algorithm).
Quaternion random_unit_quaternion(Rng& rng);

// Throws Error when q is not unit norm within 1e-9.
PointCloud rotate(const PointCloud& cloud, const Quaternion& q);
Vec3 rotate(const Vec3& p, const Quaternion& q);

enum class Metric { euclidean, cosine, chebyshev };

const char* to_string(Metric metric);
Metric parse_metric(const std::string& name);

// euclidean = |p-q|, chebyshev = max_axis |p-q|, cosine = 1 - p.q/(|p||q|).
// Cosine throws Error for a zero vector.
double distance(Metric metric, const Vec3& p, const Vec3& q);

// Dense n x n euclidean distance matrix, row-major.
std::vector<double> distance_matrix(const PointCloud& cloud);

}  // namespace shapecon
