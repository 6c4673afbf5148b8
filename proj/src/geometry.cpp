#include "shapecon/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "shapecon/error.hpp"

namespace shapecon {

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

PointCloud::PointCloud(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) throw Error("empty cloud");
  for (const auto& p : points_) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      throw Error("non-finite coordinate in cloud");
    }
  }
}

PointCloud PointCloud::gather(std::span<const std::size_t> indices) const {
  std::vector<Vec3> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(points_.at(i));
  return PointCloud(std::move(out));
}

Vec3 centroid(const PointCloud& cloud) {
  Vec3 c{0.0, 0.0, 0.0};
  for (const auto& p : cloud.points()) c = c + p;
  return (1.0 / static_cast<double>(cloud.size())) * c;
}

PointCloud normalize_bounding_sphere(const PointCloud& cloud) {
  if (cloud.empty()) throw Error("empty cloud");
  const Vec3 c = centroid(cloud);
  double radius = 0.0;
  double scale = 0.0;
  for (const auto& p : cloud.points()) {
    radius = std::max(radius, norm(p - c));
    scale = std::max({scale, std::abs(p[0]), std::abs(p[1]), std::abs(p[2])});
  }
  // The centroid of identical points can be off by a few ulps.
  if (radius <= 1e-12 * std::max(1.0, scale)) throw Error("zero-radius cloud");
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  const double inv = 1.0 / radius;
  for (const auto& p : cloud.points()) out.push_back(inv * (p - c));
  return PointCloud(std::move(out));
}

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (n == 0.0) throw Error("cannot normalize zero quaternion");
  return {w / n, x / n, y / n, z / n};
}

std::array<double, 9> Quaternion::rotation_matrix() const {
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double angle) {
  const double n = shapecon::norm(axis);
  if (n == 0.0) throw Error("zero rotation axis");
  const double s = std::sin(angle / 2) / n;
  return Quaternion{std::cos(angle / 2), axis[0] * s, axis[1] * s, axis[2] * s}.normalized();
}

Quaternion operator*(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Quaternion random_unit_quaternion(Rng& rng) {
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  const double u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2;
  const double t3 = 2.0 * std::numbers::pi * u3;
  return Quaternion{b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3)}.normalized();
}

namespace {

void check_unit(const Quaternion& q) {
  if (std::abs(q.norm() - 1.0) > 1e-9) throw Error("rotation quaternion is not unit norm");
}

Vec3 mat_vec(const std::array<double, 9>& r, const Vec3& p) {
  return {r[0] * p[0] + r[1] * p[1] + r[2] * p[2], r[3] * p[0] + r[4] * p[1] + r[5] * p[2],
          r[6] * p[0] + r[7] * p[1] + r[8] * p[2]};
}

}  // namespace

Vec3 rotate(const Vec3& p, const Quaternion& q) {
  check_unit(q);
  return mat_vec(q.rotation_matrix(), p);
}

PointCloud rotate(const PointCloud& cloud, const Quaternion& q) {
  check_unit(q);
  const auto r = q.rotation_matrix();
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud.points()) out.push_back(mat_vec(r, p));
  return PointCloud(std::move(out));
}

const char* to_string(Metric metric) {
  switch (metric) {
    case Metric::euclidean: return "euclidean";
    case Metric::cosine: return "cosine";
    case Metric::chebyshev: return "chebyshev";
  }
  return "?";
}

Metric parse_metric(const std::string& name) {
  if (name == "euclidean") return Metric::euclidean;
  if (name == "cosine") return Metric::cosine;
  if (name == "chebyshev") return Metric::chebyshev;
  throw Error("unknown metric '" + name + "'");
}

double distance(Metric metric, const Vec3& p, const Vec3& q) {
  switch (metric) {
    case Metric::euclidean:
      return norm(p - q);
    case Metric::chebyshev:
      return std::max({std::abs(p[0] - q[0]), std::abs(p[1] - q[1]), std::abs(p[2] - q[2])});
    case Metric::cosine: {
      const double np = norm(p);
      const double nq = norm(q);
      if (np == 0.0 || nq == 0.0) throw Error("cosine distance of a zero vector");
      // Rounding can push the ratio a hair past +-1.
      return std::max(0.0, 1.0 - dot(p, q) / (np * nq));
    }
  }
  throw Error("unknown metric");
}

std::vector<double> distance_matrix(const PointCloud& cloud) {
  const std::size_t n = cloud.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      d[i * n + j] = d[j * n + i] = norm(cloud[i] - cloud[j]);
    }
  }
  return d;
}

}  // namespace shapecon
