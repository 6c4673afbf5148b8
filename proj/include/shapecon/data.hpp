#pragma once

#include <array>
#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "shapecon/geometry.hpp"
#include "shapecon/rng.hpp"

namespace shapecon {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::size_t, 3>> faces;

  bool operator==(const TriangleMesh&) const = default;
};

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

// OFF reader. Accepts an optional "OFF" keyword line (also fused with the
// counts, as in "OFF8 6 0"), '#' comments and blank lines. Polygons with more
// than three vertices are fan-triangulated; zero-area triangles are dropped.
// Errors are ParseError with the offending line number.
TriangleMesh parse_off(std::istream& in);
TriangleMesh load_off(const std::string& path);
void write_off(const std::string& path, const TriangleMesh& mesh);

struct SurfaceSample {
  std::vector<Vec3> points;         // before normalization
  std::vector<std::size_t> faces;   // source face per point
};

// Area-weighted face choice, uniform barycentric placement.
SurfaceSample sample_surface_raw(const TriangleMesh& mesh, std::size_t n_points, Rng& rng);
// sample_surface_raw followed by bounding-sphere normalization.
PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n_points, Rng& rng);

// Point files: text with one "x y z" per line, or binary with the header
// line "i3dp <version> <n>" followed by n little-endian float64 triples.
PointCloud load_points(const std::string& path);
PointCloud parse_points(const std::string& bytes);
void write_points_text(const std::string& path, const PointCloud& cloud);
void write_points_binary(const std::string& path, const PointCloud& cloud);
std::string encode_points_binary(const PointCloud& cloud);

enum class Split { train, test };
const char* to_string(Split split);

struct Instance {
  std::string name;
  PointCloud cloud;
  std::optional<int> label;
  Split split = Split::train;
};

struct Dataset {
  std::vector<Instance> instances;

  std::size_t size() const { return instances.size(); }
  // Throws on duplicate names or mixed point counts.
  void validate() const;
  Dataset subset(Split split) const;
  std::vector<int> labels() const;  // -1 where unlabeled
};

enum class ShapeClass { sphere, cube, cylinder, cone, torus };
const char* to_string(ShapeClass c);
ShapeClass parse_shape_class(const std::string& name);

struct SynthSpec {
  std::vector<ShapeClass> classes{ShapeClass::sphere, ShapeClass::cube, ShapeClass::cylinder, ShapeClass::cone,
                                  ShapeClass::torus};
  std::size_t per_class = 40;
  std::size_t per_class_test = 0;
  std::size_t n_points = 2048;
  double jitter = 0.4;       // per-axis scale factor drawn from [1 - jitter, 1 + jitter]
  double noise_sigma = 0.01;
  bool aligned = true;       // false: one fixed random SO(3) rotation per instance
};

// Analytic surface sampling of each class, then per-axis scale jitter,
// coordinate noise, the optional fixed rotation and normalization. Every
// instance draws from its own stream derived from one value of `rng`, so the
// result is a deterministic function of (spec, rng state).
Dataset synth_dataset(const SynthSpec& spec, Rng& rng);

// Uniform sample of the unit-scale analytic surface of one class.
std::vector<Vec3> sample_shape(ShapeClass c, std::size_t n_points, Rng& rng);

// Directory layout: <dir>/manifest.csv ("id,label,split") plus <dir>/<id>.i3dp.
void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& dir);

// "id,label" CSV.
std::vector<std::pair<std::string, int>> read_labels_csv(const std::string& path);
void write_labels_csv(const std::string& path, const std::vector<std::pair<std::string, int>>& rows);

}  // namespace shapecon
