#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "shapecon/geometry.hpp"
#include "shapecon/rng.hpp"

namespace shapecon {

enum class ChunkMethod { euclidean, cosine, chebyshev, axis_chop };

struct ChunkSpec {
  ChunkMethod method = ChunkMethod::cosine;
  std::size_t chunk_size = 512;  // metric chunks only
  std::size_t min_points = 32;   // axis_chop retry floor, >= 8
};

namespace view {

struct RotateSO3 {};
struct RotateZ {};
struct Translate {
  std::array<double, 3> lo{-0.2, -0.2, -0.2};
  std::array<double, 3> hi{0.2, 0.2, 0.2};
};
struct ScaleUniform {
  double lo = 0.5, hi = 1.5;
};
struct ScalePerAxis {
  double lo = 0.5, hi = 1.5;
};
struct Chunk {
  ChunkSpec spec;
};

}  // namespace view

using ViewPrimitive =
    std::variant<view::RotateSO3, view::RotateZ, view::Translate, view::ScaleUniform, view::ScalePerAxis, view::Chunk>;

// Ordered recipe for the second view of a shape.
struct ViewSpec {
  std::vector<ViewPrimitive> steps;

  // Throws Error on an empty list, inverted ranges or a bad chunk spec.
  void validate() const;
  bool contains_so3_rotation() const;

  // Accepts a preset name (aligned-clustering, aligned-transfer, unaligned)
  // or a ';'-separated list such as "rotate_so3; translate(-0.2, 0.2)".
  static ViewSpec parse(const std::string& text);
  std::string to_string() const;

  static ViewSpec preset(const std::string& name);
};

// Indices of the m points nearest to cloud[center] under the metric, ties by
// lower index, returned in ascending index order. For cosine a zero-norm
// point is treated as orthogonal to the center (distance 1).
std::vector<std::size_t> nearest_subset(const PointCloud& cloud, Metric metric, std::size_t center, std::size_t m);

// Random center + nearest_subset + bounding-sphere normalization.
PointCloud extract_chunk_metric(const PointCloud& cloud, Metric metric, std::size_t m, Rng& rng);

struct AxisCut {
  int axis = 0;         // 0=x, 1=y, 2=z
  double value = 0.0;   // cut position
  bool keep_upper = false;  // upper keeps coord >= value, lower keeps coord < value
};

// Points on the chosen side of the cut, ascending index order.
std::vector<std::size_t> axis_side(const PointCloud& cloud, const AxisCut& cut);

// Linearly interpolated percentile (q in [0,1]) of one coordinate.
double axis_percentile(const PointCloud& cloud, int axis, double q);

// Draws (axis, cut, side) with the cut uniform between the 25th and 75th
// percentile; accepts when the side keeps at least min_points and strictly
// fewer than all points. Up to 16 redraws after the first attempt, then
// falls back to the whole cloud. Output is renormalized.
PointCloud extract_chunk_axis(const PointCloud& cloud, std::size_t min_points, Rng& rng);

// Same as above but also reports the accepted cut (nullopt on fallback).
PointCloud extract_chunk_axis(const PointCloud& cloud, std::size_t min_points, Rng& rng,
                              std::optional<AxisCut>* accepted);

PointCloud apply_chunk(const ChunkSpec& spec, const PointCloud& cloud, Rng& rng);

// Applies every primitive of the recipe in order with fresh randomness.
PointCloud apply_view(const ViewSpec& spec, const PointCloud& cloud, Rng& rng);

// Fixed-size resampling. n >= target: distinct points, random order.
// n < target: every point once plus uniform draws with replacement, shuffled.
PointCloud resample_to(const PointCloud& cloud, std::size_t target, Rng& rng);

const char* to_string(ChunkMethod method);

}  // namespace shapecon
