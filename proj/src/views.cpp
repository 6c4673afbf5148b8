#include "shapecon/views.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

#include "shapecon/error.hpp"
#include "shapecon/strings.hpp"

namespace shapecon {

const char* to_string(ChunkMethod method) {
  switch (method) {
    case ChunkMethod::euclidean: return "euclidean";
    case ChunkMethod::cosine: return "cosine";
    case ChunkMethod::chebyshev: return "chebyshev";
    case ChunkMethod::axis_chop: return "axis_chop";
  }
  return "?";
}

namespace {

ChunkMethod parse_chunk_method(const std::string& name) {
  if (name == "axis_chop") return ChunkMethod::axis_chop;
  if (name == "euclidean") return ChunkMethod::euclidean;
  if (name == "cosine") return ChunkMethod::cosine;
  if (name == "chebyshev") return ChunkMethod::chebyshev;
  throw Error("unknown chunk method '" + name + "'");
}

Metric chunk_metric(ChunkMethod method) {
  switch (method) {
    case ChunkMethod::euclidean: return Metric::euclidean;
    case ChunkMethod::cosine: return Metric::cosine;
    case ChunkMethod::chebyshev: return Metric::chebyshev;
    case ChunkMethod::axis_chop: break;
  }
  throw Error("axis_chop has no metric");
}

void check_range(double lo, double hi, const char* what) {
  if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw Error(std::string(what) + ": range requires lo <= hi");
  }
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::vector<double> parse_args(const std::string& text, const std::string& name) {
  std::vector<double> out;
  for (const auto& tok : split(text, ',')) out.push_back(parse_double(trim(tok), name));
  return out;
}

}  // namespace

void ViewSpec::validate() const {
  if (steps.empty()) throw Error("view spec is empty");
  for (const auto& step : steps) {
    std::visit(Overloaded{
                   [](const view::RotateSO3&) {},
                   [](const view::RotateZ&) {},
                   [](const view::Translate& t) {
                     for (int a = 0; a < 3; ++a) check_range(t.lo[a], t.hi[a], "translate");
                   },
                   [](const view::ScaleUniform& s) {
                     check_range(s.lo, s.hi, "scale_uniform");
                     if (s.lo <= 0.0) throw Error("scale_uniform: factors must be positive");
                   },
                   [](const view::ScalePerAxis& s) {
                     check_range(s.lo, s.hi, "scale_per_axis");
                     if (s.lo <= 0.0) throw Error("scale_per_axis: factors must be positive");
                   },
                   [](const view::Chunk& c) {
                     if (c.spec.min_points < 8) throw Error("chunk: min_points must be >= 8");
                     if (c.spec.method != ChunkMethod::axis_chop && c.spec.chunk_size == 0) {
                       throw Error("chunk: chunk_size must be positive");
                     }
                   },
               },
               step);
  }
}

bool ViewSpec::contains_so3_rotation() const {
  return std::any_of(steps.begin(), steps.end(),
                     [](const ViewPrimitive& s) { return std::holds_alternative<view::RotateSO3>(s); });
}

ViewSpec ViewSpec::preset(const std::string& name) {
  if (name == "aligned-clustering") {
    return {{view::Chunk{{ChunkMethod::cosine, 512, 32}}}};
  }
  if (name == "aligned-transfer") {
    return {{view::Chunk{{ChunkMethod::axis_chop, 512, 32}}}};
  }
  if (name == "unaligned") {
    return {{view::RotateSO3{}, view::Translate{}}};
  }
  throw Error("unknown view preset '" + name + "'");
}

ViewSpec ViewSpec::parse(const std::string& text) {
  const std::string body = trim(text);
  if (body.find('(') == std::string::npos && body.find(';') == std::string::npos) {
    if (body == "aligned-clustering" || body == "aligned-transfer" || body == "unaligned") return preset(body);
  }
  ViewSpec spec;
  for (const auto& raw : split(body, ';')) {
    const std::string item = trim(raw);
    if (item.empty()) continue;
    std::string name = item;
    std::string args;
    if (const auto open = item.find('('); open != std::string::npos) {
      if (item.back() != ')') throw Error("view primitive '" + item + "': missing ')'");
      name = trim(item.substr(0, open));
      args = item.substr(open + 1, item.size() - open - 2);
    }
    if (name == "rotate_so3") {
      spec.steps.emplace_back(view::RotateSO3{});
    } else if (name == "rotate_z") {
      spec.steps.emplace_back(view::RotateZ{});
    } else if (name == "translate") {
      view::Translate t;
      if (!trim(args).empty()) {
        const auto v = parse_args(args, "translate");
        if (v.size() == 2) {
          t.lo = {v[0], v[0], v[0]};
          t.hi = {v[1], v[1], v[1]};
        } else if (v.size() == 6) {
          t.lo = {v[0], v[2], v[4]};
          t.hi = {v[1], v[3], v[5]};
        } else {
          throw Error("translate takes (lo, hi) or six per-axis bounds");
        }
      }
      spec.steps.emplace_back(t);
    } else if (name == "scale_uniform" || name == "scale_per_axis") {
      double lo = 0.5, hi = 1.5;
      if (!trim(args).empty()) {
        const auto v = parse_args(args, name);
        if (v.size() != 2) throw Error(name + " takes (lo, hi)");
        lo = v[0];
        hi = v[1];
      }
      if (name == "scale_uniform") {
        spec.steps.emplace_back(view::ScaleUniform{lo, hi});
      } else {
        spec.steps.emplace_back(view::ScalePerAxis{lo, hi});
      }
    } else if (name == "chunk") {
      const auto parts = split(args, ',');
      if (parts.empty() || trim(parts[0]).empty()) throw Error("chunk requires a method");
      ChunkSpec c;
      c.method = parse_chunk_method(trim(parts[0]));
      if (c.method == ChunkMethod::axis_chop) {
        if (parts.size() > 2) throw Error("chunk(axis_chop[, min_points])");
        if (parts.size() == 2) c.min_points = parse_size(trim(parts[1]), "chunk min_points");
      } else {
        if (parts.size() > 3) throw Error("chunk(method[, size[, min_points]])");
        if (parts.size() >= 2) c.chunk_size = parse_size(trim(parts[1]), "chunk size");
        if (parts.size() == 3) c.min_points = parse_size(trim(parts[2]), "chunk min_points");
      }
      spec.steps.emplace_back(view::Chunk{c});
    } else {
      throw Error("unknown view primitive '" + name + "'");
    }
  }
  spec.validate();
  return spec;
}

std::string ViewSpec::to_string() const {
  std::vector<std::string> parts;
  for (const auto& step : steps) {
    parts.push_back(std::visit(
        Overloaded{
            [](const view::RotateSO3&) { return std::string("rotate_so3"); },
            [](const view::RotateZ&) { return std::string("rotate_z"); },
            [](const view::Translate& t) {
              return "translate(" + format_double(t.lo[0]) + ", " + format_double(t.hi[0]) + ", " +
                     format_double(t.lo[1]) + ", " + format_double(t.hi[1]) + ", " + format_double(t.lo[2]) +
                     ", " + format_double(t.hi[2]) + ")";
            },
            [](const view::ScaleUniform& s) {
              return "scale_uniform(" + format_double(s.lo) + ", " + format_double(s.hi) + ")";
            },
            [](const view::ScalePerAxis& s) {
              return "scale_per_axis(" + format_double(s.lo) + ", " + format_double(s.hi) + ")";
            },
            [](const view::Chunk& c) {
              if (c.spec.method == ChunkMethod::axis_chop) {
                return "chunk(axis_chop, " + std::to_string(c.spec.min_points) + ")";
              }
              return std::string("chunk(") + shapecon::to_string(c.spec.method) + ", " +
                     std::to_string(c.spec.chunk_size) + ", " + std::to_string(c.spec.min_points) + ")";
            },
        },
        step));
  }
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "; ";
    out += parts[i];
  }
  return out;
}

std::vector<std::size_t> nearest_subset(const PointCloud& cloud, Metric metric, std::size_t center, std::size_t m) {
  const std::size_t n = cloud.size();
  if (m > n) throw Error("chunk size exceeds cloud size");
  if (center >= n) throw Error("chunk center out of range");
  const Vec3& c = cloud[center];
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (metric == Metric::cosine && norm(cloud[i]) == 0.0) {
      d[i] = 1.0;
    } else {
      d[i] = distance(metric, c, cloud[i]);
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto closer = [&](std::size_t a, std::size_t b) { return d[a] < d[b] || (d[a] == d[b] && a < b); };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(), closer);
  order.resize(m);
  std::sort(order.begin(), order.end());
  return order;
}

PointCloud extract_chunk_metric(const PointCloud& cloud, Metric metric, std::size_t m, Rng& rng) {
  if (m > cloud.size()) throw Error("chunk size exceeds cloud size");
  std::size_t center = rng.uniform_index(cloud.size());
  if (metric == Metric::cosine) {
    int tries = 0;
    while (norm(cloud[center]) == 0.0) {
      if (++tries > 256) throw Error("cosine chunk: no nonzero center point");
      center = rng.uniform_index(cloud.size());
    }
  }
  const auto idx = nearest_subset(cloud, metric, center, m);
  return normalize_bounding_sphere(cloud.gather(idx));
}

double axis_percentile(const PointCloud& cloud, int axis, double q) {
  std::vector<double> v(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) v[i] = cloud[i][axis];
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

std::vector<std::size_t> axis_side(const PointCloud& cloud, const AxisCut& cut) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double c = cloud[i][cut.axis];
    if (cut.keep_upper ? c >= cut.value : c < cut.value) out.push_back(i);
  }
  return out;
}

PointCloud extract_chunk_axis(const PointCloud& cloud, std::size_t min_points, Rng& rng,
                              std::optional<AxisCut>* accepted) {
  if (cloud.size() < min_points) throw Error("axis chop: cloud smaller than min_points");
  if (accepted) accepted->reset();
  constexpr int kAttempts = 17;  // first draw plus 16 redraws
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    AxisCut cut;
    cut.axis = static_cast<int>(rng.uniform_index(3));
    const double q25 = axis_percentile(cloud, cut.axis, 0.25);
    const double q75 = axis_percentile(cloud, cut.axis, 0.75);
    cut.value = rng.uniform(q25, q75);
    cut.keep_upper = rng.uniform_index(2) == 1;
    const auto idx = axis_side(cloud, cut);
    if (idx.size() >= min_points && idx.size() < cloud.size()) {
      if (accepted) *accepted = cut;
      return normalize_bounding_sphere(cloud.gather(idx));
    }
  }
  return normalize_bounding_sphere(cloud);
}

PointCloud extract_chunk_axis(const PointCloud& cloud, std::size_t min_points, Rng& rng) {
  return extract_chunk_axis(cloud, min_points, rng, nullptr);
}

PointCloud apply_chunk(const ChunkSpec& spec, const PointCloud& cloud, Rng& rng) {
  if (spec.method == ChunkMethod::axis_chop) return extract_chunk_axis(cloud, spec.min_points, rng);
  return extract_chunk_metric(cloud, chunk_metric(spec.method), spec.chunk_size, rng);
}

PointCloud apply_view(const ViewSpec& spec, const PointCloud& cloud, Rng& rng) {
  spec.validate();
  PointCloud current = cloud;
  auto map_points = [&](auto&& fn) {
    std::vector<Vec3> out;
    out.reserve(current.size());
    for (const auto& p : current.points()) out.push_back(fn(p));
    current = PointCloud(std::move(out));
  };
  for (const auto& step : spec.steps) {
    std::visit(Overloaded{
                   [&](const view::RotateSO3&) { current = rotate(current, random_unit_quaternion(rng)); },
                   [&](const view::RotateZ&) {
                     const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
                     current = rotate(current, Quaternion::from_axis_angle({0.0, 0.0, 1.0}, angle));
                   },
                   [&](const view::Translate& t) {
                     Vec3 offset;
                     for (int a = 0; a < 3; ++a) offset[a] = rng.uniform(t.lo[a], t.hi[a]);
                     map_points([&](const Vec3& p) { return p + offset; });
                   },
                   [&](const view::ScaleUniform& s) {
                     const double f = rng.uniform(s.lo, s.hi);
                     map_points([&](const Vec3& p) { return f * p; });
                   },
                   [&](const view::ScalePerAxis& s) {
                     Vec3 f;
                     for (int a = 0; a < 3; ++a) f[a] = rng.uniform(s.lo, s.hi);
                     map_points([&](const Vec3& p) { return Vec3{f[0] * p[0], f[1] * p[1], f[2] * p[2]}; });
                   },
                   [&](const view::Chunk& c) { current = apply_chunk(c.spec, current, rng); },
               },
               step);
  }
  return current;
}

PointCloud resample_to(const PointCloud& cloud, std::size_t target, Rng& rng) {
  const std::size_t n = cloud.size();
  if (target == 0) throw Error("resample target must be positive");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n >= target) {
    // Partial Fisher-Yates: the first `target` slots are a uniform ordered sample.
    for (std::size_t i = 0; i < target; ++i) {
      const std::size_t j = i + rng.uniform_index(n - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(target);
  } else {
    while (idx.size() < target) idx.push_back(rng.uniform_index(n));
    for (std::size_t i = target - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_index(i + 1)]);
  }
  return cloud.gather(idx);
}

}  // namespace shapecon
