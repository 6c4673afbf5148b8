#include "shapecon/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "shapecon/binary_io.hpp"
#include "shapecon/error.hpp"
#include "shapecon/strings.hpp"

namespace shapecon {

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) { return 0.5 * norm(cross(b - a, c - a)); }

namespace {

bool degenerate(const Vec3& a, const Vec3& b, const Vec3& c) {
  const double scale = std::max({norm(b - a), norm(c - a), norm(c - b)});
  return !(triangle_area(a, b, c) > 1e-14 * scale * scale);
}

struct LineReader {
  std::istream& in;
  std::size_t line_no = 0;

  // Next line that is neither blank nor a '#' comment.
  bool next(std::string& out) {
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_no;
      out = trim(raw);
      if (out.empty() || out[0] == '#') continue;
      return true;
    }
    ++line_no;
    return false;
  }
};

long long off_int(const std::string& tok, std::size_t line) {
  try {
    return parse_int(tok, "OFF");
  } catch (const Error&) {
    throw ParseError(line, "expected an integer, got '" + tok + "'");
  }
}

double off_double(const std::string& tok, std::size_t line) {
  double v;
  try {
    v = parse_double(tok, "OFF");
  } catch (const Error&) {
    throw ParseError(line, "expected a number, got '" + tok + "'");
  }
  if (!std::isfinite(v)) throw ParseError(line, "non-finite coordinate");
  return v;
}

}  // namespace

TriangleMesh parse_off(std::istream& in) {
  LineReader reader{in};
  std::string line;
  if (!reader.next(line)) throw ParseError(reader.line_no, "empty OFF file");

  std::string counts_text = line;
  if (line.rfind("OFF", 0) == 0) {
    counts_text = trim(line.substr(3));
    if (counts_text.empty()) {
      if (!reader.next(counts_text)) throw ParseError(reader.line_no, "missing counts line");
    }
  }
  const std::size_t counts_line = reader.line_no;
  const auto counts = split_whitespace(counts_text);
  if (counts.size() < 2 || counts.size() > 3) throw ParseError(counts_line, "malformed counts line");
  const long long nv = off_int(counts[0], counts_line);
  const long long nf = off_int(counts[1], counts_line);
  if (nv < 0 || nf < 0) throw ParseError(counts_line, "negative element count");

  TriangleMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(nv));
  for (long long v = 0; v < nv; ++v) {
    if (!reader.next(line)) throw ParseError(reader.line_no, "unexpected end of file in vertex list");
    const auto tok = split_whitespace(line);
    if (tok.size() < 3) throw ParseError(reader.line_no, "vertex needs three coordinates");
    mesh.vertices.push_back(
        {off_double(tok[0], reader.line_no), off_double(tok[1], reader.line_no), off_double(tok[2], reader.line_no)});
  }
  for (long long f = 0; f < nf; ++f) {
    if (!reader.next(line)) throw ParseError(reader.line_no, "unexpected end of file in face list");
    const auto tok = split_whitespace(line);
    const long long k = off_int(tok[0], reader.line_no);
    if (k < 3) throw ParseError(reader.line_no, "face needs at least three vertices");
    if (static_cast<long long>(tok.size()) < k + 1) throw ParseError(reader.line_no, "face has too few indices");
    std::vector<std::size_t> idx;
    for (long long j = 1; j <= k; ++j) {
      const long long v = off_int(tok[static_cast<std::size_t>(j)], reader.line_no);
      if (v < 0 || v >= nv) {
        throw ParseError(reader.line_no, "vertex index " + std::to_string(v) + " out of range");
      }
      idx.push_back(static_cast<std::size_t>(v));
    }
    for (std::size_t j = 1; j + 1 < idx.size(); ++j) {
      const std::array<std::size_t, 3> tri{idx[0], idx[j], idx[j + 1]};
      if (degenerate(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]])) continue;
      mesh.faces.push_back(tri);
    }
  }
  return mesh;
}

TriangleMesh load_off(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return parse_off(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), std::string(e.what()).substr(std::string(e.what()).find(": ") + 2) + " in " + path);
  }
}

void write_off(const std::string& path, const TriangleMesh& mesh) {
  std::string out = "OFF\n" + std::to_string(mesh.vertices.size()) + " " + std::to_string(mesh.faces.size()) + " 0\n";
  for (const auto& v : mesh.vertices) {
    out += format_double(v[0]) + " " + format_double(v[1]) + " " + format_double(v[2]) + "\n";
  }
  for (const auto& f : mesh.faces) {
    out += "3 " + std::to_string(f[0]) + " " + std::to_string(f[1]) + " " + std::to_string(f[2]) + "\n";
  }
  binio::write_file(path, out);
}

SurfaceSample sample_surface_raw(const TriangleMesh& mesh, std::size_t n_points, Rng& rng) {
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    total += triangle_area(mesh.vertices.at(f[0]), mesh.vertices.at(f[1]), mesh.vertices.at(f[2]));
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw Error("mesh has zero total area");
  SurfaceSample s;
  s.points.reserve(n_points);
  s.faces.reserve(n_points);
  for (std::size_t k = 0; k < n_points; ++k) {
    const double r = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    if (it == cumulative.end()) --it;
    const auto fi = static_cast<std::size_t>(it - cumulative.begin());
    double u = rng.uniform();
    double v = rng.uniform();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const auto& f = mesh.faces[fi];
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    s.points.push_back(a + u * (b - a) + v * (c - a));
    s.faces.push_back(fi);
  }
  return s;
}

PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n_points, Rng& rng) {
  return normalize_bounding_sphere(PointCloud(sample_surface_raw(mesh, n_points, rng).points));
}

std::string encode_points_binary(const PointCloud& cloud) {
  std::string out = "i3dp 1 " + std::to_string(cloud.size()) + "\n";
  for (const auto& p : cloud.points()) {
    for (double v : p) binio::put_f64(out, v);
  }
  return out;
}

PointCloud parse_points(const std::string& bytes) {
  if (bytes.rfind("i3dp", 0) == 0) {
    const auto eol = bytes.find('\n');
    if (eol == std::string::npos) throw Error("i3dp: missing header line");
    const auto header = split_whitespace(bytes.substr(0, eol));
    if (header.size() != 3 || header[0] != "i3dp") throw Error("i3dp: malformed header");
    if (parse_int(header[1], "i3dp version") != 1) throw Error("i3dp: unsupported version " + header[1]);
    const std::size_t n = parse_size(header[2], "i3dp count");
    if (n == 0) throw Error("empty cloud");
    binio::Reader r(bytes.data() + eol + 1, bytes.size() - eol - 1, "i3dp");
    std::vector<Vec3> pts(n);
    for (auto& p : pts) r.f64s(p);
    if (r.remaining() != 0) throw Error("i3dp: trailing bytes after point data");
    return PointCloud(std::move(pts));
  }
  std::istringstream in(bytes);
  std::string raw;
  std::size_t line_no = 0;
  std::vector<Vec3> pts;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto tok = split_whitespace(line);
    if (tok.size() != 3) throw ParseError(line_no, "expected 'x y z'");
    Vec3 p;
    for (int a = 0; a < 3; ++a) {
      try {
        p[a] = parse_double(tok[a], "point");
      } catch (const Error&) {
        throw ParseError(line_no, "not a number: '" + tok[a] + "'");
      }
      if (!std::isfinite(p[a])) throw ParseError(line_no, "non-finite coordinate");
    }
    pts.push_back(p);
  }
  if (pts.empty()) throw Error("empty cloud");
  return PointCloud(std::move(pts));
}

PointCloud load_points(const std::string& path) { return parse_points(binio::read_file(path)); }

void write_points_text(const std::string& path, const PointCloud& cloud) {
  std::string out;
  for (const auto& p : cloud.points()) {
    out += format_double(p[0]) + " " + format_double(p[1]) + " " + format_double(p[2]) + "\n";
  }
  binio::write_file(path, out);
}

void write_points_binary(const std::string& path, const PointCloud& cloud) {
  binio::write_file(path, encode_points_binary(cloud));
}

const char* to_string(Split split) { return split == Split::train ? "train" : "test"; }

void Dataset::validate() const {
  std::set<std::string> names;
  for (const auto& inst : instances) {
    if (!names.insert(inst.name).second) throw Error("duplicate instance name '" + inst.name + "'");
    if (inst.cloud.size() != instances.front().cloud.size()) throw Error("instances differ in point count");
  }
}

Dataset Dataset::subset(Split split) const {
  Dataset out;
  for (const auto& inst : instances) {
    if (inst.split == split) out.instances.push_back(inst);
  }
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(inst.label.value_or(-1));
  return out;
}

const char* to_string(ShapeClass c) {
  switch (c) {
    case ShapeClass::sphere: return "sphere";
    case ShapeClass::cube: return "cube";
    case ShapeClass::cylinder: return "cylinder";
    case ShapeClass::cone: return "cone";
    case ShapeClass::torus: return "torus";
  }
  return "?";
}

ShapeClass parse_shape_class(const std::string& name) {
  for (auto c : {ShapeClass::sphere, ShapeClass::cube, ShapeClass::cylinder, ShapeClass::cone, ShapeClass::torus}) {
    if (name == to_string(c)) return c;
  }
  throw Error("unknown shape class '" + name + "'");
}

std::vector<Vec3> sample_shape(ShapeClass c, std::size_t n_points, Rng& rng) {
  constexpr double pi = std::numbers::pi;
  std::vector<Vec3> pts;
  pts.reserve(n_points);
  for (std::size_t k = 0; k < n_points; ++k) {
    switch (c) {
      case ShapeClass::sphere: {
        Vec3 p;
        double r = 0.0;
        do {
          p = {rng.normal(), rng.normal(), rng.normal()};
          r = norm(p);
        } while (r == 0.0);
        pts.push_back((1.0 / r) * p);
        break;
      }
      case ShapeClass::cube: {
        const auto face = rng.uniform_index(6);
        const auto axis = static_cast<int>(face / 2);
        Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        p[axis] = face % 2 ? 1.0 : -1.0;
        pts.push_back(p);
        break;
      }
      case ShapeClass::cylinder: {
        constexpr double radius = 0.6, half = 1.0;
        const double side = 2.0 * pi * radius * 2.0 * half;
        const double cap = pi * radius * radius;
        const double t = rng.uniform(0.0, side + 2.0 * cap);
        const double a = rng.uniform(0.0, 2.0 * pi);
        if (t < side) {
          pts.push_back({radius * std::cos(a), radius * std::sin(a), rng.uniform(-half, half)});
        } else {
          const double r = radius * std::sqrt(rng.uniform());
          pts.push_back({r * std::cos(a), r * std::sin(a), t < side + cap ? half : -half});
        }
        break;
      }
      case ShapeClass::cone: {
        constexpr double radius = 1.0, height = 2.0;
        const double side = pi * radius * std::sqrt(radius * radius + height * height);
        const double base = pi * radius * radius;
        const double t = rng.uniform(0.0, side + base);
        const double a = rng.uniform(0.0, 2.0 * pi);
        if (t < side) {
          // Lateral density grows linearly with distance from the apex.
          const double f = std::sqrt(rng.uniform());
          pts.push_back({f * radius * std::cos(a), f * radius * std::sin(a), 1.0 - f * height});
        } else {
          const double r = radius * std::sqrt(rng.uniform());
          pts.push_back({r * std::cos(a), r * std::sin(a), -1.0});
        }
        break;
      }
      case ShapeClass::torus: {
        constexpr double major = 1.0, minor = 0.35;
        const double theta = rng.uniform(0.0, 2.0 * pi);
        double phi;
        // Area element is proportional to (major + minor cos phi).
        do {
          phi = rng.uniform(0.0, 2.0 * pi);
        } while (rng.uniform() * (major + minor) > major + minor * std::cos(phi));
        const double ring = major + minor * std::cos(phi);
        pts.push_back({ring * std::cos(theta), ring * std::sin(theta), minor * std::sin(phi)});
        break;
      }
    }
  }
  return pts;
}

Dataset synth_dataset(const SynthSpec& spec, Rng& rng) {
  if (spec.classes.empty()) throw Error("synthetic dataset needs at least one class");
  if (spec.per_class == 0) throw Error("synthetic dataset needs at least one instance per class");
  if (spec.n_points == 0) throw Error("synthetic dataset needs a positive point count");
  if (!(spec.jitter >= 0.0 && spec.jitter < 1.0)) throw Error("jitter must lie in [0, 1)");
  const std::uint64_t base = rng.next_u64();

  struct Job {
    std::size_t class_index;
    std::size_t ordinal;
    Split split;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    for (std::size_t i = 0; i < spec.per_class; ++i) jobs.push_back({c, i, Split::train});
  }
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    for (std::size_t i = 0; i < spec.per_class_test; ++i) jobs.push_back({c, i, Split::test});
  }

  Dataset ds;
  ds.instances.resize(jobs.size());
  const auto n_jobs = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t jj = 0; jj < n_jobs; ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    const Job& job = jobs[j];
    Rng r(mix_seed(base, j));
    const ShapeClass cls = spec.classes[job.class_index];
    auto pts = sample_shape(cls, spec.n_points, r);
    Vec3 scale;
    for (int a = 0; a < 3; ++a) scale[a] = r.uniform(1.0 - spec.jitter, 1.0 + spec.jitter);
    for (auto& p : pts) {
      for (int a = 0; a < 3; ++a) p[a] = p[a] * scale[a] + spec.noise_sigma * r.normal();
    }
    PointCloud cloud(std::move(pts));
    if (!spec.aligned) cloud = rotate(cloud, random_unit_quaternion(r));
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%s%04zu", to_string(cls), job.split == Split::test ? "test_" : "",
                  job.ordinal);
    ds.instances[j] = Instance{name, normalize_bounding_sphere(cloud), static_cast<int>(job.class_index), job.split};
  }
  return ds;
}

void save_dataset(const std::string& dir, const Dataset& dataset) {
  dataset.validate();
  std::filesystem::create_directories(dir);
  std::string manifest = "id,label,split\n";
  for (const auto& inst : dataset.instances) {
    write_points_binary((std::filesystem::path(dir) / (inst.name + ".i3dp")).string(), inst.cloud);
    manifest += inst.name + "," + (inst.label ? std::to_string(*inst.label) : std::string()) + "," +
                to_string(inst.split) + "\n";
  }
  binio::write_file((std::filesystem::path(dir) / "manifest.csv").string(), manifest);
}

Dataset load_dataset(const std::string& dir) {
  const std::string path = (std::filesystem::path(dir) / "manifest.csv").string();
  std::istringstream in(binio::read_file(path));
  std::string raw;
  std::size_t line_no = 0;
  Dataset ds;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("id,", 0) == 0) continue;
    const auto f = split(line, ',');
    if (f.size() != 3) throw ParseError(line_no, "manifest rows are 'id,label,split'");
    Instance inst;
    inst.name = trim(f[0]);
    if (!trim(f[1]).empty()) inst.label = static_cast<int>(parse_int(trim(f[1]), "label"));
    const std::string sp = trim(f[2]);
    if (sp == "train") {
      inst.split = Split::train;
    } else if (sp == "test") {
      inst.split = Split::test;
    } else {
      throw ParseError(line_no, "unknown split '" + sp + "'");
    }
    inst.cloud = load_points((std::filesystem::path(dir) / (inst.name + ".i3dp")).string());
    ds.instances.push_back(std::move(inst));
  }
  if (ds.instances.empty()) throw Error("dataset '" + dir + "' is empty");
  ds.validate();
  return ds;
}

std::vector<std::pair<std::string, int>> read_labels_csv(const std::string& path) {
  std::istringstream in(binio::read_file(path));
  std::string raw;
  std::size_t line_no = 0;
  std::vector<std::pair<std::string, int>> rows;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line_no == 1 && line == "id,label") continue;
    const auto f = split(line, ',');
    if (f.size() != 2) throw ParseError(line_no, "label rows are 'id,label'");
    try {
      rows.emplace_back(trim(f[0]), static_cast<int>(parse_int(trim(f[1]), "label")));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return rows;
}

void write_labels_csv(const std::string& path, const std::vector<std::pair<std::string, int>>& rows) {
  std::string out = "id,label\n";
  for (const auto& [id, label] : rows) out += id + "," + std::to_string(label) + "\n";
  binio::write_file(path, out);
}

}  // namespace shapecon
