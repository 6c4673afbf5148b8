#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "shapecon/binary_io.hpp"
#include "shapecon/data.hpp"
#include "shapecon/error.hpp"
#include "shapecon/evaluation.hpp"

using namespace shapecon;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("shapecon_data_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TriangleMesh parse(const std::string& text) {
  std::istringstream in(text);
  return parse_off(in);
}

std::size_t error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(Off, Tetrahedron) {
  const auto m = parse("OFF\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n3 0 1 3\n3 0 2 3\n3 1 2 3\n");
  EXPECT_EQ(m.vertices.size(), 4u);
  ASSERT_EQ(m.faces.size(), 4u);
  EXPECT_EQ(m.faces[3], (std::array<std::size_t, 3>{1, 2, 3}));
}

TEST(Off, QuadsFanTriangulated) {
  const auto m = parse("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n");
  ASSERT_EQ(m.faces.size(), 2u);
  EXPECT_EQ(m.faces[0], (std::array<std::size_t, 3>{0, 1, 2}));
  EXPECT_EQ(m.faces[1], (std::array<std::size_t, 3>{0, 2, 3}));
}

TEST(Off, FusedHeaderCommentsAndBlankLines) {
  const auto m = parse("# mesh\nOFF3 1 0\n\n0 0 0 # origin\n1 0 0\n0 1 0\n3 0 1 2\n");
  EXPECT_EQ(m.vertices.size(), 3u);
  EXPECT_EQ(m.faces.size(), 1u);
  const auto bare = parse("3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
  EXPECT_EQ(bare, m);
}

TEST(Off, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n"), 6u);
  EXPECT_EQ(error_line("OFF\n3 1 0\n0 0 0\n1 x 0\n"), 4u);
  // Running out of lines is reported one past the last line.
  EXPECT_EQ(error_line("OFF\n3 1 0\n0 0 0\n"), 4u);
  EXPECT_GT(error_line(""), 0u);
}

TEST(Off, WriteReadRoundTripIsExact) {
  Rng rng(1);
  TriangleMesh m;
  for (int i = 0; i < 6; ++i) m.vertices.push_back({rng.normal(), rng.normal() * 1e-7, rng.normal() * 1e5});
  m.faces = {{0, 1, 2}, {3, 4, 5}, {0, 2, 4}};
  const auto dir = scratch("off");
  write_off((dir / "m.off").string(), m);
  EXPECT_EQ(load_off((dir / "m.off").string()), m);
  std::filesystem::remove_all(dir);
}

TEST(Sampling, PointsLieOnTheirFaces) {
  Rng rng(2);
  const auto m = parse("OFF\n4 2 0\n0 0 0\n2 0 0\n0 3 0\n0 0 5\n3 0 1 2\n3 0 1 3\n");
  const auto s = sample_surface_raw(m, 2000, rng);
  ASSERT_EQ(s.points.size(), 2000u);
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const auto& p = s.points[i];
    if (s.faces[i] == 0) {
      EXPECT_NEAR(p[2], 0.0, 1e-12);
      EXPECT_LE(p[0] / 2 + p[1] / 3, 1.0 + 1e-12);
    } else {
      EXPECT_NEAR(p[1], 0.0, 1e-12);
      EXPECT_LE(p[0] / 2 + p[2] / 5, 1.0 + 1e-12);
    }
    EXPECT_GE(std::min({p[0], p[1], p[2]}), -1e-12);
  }
}

TEST(Sampling, FaceFrequenciesFollowArea) {
  // Areas 9:1; the count on the big face is Binomial(20000, 0.9), sd ~ 42.
  Rng rng(3);
  const auto m = parse("OFF\n6 2 0\n0 0 0\n3 0 0\n0 6 0\n0 0 1\n1 0 1\n0 2 1\n3 0 1 2\n3 3 4 5\n");
  const auto s = sample_surface_raw(m, 20000, rng);
  const auto big = std::count(s.faces.begin(), s.faces.end(), std::size_t{0});
  EXPECT_NEAR(static_cast<double>(big), 18000.0, 5 * 42.5);
}

TEST(Sampling, CubeIsNormalizedAndDeterministic) {
  const auto cube = parse(
      "OFF\n8 6 0\n-1 -1 -1\n1 -1 -1\n1 1 -1\n-1 1 -1\n-1 -1 1\n1 -1 1\n1 1 1\n-1 1 1\n"
      "4 0 3 2 1\n4 4 5 6 7\n4 0 1 5 4\n4 2 3 7 6\n4 1 2 6 5\n4 0 4 7 3\n");
  Rng a(4), b(4);
  const auto ca = sample_surface(cube, 1024, a);
  EXPECT_EQ(ca, sample_surface(cube, 1024, b));
  double far = 0.0;
  for (const auto& p : ca.points()) far = std::max(far, norm(p));
  EXPECT_NEAR(far, 1.0, 1e-12);
  const auto c = centroid(ca);
  EXPECT_LT(norm(c), 1e-12);
}

TEST(Sampling, DegenerateMeshThrows) {
  Rng rng(5);
  const auto flat = parse("OFF\n3 1 0\n0 0 0\n1 0 0\n2 0 0\n3 0 1 2\n");
  EXPECT_THROW(sample_surface(flat, 10, rng), Error);
}

TEST(Points, TextAndBinaryRoundTrips) {
  Rng rng(6);
  std::vector<Vec3> pts(300);
  for (auto& p : pts) p = {rng.normal() * 1e-9, rng.normal(), rng.normal() * 1e9};
  const PointCloud cloud(pts);
  const auto dir = scratch("points");
  write_points_text((dir / "c.xyz").string(), cloud);
  write_points_binary((dir / "c.i3dp").string(), cloud);
  EXPECT_EQ(load_points((dir / "c.xyz").string()), cloud);
  EXPECT_EQ(load_points((dir / "c.i3dp").string()), cloud);
  EXPECT_EQ(parse_points(encode_points_binary(cloud)), cloud);
  binio::write_file((dir / "empty.xyz").string(), "\n");
  try {
    load_points((dir / "empty.xyz").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("empty cloud"), std::string::npos);
  }
  const auto bytes = encode_points_binary(cloud);
  EXPECT_THROW(parse_points(bytes.substr(0, bytes.size() - 8)), Error);
  EXPECT_THROW(parse_points("1 2\n"), ParseError);
  std::filesystem::remove_all(dir);
}

TEST(Synth, DeterministicAndLabeled) {
  SynthSpec spec;
  spec.per_class = 3;
  spec.per_class_test = 1;
  spec.n_points = 128;
  Rng a(7), b(7);
  const auto da = synth_dataset(spec, a);
  const auto db = synth_dataset(spec, b);
  ASSERT_EQ(da.size(), 20u);
  for (std::size_t i = 0; i < da.size(); ++i) {
    EXPECT_EQ(da.instances[i].cloud, db.instances[i].cloud);
    EXPECT_EQ(da.instances[i].name, db.instances[i].name);
    ASSERT_TRUE(da.instances[i].label.has_value());
  }
  EXPECT_EQ(da.subset(Split::test).size(), 5u);
  EXPECT_EQ(da.subset(Split::train).size(), 15u);
  da.validate();
}

TEST(Synth, UnalignedIsOneRigidRotationOfAligned) {
  // Rotation happens before normalization, so distances scale uniformly.
  SynthSpec spec;
  spec.per_class = 2;
  spec.n_points = 64;
  Rng a(8), b(8);
  const auto aligned = synth_dataset(spec, a);
  spec.aligned = false;
  const auto turned = synth_dataset(spec, b);
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    const auto da = distance_matrix(aligned.instances[i].cloud);
    const auto dt = distance_matrix(turned.instances[i].cloud);
    for (std::size_t k = 0; k < da.size(); ++k) EXPECT_NEAR(da[k], dt[k], 1e-9);
    EXPECT_FALSE(aligned.instances[i].cloud == turned.instances[i].cloud);
  }
}

TEST(Synth, ClassesSeparableByDistanceProfile) {
  // Quantiles of the pairwise distance distribution are a rotation-invariant
  // descriptor; a linear probe on them should separate the classes.
  SynthSpec spec;
  spec.per_class = 60;
  spec.per_class_test = 60;
  spec.jitter = 0.2;  // the default 0.4 deliberately blurs the classes
  spec.n_points = 256;
  spec.aligned = false;
  Rng rng(9);
  const auto ds = synth_dataset(spec, rng);
  const std::size_t q = 16;
  auto describe = [&](const Dataset& part) {
    std::vector<double> features;
    for (const auto& inst : part.instances) {
      auto d = distance_matrix(inst.cloud);
      std::sort(d.begin(), d.end());
      for (std::size_t k = 0; k < q; ++k) features.push_back(d[(2 * k + 1) * d.size() / (2 * q)]);
    }
    return features;
  };
  auto xtr = describe(ds.subset(Split::train));
  auto xte = describe(ds.subset(Split::test));
  // Standardize with training statistics, then project to the unit sphere.
  const std::size_t n = xtr.size() / q;
  std::vector<double> mean(q, 0.0), sd(q, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < q; ++k) mean[k] += xtr[i * q + k] / n;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < q; ++k) sd[k] += std::pow(xtr[i * q + k] - mean[k], 2) / n;
  }
  auto table = [&](std::vector<double> x, const Dataset& part) {
    for (std::size_t i = 0; i < x.size() / q; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < q; ++k) {
        x[i * q + k] = (x[i * q + k] - mean[k]) / std::sqrt(sd[k]);
        s += x[i * q + k] * x[i * q + k];
      }
      for (std::size_t k = 0; k < q; ++k) x[i * q + k] /= std::sqrt(s);
    }
    return EmbeddingTable::from_rows(x, q, part.labels());
  };
  const auto train = table(xtr, ds.subset(Split::train));
  const auto test = table(xte, ds.subset(Split::test));
  EXPECT_GE(linear_probe(train, test), 0.9);
}

TEST(Dataset, SaveLoadRoundTrip) {
  SynthSpec spec;
  spec.per_class = 2;
  spec.per_class_test = 1;
  spec.n_points = 32;
  Rng rng(10);
  auto ds = synth_dataset(spec, rng);
  ds.instances[0].label.reset();
  const auto dir = scratch("dataset");
  save_dataset(dir.string(), ds);
  const auto back = load_dataset(dir.string());
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.instances[i].name, ds.instances[i].name);
    EXPECT_EQ(back.instances[i].cloud, ds.instances[i].cloud);
    EXPECT_EQ(back.instances[i].label, ds.instances[i].label);
    EXPECT_EQ(back.instances[i].split, ds.instances[i].split);
  }
  write_labels_csv((dir / "l.csv").string(), {{"a", 3}, {"b", 0}});
  EXPECT_EQ(read_labels_csv((dir / "l.csv").string()),
            (std::vector<std::pair<std::string, int>>{{"a", 3}, {"b", 0}}));
  binio::write_file((dir / "bad.csv").string(), "id,label\na,x\n");
  EXPECT_THROW(read_labels_csv((dir / "bad.csv").string()), ParseError);
  std::filesystem::remove_all(dir);
}

TEST(Dataset, ValidateRejectsDuplicatesAndMixedSizes) {
  Dataset ds;
  const PointCloud c(std::vector<Vec3>{{0, 0, 0}, {1, 0, 0}});
  ds.instances.push_back({"a", c, 0, Split::train});
  ds.instances.push_back({"a", c, 0, Split::train});
  EXPECT_THROW(ds.validate(), Error);
  ds.instances[1].name = "b";
  ds.instances[1].cloud = PointCloud(std::vector<Vec3>{{0, 0, 0}});
  EXPECT_THROW(ds.validate(), Error);
}
