#include "shapecon/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "shapecon/binary_io.hpp"
#include "shapecon/data.hpp"
#include "shapecon/error.hpp"
#include "shapecon/strings.hpp"
#include "shapecon/views.hpp"

namespace shapecon {

void EmbeddingTable::validate() const {
  if (dim == 0 || data.size() % dim != 0) throw Error("embedding table: bad shape");
  const std::size_t m = rows();
  if (ids.size() != m) throw Error("embedding table: id count mismatch");
  if (!labels.empty() && labels.size() != m) throw Error("embedding table: label count mismatch");
  std::set<std::int64_t> seen(ids.begin(), ids.end());
  if (seen.size() != m) throw Error("embedding table: duplicate ids");
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (double v : row(i)) s += v * v;
    if (std::abs(std::sqrt(s) - 1.0) > 1e-6) throw Error("embedding table: row " + std::to_string(i) + " is not unit norm");
  }
}

EmbeddingTable EmbeddingTable::from_rows(std::vector<double> data, std::size_t dim, std::vector<int> labels) {
  EmbeddingTable t;
  t.dim = dim;
  t.data = std::move(data);
  t.ids.resize(t.rows());
  std::iota(t.ids.begin(), t.ids.end(), std::int64_t{0});
  t.labels = std::move(labels);
  t.validate();
  return t;
}

void write_table(const std::string& path, const EmbeddingTable& table) {
  table.validate();
  std::string out = "i3de 1 " + std::to_string(table.rows()) + " " + std::to_string(table.dim) + "\n";
  binio::put_f64s(out, table.data);
  binio::write_file(path, out);
}

EmbeddingTable read_table(const std::string& path) {
  const std::string bytes = binio::read_file(path);
  const auto eol = bytes.find('\n');
  if (bytes.rfind("i3de", 0) != 0 || eol == std::string::npos) throw Error("'" + path + "' is not an i3de file");
  const auto header = split_whitespace(bytes.substr(0, eol));
  if (header.size() != 4) throw Error("i3de: malformed header");
  if (parse_int(header[1], "i3de version") != 1) throw Error("i3de: unsupported version " + header[1]);
  const std::size_t m = parse_size(header[2], "i3de rows");
  const std::size_t d = parse_size(header[3], "i3de dim");
  if (m == 0 || d == 0) throw Error("i3de: empty table");
  binio::Reader r(bytes.data() + eol + 1, bytes.size() - eol - 1, "i3de");
  std::vector<double> data(m * d);
  r.f64s(data);
  if (r.remaining() != 0) throw Error("i3de: trailing bytes after rows");
  return EmbeddingTable::from_rows(std::move(data), d);
}

void attach_labels(EmbeddingTable& table, const std::string& labels_csv) {
  const auto rows = read_labels_csv(labels_csv);
  std::map<std::int64_t, int> by_id;
  for (const auto& [id, label] : rows) by_id[parse_int(id, "label id")] = label;
  table.labels.assign(table.rows(), 0);
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const auto it = by_id.find(table.ids[i]);
    if (it == by_id.end()) throw Error("no label for id " + std::to_string(table.ids[i]));
    table.labels[i] = it->second;
  }
}

EmbeddingTable embed_clouds(const EncoderParams& params, std::span<const PointCloud> clouds, int layer_tap,
                            std::size_t encode_points, std::uint64_t seed, std::vector<int> labels) {
  if (clouds.empty()) throw Error("nothing to embed");
  const std::size_t d = params.arch.tap_dim(layer_tap);
  const std::size_t m = clouds.size();
  std::vector<double> data(m * d);
  std::vector<std::string> failures(m);
  const auto ms = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t ii = 0; ii < ms; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      std::vector<double> z;
      if (encode_points > 0 && clouds[i].size() != encode_points) {
        Rng rng(mix_seed(seed, i));
        z = embed(params, resample_to(clouds[i], encode_points, rng), layer_tap);
      } else {
        z = embed(params, clouds[i], layer_tap);
      }
      std::copy(z.begin(), z.end(), data.begin() + static_cast<std::ptrdiff_t>(i * d));
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  }
  for (const auto& f : failures) {
    if (!f.empty()) throw Error(f);
  }
  return EmbeddingTable::from_rows(std::move(data), d, std::move(labels));
}

// ---------------------------------------------------------------- k-means

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

struct Run {
  std::vector<int> assignment;
  std::vector<double> centroids;
  double inertia = 0.0;
  std::vector<double> trace;
};

// Nearest centroid per point (ties to the lower index); returns inertia.
double assign(const double* x, std::size_t m, std::size_t d, const std::vector<double>& c, std::size_t k,
              std::vector<int>& out, std::vector<double>& cost) {
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const double dd = sq_dist(x + i * d, c.data() + j * d, d);
      if (dd < best) {
        best = dd;
        arg = static_cast<int>(j);
      }
    }
    out[i] = arg;
    cost[i] = best;
    total += best;
  }
  return total;
}

Run lloyd(const double* x, std::size_t m, std::size_t d, const KMeansOptions& opt, Rng& rng) {
  const std::size_t k = opt.clusters;
  Run run;
  run.centroids.assign(k * d, 0.0);

  // k-means++ seeding.
  std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(m, 0);
  std::size_t first = rng.uniform_index(m);
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t pick = first;
    if (j > 0) {
      double total = 0.0;
      for (std::size_t i = 0; i < m; ++i) total += nearest[i];
      if (total > 0.0) {
        double r = rng.uniform() * total;
        pick = m;
        for (std::size_t i = 0; i < m; ++i) {
          if (nearest[i] <= 0.0) continue;
          pick = i;
          r -= nearest[i];
          if (r < 0.0) break;
        }
      } else {
        // Every point coincides with a chosen seed; take any unused row.
        std::vector<std::size_t> unused;
        for (std::size_t i = 0; i < m; ++i) {
          if (!chosen[i]) unused.push_back(i);
        }
        pick = unused[rng.uniform_index(unused.size())];
      }
    }
    chosen[pick] = 1;
    std::copy(x + pick * d, x + (pick + 1) * d, run.centroids.begin() + static_cast<std::ptrdiff_t>(j * d));
    for (std::size_t i = 0; i < m; ++i) nearest[i] = std::min(nearest[i], sq_dist(x + i * d, x + pick * d, d));
  }

  std::vector<int> a(m), next(m);
  std::vector<double> cost(m);
  run.inertia = assign(x, m, d, run.centroids, k, a, cost);
  run.trace.push_back(run.inertia);
  std::vector<std::size_t> count(k);
  for (std::size_t iter = 1; iter < opt.max_iter; ++iter) {
    std::fill(run.centroids.begin(), run.centroids.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t i = 0; i < m; ++i) {
      const auto j = static_cast<std::size_t>(a[i]);
      ++count[j];
      for (std::size_t t = 0; t < d; ++t) run.centroids[j * d + t] += x[i * d + t];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (count[j] > 0) {
        for (std::size_t t = 0; t < d; ++t) run.centroids[j * d + t] /= static_cast<double>(count[j]);
        continue;
      }
      std::size_t far = 0;
      for (std::size_t i = 1; i < m; ++i) {
        if (cost[i] > cost[far]) far = i;
      }
      std::copy(x + far * d, x + (far + 1) * d, run.centroids.begin() + static_cast<std::ptrdiff_t>(j * d));
      cost[far] = 0.0;
    }
    run.inertia = assign(x, m, d, run.centroids, k, next, cost);
    run.trace.push_back(run.inertia);
    const bool stable = next == a;
    a.swap(next);
    if (stable) break;
  }
  run.assignment = std::move(a);
  return run;
}

void check_kmeans(std::span<const double> data, std::size_t dim, const KMeansOptions& opt) {
  if (dim == 0 || data.size() % dim != 0) throw Error("kmeans: bad data shape");
  if (opt.clusters == 0) throw Error("kmeans: need at least one cluster");
  if (data.size() / dim < opt.clusters) throw Error("kmeans: fewer points than clusters");
  if (opt.n_init == 0 || opt.max_iter == 0) throw Error("kmeans: n_init and max_iter must be positive");
}

ClusteringResult best_of(std::vector<Run>& runs) {
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].inertia < runs[best].inertia) best = r;
  }
  ClusteringResult out;
  out.best_restart = best;
  out.inertia = runs[best].inertia;
  out.assignment = runs[best].assignment;
  out.centroids = runs[best].centroids;
  for (auto& r : runs) out.inertia_traces.push_back(std::move(r.trace));
  return out;
}

}  // namespace

ClusteringResult kmeans(std::span<const double> data, std::size_t dim, const KMeansOptions& options, Rng& rng) {
  check_kmeans(data, dim, options);
  const std::size_t m = data.size() / dim;
  std::vector<std::uint64_t> seeds(options.n_init);
  for (auto& s : seeds) s = rng.next_u64();
  std::vector<Run> runs(options.n_init);
  const auto n = static_cast<std::ptrdiff_t>(options.n_init);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    Rng local(seeds[static_cast<std::size_t>(r)]);
    runs[static_cast<std::size_t>(r)] = lloyd(data.data(), m, dim, options, local);
  }
  return best_of(runs);
}

ClusteringResult kmeans(const EmbeddingTable& table, const KMeansOptions& options, Rng& rng) {
  auto result = kmeans(table.data, table.dim, options, rng);
  if (table.has_labels()) result.ami = ami(table.labels, result.assignment);
  return result;
}

namespace reference {

ClusteringResult kmeans(std::span<const double> data, std::size_t dim, const KMeansOptions& options, Rng& rng) {
  check_kmeans(data, dim, options);
  const std::size_t m = data.size() / dim;
  std::vector<std::uint64_t> seeds(options.n_init);
  for (auto& s : seeds) s = rng.next_u64();
  std::vector<Run> runs;
  for (std::size_t r = 0; r < options.n_init; ++r) {
    Rng local(seeds[r]);
    runs.push_back(lloyd(data.data(), m, dim, options, local));
  }
  return best_of(runs);
}

}  // namespace reference

// -------------------------------------------------------------------- AMI

namespace {

struct Contingency {
  std::vector<double> a_sizes, b_sizes;
  std::map<std::pair<int, int>, double> cells;
  double n = 0.0;
};

Contingency contingency(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error("ami: label arrays differ in length");
  if (a.empty()) throw Error("ami: empty labelings");
  std::map<int, int> ia, ib;
  for (int v : a) ia.emplace(v, static_cast<int>(ia.size()));
  for (int v : b) ib.emplace(v, static_cast<int>(ib.size()));
  Contingency c;
  c.a_sizes.assign(ia.size(), 0.0);
  c.b_sizes.assign(ib.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int x = ia[a[i]], y = ib[b[i]];
    c.a_sizes[static_cast<std::size_t>(x)] += 1.0;
    c.b_sizes[static_cast<std::size_t>(y)] += 1.0;
    c.cells[{x, y}] += 1.0;
  }
  c.n = static_cast<double>(a.size());
  return c;
}

double entropy_of(const std::vector<double>& sizes, double n) {
  double h = 0.0;
  for (double s : sizes) {
    if (s > 0.0) h -= (s / n) * std::log(s / n);
  }
  return h;
}

double mi_of(const Contingency& c) {
  double mi = 0.0;
  for (const auto& [key, nij] : c.cells) {
    const double ai = c.a_sizes[static_cast<std::size_t>(key.first)];
    const double bj = c.b_sizes[static_cast<std::size_t>(key.second)];
    mi += (nij / c.n) * std::log(c.n * nij / (ai * bj));
  }
  return std::max(mi, 0.0);
}

double emi_of(const Contingency& c) {
  const double n = c.n;
  const double lg_n = std::lgamma(n + 1.0);
  double emi = 0.0;
  for (double ai : c.a_sizes) {
    for (double bj : c.b_sizes) {
      const double lo = std::max(1.0, ai + bj - n);
      const double hi = std::min(ai, bj);
      const double fixed = std::lgamma(ai + 1.0) + std::lgamma(bj + 1.0) + std::lgamma(n - ai + 1.0) +
                           std::lgamma(n - bj + 1.0) - lg_n;
      for (double nij = lo; nij <= hi; nij += 1.0) {
        const double log_p = fixed - std::lgamma(nij + 1.0) - std::lgamma(ai - nij + 1.0) -
                             std::lgamma(bj - nij + 1.0) - std::lgamma(n - ai - bj + nij + 1.0);
        emi += (nij / n) * std::log(n * nij / (ai * bj)) * std::exp(log_p);
      }
    }
  }
  return emi;
}

bool same_partition(std::span<const int> a, std::span<const int> b) {
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto [it1, new1] = ab.emplace(a[i], b[i]);
    const auto [it2, new2] = ba.emplace(b[i], a[i]);
    if (it1->second != b[i] || it2->second != a[i]) return false;
  }
  return true;
}

}  // namespace

double entropy(std::span<const int> labels) {
  const auto c = contingency(labels, labels);
  return entropy_of(c.a_sizes, c.n);
}

double mutual_information(std::span<const int> a, std::span<const int> b) { return mi_of(contingency(a, b)); }

double expected_mutual_information(std::span<const int> a, std::span<const int> b) {
  return emi_of(contingency(a, b));
}

double ami(std::span<const int> a, std::span<const int> b) {
  const auto c = contingency(a, b);
  if (same_partition(a, b)) return 1.0;
  const double mi = mi_of(c);
  const double emi = emi_of(c);
  const double denom = 0.5 * (entropy_of(c.a_sizes, c.n) + entropy_of(c.b_sizes, c.n)) - emi;
  if (std::abs(denom) < 1e-15) return 0.0;
  return (mi - emi) / denom;
}

// ------------------------------------------------------------------ probe

double linear_probe(const EmbeddingTable& train, const EmbeddingTable& test, const ProbeOptions& opt) {
  if (!train.has_labels() || !test.has_labels()) throw Error("linear probe needs labeled tables");
  if (train.dim != test.dim) throw Error("linear probe: dimension mismatch");
  std::vector<int> classes(train.labels.begin(), train.labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw Error("linear probe needs at least two classes in the training set");

  const std::size_t d = train.dim, n = train.rows(), nc = classes.size();
  std::vector<double> weights(nc * d, 0.0), biases(nc, 0.0);
  const auto ncs = static_cast<std::ptrdiff_t>(nc);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t cc = 0; cc < ncs; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    double* w = weights.data() + c * d;
    double& b = biases[c];
    std::vector<double> gw(d);
    double lr = opt.learning_rate;
    for (std::size_t it = 0; it < opt.iterations; ++it) {
      if (it > 0 && opt.decay_every > 0 && it % opt.decay_every == 0) lr *= opt.decay;
      for (std::size_t t = 0; t < d; ++t) gw[t] = opt.lambda * w[t];
      double gb = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double y = train.labels[i] == classes[c] ? 1.0 : -1.0;
        const auto x = train.row(i);
        double score = b;
        for (std::size_t t = 0; t < d; ++t) score += w[t] * x[t];
        if (y * score < 1.0) {
          for (std::size_t t = 0; t < d; ++t) gw[t] -= y * x[t] / static_cast<double>(n);
          gb -= y / static_cast<double>(n);
        }
      }
      for (std::size_t t = 0; t < d; ++t) w[t] -= lr * gw[t];
      b -= lr * gb;
    }
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.rows(); ++i) {
    const auto x = test.row(i);
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < nc; ++c) {
      double s = biases[c];
      for (std::size_t t = 0; t < d; ++t) s += weights[c * d + t] * x[t];
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
    if (classes[best] == test.labels[i]) ++correct;
  }
  return test.rows() ? static_cast<double>(correct) / static_cast<double>(test.rows()) : 0.0;
}

// -------------------------------------------------------------- retrieval

std::vector<Neighbor> retrieve(const EmbeddingTable& table, std::int64_t query_id, std::size_t n) {
  const auto it = std::find(table.ids.begin(), table.ids.end(), query_id);
  if (it == table.ids.end()) throw Error("unknown id " + std::to_string(query_id));
  const std::size_t m = table.rows();
  if (n >= m) throw Error("retrieve: n_neighbors must be smaller than the table size");
  const auto q = static_cast<std::size_t>(it - table.ids.begin());
  std::vector<Neighbor> all;
  all.reserve(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    if (i == q) continue;
    all.push_back({table.ids[i], std::sqrt(sq_dist(table.row(q).data(), table.row(i).data(), table.dim))});
  }
  auto closer = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), closer);
  all.resize(n);
  return all;
}

// -------------------------------------------------------------------- PCA

std::vector<double> pca_2d(std::span<const double> data, std::size_t dim) {
  if (dim == 0 || data.size() % dim != 0) throw Error("pca: bad data shape");
  const std::size_t m = data.size() / dim;
  std::vector<double> mean(dim, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < dim; ++t) mean[t] += data[i * dim + t] / static_cast<double>(m);
  }
  std::vector<double> xc(data.begin(), data.end());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < dim; ++t) xc[i * dim + t] -= mean[t];
  }
  // Power iteration on X^T X, applied implicitly as X^T (X v).
  auto apply = [&](const std::vector<double>& v) {
    std::vector<double> xv(m, 0.0), out(dim, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t t = 0; t < dim; ++t) xv[i] += xc[i * dim + t] * v[t];
    }
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t t = 0; t < dim; ++t) out[t] += xc[i * dim + t] * xv[i];
    }
    return out;
  };
  std::vector<std::vector<double>> comps;
  double lead = 0.0;
  for (int c = 0; c < 2 && c < static_cast<int>(dim); ++c) {
    std::vector<double> v(dim);
    for (std::size_t t = 0; t < dim; ++t) v[t] = 1.0 / std::sqrt(static_cast<double>(dim)) + 1e-3 * static_cast<double>(t % 7);
    auto deflate = [&](std::vector<double>& w) {
      for (const auto& u : comps) {
        double p = 0.0;
        for (std::size_t t = 0; t < dim; ++t) p += w[t] * u[t];
        for (std::size_t t = 0; t < dim; ++t) w[t] -= p * u[t];
      }
    };
    // The start vector is made orthogonal too, so a rank-deficient residual
    // still yields a component orthogonal to the earlier ones.
    deflate(v);
    double vn = 0.0;
    for (double x : v) vn += x * x;
    if (vn > 0.0) {
      for (double& x : v) x /= std::sqrt(vn);
    }
    for (int it = 0; it < 300; ++it) {
      auto w = apply(v);
      deflate(w);
      double nn = 0.0;
      for (double x : w) nn += x * x;
      nn = std::sqrt(nn);
      // A residual at roundoff level of the leading eigenvalue means the
      // remaining spectrum is empty; normalizing it would amplify noise.
      if (nn <= 1e-12 * lead) break;
      for (std::size_t t = 0; t < dim; ++t) v[t] = w[t] / nn;
      if (comps.empty()) lead = nn;
    }
    // Sign convention: largest-magnitude loading is positive.
    std::size_t big = 0;
    for (std::size_t t = 1; t < dim; ++t) {
      if (std::abs(v[t]) > std::abs(v[big])) big = t;
    }
    if (v[big] < 0.0) {
      for (double& x : v) x = -x;
    }
    comps.push_back(v);
  }
  std::vector<double> out(m * 2, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < comps.size(); ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < dim; ++t) s += xc[i * dim + t] * comps[c][t];
      out[i * 2 + c] = s;
    }
  }
  return out;
}

// ------------------------------------------------------------- invariance

InvarianceReport invariance_report(const ShapeEmbedder& embedder, std::span<const PointCloud> shapes,
                                   std::size_t n_rotations, Rng& rng, std::size_t n_init) {
  if (shapes.size() < 2) throw Error("invariance report needs at least two shapes");
  if (n_rotations < 2) throw Error("invariance report needs at least two rotations");
  const std::size_t total = shapes.size() * n_rotations;
  std::vector<Quaternion> poses(total);
  for (auto& q : poses) q = random_unit_quaternion(rng);

  std::vector<std::vector<double>> rows(total);
  const auto nt = static_cast<std::ptrdiff_t>(total);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t jj = 0; jj < nt; ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    const std::size_t s = j / n_rotations;
    rows[j] = embedder(s, rotate(shapes[s], poses[j]));
  }

  InvarianceReport rep;
  rep.dim = rows.front().size();
  for (std::size_t j = 0; j < total; ++j) {
    if (rows[j].size() != rep.dim) throw Error("invariance report: embedder returned inconsistent sizes");
    rep.embeddings.insert(rep.embeddings.end(), rows[j].begin(), rows[j].end());
    rep.shape_of.push_back(static_cast<int>(j / n_rotations));
  }

  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < total; ++i) {
    for (std::size_t j = i + 1; j < total; ++j) {
      double c = 0.0;
      for (std::size_t t = 0; t < rep.dim; ++t) c += rows[i][t] * rows[j][t];
      if (rep.shape_of[i] == rep.shape_of[j]) {
        intra += c;
        ++n_intra;
      } else {
        inter += c;
        ++n_inter;
      }
    }
  }
  rep.intra_cosine = intra / static_cast<double>(n_intra);
  rep.inter_cosine = inter / static_cast<double>(n_inter);

  KMeansOptions opt;
  opt.clusters = shapes.size();
  opt.n_init = n_init;
  const auto clusters = kmeans(rep.embeddings, rep.dim, opt, rng);
  rep.ami = ami(rep.shape_of, clusters.assignment);
  rep.inertia_traces = clusters.inertia_traces;
  rep.pca = pca_2d(rep.embeddings, rep.dim);
  return rep;
}

InvarianceReport invariance_report(const EncoderParams& params, std::span<const PointCloud> shapes,
                                   std::size_t n_rotations, int layer_tap, Rng& rng, std::size_t n_init) {
  params.arch.tap_dim(layer_tap);
  return invariance_report(
      [&](std::size_t, const PointCloud& posed) { return embed(params, posed, layer_tap); }, shapes, n_rotations,
      rng, n_init);
}

}  // namespace shapecon
