#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shapecon/encoder.hpp"
#include "shapecon/geometry.hpp"
#include "shapecon/rng.hpp"

namespace shapecon {

// M x d unit-norm embeddings with parallel ids and optional labels.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<double> data;
  std::vector<std::int64_t> ids;
  std::vector<int> labels;  // empty when unlabeled

  std::size_t rows() const { return dim ? data.size() / dim : 0; }
  std::span<const double> row(std::size_t i) const { return std::span<const double>(data).subspan(i * dim, dim); }
  bool has_labels() const { return !labels.empty(); }

  // Throws on shape mismatch, duplicate ids or a row norm off by more than 1e-6.
  void validate() const;

  // Ids 0..M-1.
  static EmbeddingTable from_rows(std::vector<double> data, std::size_t dim, std::vector<int> labels = {});
};

// "i3de <version> <M> <d>\n" followed by little-endian float64 rows. Ids are
// the row indices.
void write_table(const std::string& path, const EmbeddingTable& table);
EmbeddingTable read_table(const std::string& path);
// Attaches labels from an "id,label" CSV (ids are row indices); every row must be labeled.
void attach_labels(EmbeddingTable& table, const std::string& labels_csv);

// Embeds clouds with a trained encoder. When encode_points is nonzero each
// cloud is first resampled to that size with a stream derived from
// (seed, row), so the table does not depend on the thread count.
EmbeddingTable embed_clouds(const EncoderParams& params, std::span<const PointCloud> clouds, int layer_tap,
                            std::size_t encode_points, std::uint64_t seed, std::vector<int> labels = {});

struct KMeansOptions {
  std::size_t clusters = 40;
  std::size_t n_init = 10;
  std::size_t max_iter = 300;
};

struct ClusteringResult {
  std::vector<int> assignment;
  double inertia = 0.0;
  std::vector<double> centroids;                  // clusters x d
  std::size_t best_restart = 0;
  std::vector<std::vector<double>> inertia_traces;  // per restart, one entry per assignment step
  std::optional<double> ami;
};

// k-means++ seeding and Lloyd iterations until the assignment stops changing
// or max_iter; empty clusters are re-seeded from the point farthest from its
// centroid. Restarts run in parallel with per-restart streams drawn serially
// from `rng`; the lowest inertia wins, ties to the lower restart index.
ClusteringResult kmeans(std::span<const double> data, std::size_t dim, const KMeansOptions& options, Rng& rng);
ClusteringResult kmeans(const EmbeddingTable& table, const KMeansOptions& options, Rng& rng);

namespace reference {
// Same algorithm with restarts run one after another.
ClusteringResult kmeans(std::span<const double> data, std::size_t dim, const KMeansOptions& options, Rng& rng);
}  // namespace reference

// Adjusted mutual information with arithmetic-mean normalization and the
// exact hypergeometric expected MI; natural logarithms.
double ami(std::span<const int> labels_a, std::span<const int> labels_b);
double mutual_information(std::span<const int> labels_a, std::span<const int> labels_b);
double expected_mutual_information(std::span<const int> labels_a, std::span<const int> labels_b);
double entropy(std::span<const int> labels);

struct ProbeOptions {
  double lambda = 1e-3;
  std::size_t iterations = 500;
  double learning_rate = 0.1;
  double decay = 0.5;
  std::size_t decay_every = 100;
};

// One-vs-rest linear classifiers trained by full-batch subgradient descent on
// the L2-regularized hinge loss; returns test accuracy.
double linear_probe(const EmbeddingTable& train, const EmbeddingTable& test, const ProbeOptions& options = {});

struct Neighbor {
  std::int64_t id;
  double distance;
};

// n nearest rows to the query by euclidean distance, query excluded, ties by id.
std::vector<Neighbor> retrieve(const EmbeddingTable& table, std::int64_t query_id, std::size_t n);

// First two principal component scores of the rows (M x 2).
std::vector<double> pca_2d(std::span<const double> data, std::size_t dim);

struct InvarianceReport {
  double ami = 0.0;
  double intra_cosine = 0.0;   // mean over pairs of poses of the same shape
  double inter_cosine = 0.0;   // mean over pairs of poses of different shapes
  std::vector<int> shape_of;   // per embedding
  std::vector<double> embeddings;
  std::size_t dim = 0;
  std::vector<double> pca;     // M x 2
  std::vector<std::vector<double>> inertia_traces;  // of the clustering restarts
};

// Embeds every (shape, random SO(3) pose) pair and clusters with k = #shapes.
using ShapeEmbedder = std::function<std::vector<double>(std::size_t shape, const PointCloud& posed)>;
InvarianceReport invariance_report(const ShapeEmbedder& embedder, std::span<const PointCloud> shapes,
                                   std::size_t n_rotations, Rng& rng, std::size_t n_init = 10);
InvarianceReport invariance_report(const EncoderParams& params, std::span<const PointCloud> shapes,
                                   std::size_t n_rotations, int layer_tap, Rng& rng, std::size_t n_init = 10);

}  // namespace shapecon
