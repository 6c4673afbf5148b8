// Command-line front end: dataset generation, training, embedding and the
// evaluation protocols. Machine-readable results go to stdout as key=value
// lines or CSV; diagnostics go to stderr.

#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shapecon/binary_io.hpp"
#include "shapecon/data.hpp"
#include "shapecon/error.hpp"
#include "shapecon/evaluation.hpp"
#include "shapecon/gradcheck.hpp"
#include "shapecon/strings.hpp"
#include "shapecon/training.hpp"

using namespace shapecon;

namespace {

struct UsageError : Error {
  using Error::Error;
};

std::string fmt(double v) { return format_double(v); }

std::string default_labels_path(const std::string& table_path) { return table_path + ".labels.csv"; }

EmbeddingTable load_table(const std::string& path, const std::string& labels) {
  EmbeddingTable t = read_table(path);
  if (!labels.empty()) attach_labels(t, labels);
  return t;
}

// ---------------------------------------------------------------- gen-data

struct GenData {
  std::string out;
  std::vector<std::string> classes;
  std::size_t per_class = 40;
  std::size_t per_class_test = 0;
  std::size_t points = 2048;
  double jitter = 0.4;
  double noise = 0.01;
  bool unaligned = false;
  std::uint64_t seed = 0;
};

int run_gen_data(const GenData& g) {
  SynthSpec spec;
  if (!g.classes.empty()) {
    spec.classes.clear();
    for (const auto& c : g.classes) spec.classes.push_back(parse_shape_class(c));
  }
  spec.per_class = g.per_class;
  spec.per_class_test = g.per_class_test;
  spec.n_points = g.points;
  spec.jitter = g.jitter;
  spec.noise_sigma = g.noise;
  spec.aligned = !g.unaligned;
  Rng rng(g.seed);
  const Dataset ds = synth_dataset(spec, rng);
  save_dataset(g.out, ds);
  std::cout << "instances=" << ds.size() << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

struct Train {
  std::string config;
  std::string resume;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // config key -> value, only for flags given
};

int run_train(const Train& t) {
  std::optional<TrainState> resumed;
  RunConfig cfg;
  if (!t.resume.empty()) {
    resumed = load_checkpoint(t.resume);
    cfg = resumed->config;
  }
  if (!t.config.empty()) cfg = RunConfig::load(t.config, cfg);
  for (const auto& [key, value] : t.flags) cfg.set(key, value);
  for (const auto& kv : t.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (cfg.dataset.empty()) throw UsageError("no dataset given (config key 'dataset' or --dataset)");
  cfg.validate();

  const Dataset ds = load_dataset(cfg.dataset);
  const auto clouds = training_clouds(ds, cfg);
  TrainState st = resumed ? std::move(*resumed) : init_training(cfg, clouds.size());
  if (resumed) {
    if (!(st.config.arch == cfg.arch)) throw Error("cannot change the architecture of a resumed run");
    if (st.bank.rows != clouds.size()) throw Error("resumed run was trained on a different number of instances");
    st.config = cfg;
  }
  std::cerr << "training on " << clouds.size() << " instances, " << st.params.parameter_count()
            << " parameters\n";
  train(clouds, st, [&](const TrainState& s) {
    save_checkpoint(cfg.checkpoint, s);
    std::cout << "epoch=" << s.epoch << " step=" << s.step << " loss=" << fmt(s.epoch_losses.back()) << std::endl;
  });
  std::cout << "checkpoint=" << cfg.checkpoint << "\n";
  return 0;
}

// ------------------------------------------------------------------- embed

struct Embed {
  std::string ckpt, dataset, out, labels_out, split = "all";
  int layer = 0;
  std::optional<std::size_t> points;
  std::uint64_t seed = 0;
};

int run_embed(const Embed& e) {
  const TrainState st = load_checkpoint(e.ckpt);
  const int layer = e.layer ? e.layer : st.config.layer_tap;
  Dataset ds = load_dataset(e.dataset);
  if (e.split == "train") ds = ds.subset(Split::train);
  else if (e.split == "test") ds = ds.subset(Split::test);
  else if (e.split != "all") throw UsageError("--split must be train, test or all");
  if (ds.size() == 0) throw Error("no instances in split '" + e.split + "'");

  std::vector<PointCloud> clouds;
  std::vector<std::pair<std::string, int>> label_rows;
  bool labeled = true;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    clouds.push_back(ds.instances[i].cloud);
    if (!ds.instances[i].label) labeled = false;
    label_rows.emplace_back(std::to_string(i), ds.instances[i].label.value_or(-1));
  }
  const std::size_t points = e.points.value_or(st.config.encode_points);
  const EmbeddingTable table = embed_clouds(st.params, clouds, layer, points, e.seed);
  write_table(e.out, table);
  std::cout << "rows=" << table.rows() << " dim=" << table.dim << "\n";
  if (labeled) {
    const std::string path = e.labels_out.empty() ? default_labels_path(e.out) : e.labels_out;
    write_labels_csv(path, label_rows);
    std::cout << "labels=" << path << "\n";
  }
  return 0;
}

// ----------------------------------------------------------------- cluster

struct Cluster {
  std::string embeddings, labels, assignments;
  std::size_t k = 40, n_init = 10, max_iter = 300;
  std::uint64_t seed = 0;
};

int run_cluster(const Cluster& c) {
  const EmbeddingTable table = load_table(c.embeddings, c.labels);
  KMeansOptions opt;
  opt.clusters = c.k;
  opt.n_init = c.n_init;
  opt.max_iter = c.max_iter;
  Rng rng(c.seed);
  const auto res = kmeans(table, opt, rng);
  std::cout << "inertia=" << fmt(res.inertia) << "\n";
  if (res.ami) std::cout << "ami=" << fmt(*res.ami) << "\n";
  if (!c.assignments.empty()) {
    std::string csv = "id,cluster\n";
    for (std::size_t i = 0; i < table.rows(); ++i) {
      csv += std::to_string(table.ids[i]) + "," + std::to_string(res.assignment[i]) + "\n";
    }
    binio::write_file(c.assignments, csv);
  }
  return 0;
}

// ------------------------------------------------------------------- probe

struct Probe {
  std::string train_emb, test_emb, train_labels, test_labels;
};

int run_probe(const Probe& p) {
  const auto train = load_table(p.train_emb, p.train_labels.empty() ? default_labels_path(p.train_emb) : p.train_labels);
  const auto test = load_table(p.test_emb, p.test_labels.empty() ? default_labels_path(p.test_emb) : p.test_labels);
  std::cout << "accuracy=" << fmt(linear_probe(train, test)) << "\n";
  return 0;
}

// ---------------------------------------------------------------- retrieve

struct Retrieve {
  std::string embeddings;
  std::int64_t query = 0;
  std::size_t n = 5;
};

int run_retrieve(const Retrieve& r) {
  const EmbeddingTable table = read_table(r.embeddings);
  const auto hits = retrieve(table, r.query, r.n);
  std::cout << "rank,id,distance\n";
  for (std::size_t i = 0; i < hits.size(); ++i) {
    std::cout << i + 1 << "," << hits[i].id << "," << fmt(hits[i].distance) << "\n";
  }
  return 0;
}

// --------------------------------------------------------------- invariance

struct Invariance {
  std::string ckpt, dataset, pca_out;
  std::size_t shapes = 10, rotations = 50, n_init = 10;
  int layer = 0;
  std::optional<std::size_t> points;
  std::uint64_t seed = 0;
};

int run_invariance(const Invariance& v) {
  const TrainState st = load_checkpoint(v.ckpt);
  const int layer = v.layer ? v.layer : st.config.layer_tap;
  std::vector<PointCloud> shapes;
  if (!v.dataset.empty()) {
    const Dataset ds = load_dataset(v.dataset);
    Dataset pool = ds.subset(Split::test);
    if (pool.size() < v.shapes) pool = ds;
    if (pool.size() < v.shapes) throw Error("dataset has fewer than --shapes instances");
    for (std::size_t i = 0; i < v.shapes; ++i) shapes.push_back(pool.instances[i].cloud);
  } else {
    SynthSpec spec;
    spec.per_class = (v.shapes + spec.classes.size() - 1) / spec.classes.size();
    spec.n_points = st.config.points_per_cloud;
    Rng gen(mix_seed(v.seed, 0x686f6c64));
    const Dataset ds = synth_dataset(spec, gen);
    // Round-robin over classes so small counts still mix classes.
    for (std::size_t i = 0; i < v.shapes; ++i) {
      const std::size_t c = i % spec.classes.size(), j = i / spec.classes.size();
      shapes.push_back(ds.instances[c * spec.per_class + j].cloud);
    }
  }
  const std::size_t points = v.points.value_or(st.config.encode_points);
  if (points > 0) {
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      Rng r(mix_seed(v.seed, i));
      shapes[i] = resample_to(shapes[i], points, r);
    }
  }
  Rng rng(v.seed);
  const auto rep = invariance_report(st.params, shapes, v.rotations, layer, rng, v.n_init);
  std::cout << "ami=" << fmt(rep.ami) << "\n"
            << "intra_cosine=" << fmt(rep.intra_cosine) << "\n"
            << "inter_cosine=" << fmt(rep.inter_cosine) << "\n";
  if (!v.pca_out.empty()) {
    std::string csv = "shape,pc1,pc2\n";
    for (std::size_t i = 0; i < rep.shape_of.size(); ++i) {
      csv += std::to_string(rep.shape_of[i]) + "," + fmt(rep.pca[2 * i]) + "," + fmt(rep.pca[2 * i + 1]) + "\n";
    }
    binio::write_file(v.pca_out, csv);
  }
  return 0;
}

// --------------------------------------------------------------- gradcheck

struct Gradcheck {
  std::string loss = "both";
  std::size_t coords = 200, batch = 4, points = 64;
  double tolerance = 1e-4;
  double step = GradcheckOptions{}.step;
  std::uint64_t seed = 0;
};

int run_gradcheck(const Gradcheck& g) {
  std::vector<LossKind> kinds;
  if (g.loss == "both") kinds = {LossKind::nce, LossKind::infonce};
  else kinds = {parse_loss_kind(g.loss)};
  double worst = 0.0;
  for (LossKind kind : kinds) {
    GradcheckOptions opt;
    opt.loss = kind;
    opt.coordinates = g.coords;
    opt.batch = g.batch;
    opt.points = g.points;
    opt.seed = g.seed;
    opt.step = g.step;
    const auto r = gradcheck(opt);
    std::cout << "loss=" << to_string(kind) << " max_rel_error=" << fmt(r.max_rel_error) << " checked=" << r.checked
              << " skipped=" << r.skipped << " nonzero=" << r.nonzero << " worst=" << r.worst << " analytic=" << fmt(r.worst_analytic)
              << " numeric=" << fmt(r.worst_numeric) << "\n";
    worst = std::max(worst, r.max_rel_error);
  }
  std::cout << "max_rel_error=" << fmt(worst) << "\n";
  if (!(worst < g.tolerance)) {
    std::cerr << "gradient check failed: " << fmt(worst) << " >= " << fmt(g.tolerance) << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive point-cloud representation learning"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Maximum worker threads (0: runtime default)")->check(CLI::NonNegativeNumber);

  GenData gen;
  auto* c_gen = app.add_subcommand("gen-data", "Write a synthetic shape dataset");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--classes", gen.classes, "Subset of sphere,cube,cylinder,cone,torus")->delimiter(',');
  c_gen->add_option("--per-class", gen.per_class, "Training instances per class");
  c_gen->add_option("--per-class-test", gen.per_class_test, "Test instances per class");
  c_gen->add_option("--points", gen.points, "Points per cloud");
  c_gen->add_option("--jitter", gen.jitter, "Per-axis scale jitter");
  c_gen->add_option("--noise", gen.noise, "Coordinate noise sigma");
  c_gen->add_flag("--unaligned", gen.unaligned, "Apply one fixed random rotation per instance");
  c_gen->add_option("--seed", gen.seed, "Random seed");

  Train tr;
  auto* c_train = app.add_subcommand("train", "Train an encoder; checkpoints after every epoch");
  c_train->add_option("--config", tr.config, "key = value run configuration file");
  c_train->add_option("--resume", tr.resume, "Checkpoint to continue from");
  c_train->add_option("--set", tr.sets, "Override any config key (key=value, repeatable)");
  const std::vector<std::pair<std::string, std::string>> train_flags = {
      {"--dataset", "dataset"},       {"--checkpoint", "checkpoint"}, {"--epochs", "epochs"},
      {"--max-steps", "max_steps"},   {"--loss", "loss"},             {"--view", "view"},
      {"--seed", "seed"},             {"--lr", "lr"},                 {"--batch-size", "batch_size"},
      {"--k", "k"},                   {"--encode-points", "encode_points"}, {"--layer-tap", "layer_tap"}};
  std::map<std::string, std::string> train_values;
  for (const auto& [flag, key] : train_flags) c_train->add_option(flag, train_values[key], "Overrides config key " + key);

  Embed em;
  auto* c_embed = app.add_subcommand("embed", "Write an embedding table for a dataset");
  c_embed->add_option("--ckpt", em.ckpt, "Checkpoint")->required();
  c_embed->add_option("--dataset", em.dataset, "Dataset directory")->required();
  c_embed->add_option("--out", em.out, "Output .i3de path")->required();
  c_embed->add_option("--layer", em.layer, "Layer tap (6 or 7; default from the checkpoint)");
  c_embed->add_option("--labels-out", em.labels_out, "Label CSV path (default <out>.labels.csv)");
  c_embed->add_option("--split", em.split, "train, test or all");
  c_embed->add_option("--points", em.points, "Resample clouds to this size (default from the checkpoint)");
  c_embed->add_option("--seed", em.seed, "Resampling seed");

  Cluster cl;
  auto* c_cluster = app.add_subcommand("cluster", "k-means over an embedding table");
  c_cluster->add_option("--embeddings", cl.embeddings, "Embedding table")->required();
  c_cluster->add_option("--labels", cl.labels, "id,label CSV; enables AMI");
  c_cluster->add_option("--k", cl.k, "Number of clusters");
  c_cluster->add_option("--n-init", cl.n_init, "Restarts");
  c_cluster->add_option("--max-iter", cl.max_iter, "Lloyd iterations per restart");
  c_cluster->add_option("--seed", cl.seed, "Random seed");
  c_cluster->add_option("--assignments", cl.assignments, "Write id,cluster CSV here");

  Probe pr;
  auto* c_probe = app.add_subcommand("probe", "Linear probe accuracy");
  c_probe->add_option("--train-emb", pr.train_emb, "Training embeddings")->required();
  c_probe->add_option("--test-emb", pr.test_emb, "Test embeddings")->required();
  c_probe->add_option("--train-labels", pr.train_labels, "Default <train-emb>.labels.csv");
  c_probe->add_option("--test-labels", pr.test_labels, "Default <test-emb>.labels.csv");

  Retrieve re;
  auto* c_retrieve = app.add_subcommand("retrieve", "Nearest neighbours of one row");
  c_retrieve->add_option("--embeddings", re.embeddings, "Embedding table")->required();
  c_retrieve->add_option("--query", re.query, "Query id")->required();
  c_retrieve->add_option("--n", re.n, "Number of neighbours");

  Invariance inv;
  auto* c_inv = app.add_subcommand("invariance", "Rotation-invariance report");
  c_inv->add_option("--ckpt", inv.ckpt, "Checkpoint")->required();
  c_inv->add_option("--shapes", inv.shapes, "Number of shapes");
  c_inv->add_option("--rotations", inv.rotations, "Random poses per shape");
  c_inv->add_option("--dataset", inv.dataset, "Take shapes from this dataset (test split first)");
  c_inv->add_option("--layer", inv.layer, "Layer tap (default from the checkpoint)");
  c_inv->add_option("--points", inv.points, "Resample shapes to this size (default from the checkpoint)");
  c_inv->add_option("--n-init", inv.n_init, "k-means restarts");
  c_inv->add_option("--pca-out", inv.pca_out, "Write shape,pc1,pc2 CSV here");
  c_inv->add_option("--seed", inv.seed, "Random seed");

  Gradcheck gc;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  c_grad->add_option("--loss", gc.loss, "nce, infonce or both");
  c_grad->add_option("--coords", gc.coords, "Coordinates per loss");
  c_grad->add_option("--batch", gc.batch, "Batch size");
  c_grad->add_option("--points", gc.points, "Points per cloud");
  c_grad->add_option("--tolerance", gc.tolerance, "Maximum accepted relative error");
  c_grad->add_option("--step", gc.step, "Finite-difference step");
  c_grad->add_option("--seed", gc.seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (auto* sub : app.get_subcommands()) failing = sub;
    std::cerr << failing->help();
    return 1;
  }

  if (threads > 0) omp_set_num_threads(threads);
  try {
    if (c_gen->parsed()) return run_gen_data(gen);
    if (c_train->parsed()) {
      for (const auto& [flag, key] : train_flags) {
        if (c_train->count(flag) > 0) tr.flags[key] = train_values[key];
      }
      return run_train(tr);
    }
    if (c_embed->parsed()) return run_embed(em);
    if (c_cluster->parsed()) return run_cluster(cl);
    if (c_probe->parsed()) return run_probe(pr);
    if (c_retrieve->parsed()) return run_retrieve(re);
    if (c_inv->parsed()) return run_invariance(inv);
    if (c_grad->parsed()) return run_gradcheck(gc);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
