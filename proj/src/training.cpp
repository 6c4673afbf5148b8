#include "shapecon/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "shapecon/binary_io.hpp"
#include "shapecon/error.hpp"
#include "shapecon/strings.hpp"

namespace shapecon {

const char* to_string(LossKind kind) { return kind == LossKind::infonce ? "infonce" : "nce"; }

LossKind parse_loss_kind(const std::string& name) {
  if (name == "infonce") return LossKind::infonce;
  if (name == "nce") return LossKind::nce;
  throw Error("unknown loss '" + name + "' (expected infonce or nce)");
}

// ----------------------------------------------------------------- config

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error(key + ": expected true or false, got '" + value + "'");
}

std::string widths_text(const EncoderArch& arch) {
  std::string s;
  for (std::size_t i = 0; i < arch.widths.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(arch.widths[i]);
  }
  return s;
}

}  // namespace

bool RunConfig::anchor_rotates() const {
  if (anchor_so3 == "auto") return view_spec().contains_so3_rotation();
  return parse_bool("anchor_so3", anchor_so3);
}

void RunConfig::validate() const {
  auto positive = [](const char* key, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(std::string(key) + " must be positive");
  };
  positive("batch_size", static_cast<double>(batch_size));
  positive("points_per_cloud", static_cast<double>(points_per_cloud));
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error("lr must be non-negative");
  positive("tau", tau);
  positive("k", static_cast<double>(k));
  positive("epochs", static_cast<double>(epochs));
  positive("early_stop_patience", static_cast<double>(early_stop_patience));
  if (layer_tap != 6 && layer_tap != 7) throw Error("layer_tap must be 6 or 7");
  if (!(bank_momentum >= 0.0 && bank_momentum < 1.0)) throw Error("bank_momentum must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw Error("adam betas must lie in [0, 1)");
  positive("eps", eps);
  if (anchor_so3 != "auto") parse_bool("anchor_so3", anchor_so3);
  view_spec().validate();
  arch.validate();
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string what = "config key '" + key + "'";
  if (key == "batch_size") batch_size = parse_size(value, what);
  else if (key == "points_per_cloud") points_per_cloud = parse_size(value, what);
  else if (key == "encode_points") encode_points = parse_size(value, what);
  else if (key == "lr") lr = parse_double(value, what);
  else if (key == "tau") tau = parse_double(value, what);
  else if (key == "k") k = parse_size(value, what);
  else if (key == "epochs") epochs = parse_size(value, what);
  else if (key == "max_steps") max_steps = parse_size(value, what);
  else if (key == "loss") loss = parse_loss_kind(value);
  else if (key == "view") view = value;
  else if (key == "layer_tap") layer_tap = static_cast<int>(parse_int(value, what));
  else if (key == "bank_momentum") bank_momentum = parse_double(value, what);
  else if (key == "beta1") beta1 = parse_double(value, what);
  else if (key == "beta2") beta2 = parse_double(value, what);
  else if (key == "eps") eps = parse_double(value, what);
  else if (key == "seed") seed = static_cast<std::uint64_t>(parse_size(value, what));
  else if (key == "early_stop_patience") early_stop_patience = parse_size(value, what);
  else if (key == "anchor_so3") anchor_so3 = value;
  else if (key == "dataset") dataset = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "widths") {
    const auto parts = split(value, ',');
    if (parts.size() != arch.widths.size()) throw Error("widths: expected " + std::to_string(arch.widths.size()) + " values");
    for (std::size_t i = 0; i < parts.size(); ++i) arch.widths[i] = parse_size(trim(parts[i]), "widths");
  } else {
    throw Error("unknown config key '" + key + "'");
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "batch_size = " << batch_size << "\n"
      << "points_per_cloud = " << points_per_cloud << "\n"
      << "encode_points = " << encode_points << "\n"
      << "lr = " << format_double(lr) << "\n"
      << "tau = " << format_double(tau) << "\n"
      << "k = " << k << "\n"
      << "epochs = " << epochs << "\n"
      << "max_steps = " << max_steps << "\n"
      << "loss = " << to_string(loss) << "\n"
      << "view = " << view << "\n"
      << "layer_tap = " << layer_tap << "\n"
      << "bank_momentum = " << format_double(bank_momentum) << "\n"
      << "beta1 = " << format_double(beta1) << "\n"
      << "beta2 = " << format_double(beta2) << "\n"
      << "eps = " << format_double(eps) << "\n"
      << "seed = " << seed << "\n"
      << "early_stop_patience = " << early_stop_patience << "\n"
      << "anchor_so3 = " << anchor_so3 << "\n"
      << "dataset = " << dataset << "\n"
      << "checkpoint = " << checkpoint << "\n"
      << "widths = " << widths_text(arch) << "\n";
  return out.str();
}

RunConfig RunConfig::parse(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(lineno, "missing key");
    try {
      base.set(key, value);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return base;
}

RunConfig RunConfig::parse(const std::string& text) { return parse(text, RunConfig{}); }

RunConfig RunConfig::load(const std::string& path) { return load(path, RunConfig{}); }

RunConfig RunConfig::load(const std::string& path, RunConfig base) {
  return parse(binio::read_file(path), std::move(base));
}

// ------------------------------------------------------------------- adam

AdamState AdamState::zeros(const EncoderArch& arch) {
  AdamState s;
  s.m = EncoderParams::zeros(arch);
  s.v = EncoderParams::zeros(arch);
  return s;
}

namespace {

std::vector<std::span<double>> tensors(EncoderParams& p) {
  std::vector<std::span<double>> out;
  p.for_each_tensor([&](const std::string&, std::span<double> t) { out.push_back(t); });
  return out;
}

std::vector<std::span<const double>> tensors(const EncoderParams& p) {
  std::vector<std::span<const double>> out;
  p.for_each_tensor([&](const std::string&, std::span<const double> t) { out.push_back(t); });
  return out;
}

}  // namespace

void adam_step(EncoderParams& params, const Gradients& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  if (!(params.arch == grads.arch) || !(params.arch == state.m.arch) || !(params.arch == state.v.arch)) {
    throw Error("adam: shape mismatch");
  }
  const auto g = tensors(grads);
  for (const auto& t : g) {
    for (double x : t) {
      if (!std::isfinite(x)) throw Error("diverged");
    }
  }
  auto p = tensors(params);
  auto m = tensors(state.m);
  auto v = tensors(state.v);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto n = static_cast<std::ptrdiff_t>(p[k].size());
    double* pk = p[k].data();
    double* mk = m[k].data();
    double* vk = v[k].data();
    const double* gk = g[k].data();
#pragma omp parallel for simd schedule(static) if (n > 65536)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      mk[i] = beta1 * mk[i] + (1.0 - beta1) * gk[i];
      vk[i] = beta2 * vk[i] + (1.0 - beta2) * gk[i] * gk[i];
      pk[i] -= lr * (mk[i] / c1) / (std::sqrt(vk[i] / c2) + eps);
    }
  }
}

// ---------------------------------------------------------------- trainer

bool TrainState::operator==(const TrainState& o) const {
  return config.to_text() == o.config.to_text() && params == o.params && adam == o.adam && bank == o.bank &&
         epoch == o.epoch && step == o.step && std::bit_cast<std::uint64_t>(best_loss) ==
         std::bit_cast<std::uint64_t>(o.best_loss) && epochs_since_best == o.epochs_since_best &&
         epoch_losses == o.epoch_losses && shuffle_rng == o.shuffle_rng && view_rng == o.view_rng &&
         negative_rng == o.negative_rng;
}

TrainState init_training(const RunConfig& config, std::size_t rows) {
  config.validate();
  if (rows == 0) throw Error("training needs a nonempty dataset");
  TrainState s;
  s.config = config;
  Rng root(config.seed);
  Rng init_rng = root.split(1);
  Rng bank_rng = root.split(2);
  s.shuffle_rng = root.split(3);
  s.view_rng = root.split(4);
  s.negative_rng = root.split(5);
  s.params = init_params(init_rng, config.arch);
  s.adam = AdamState::zeros(config.arch);
  s.bank = bank_init(rows, config.arch.embedding_dim(), bank_rng, config.bank_momentum);
  return s;
}

std::vector<PointCloud> training_clouds(const Dataset& dataset, const RunConfig& config) {
  std::vector<PointCloud> out;
  std::uint64_t j = 0;
  for (const auto& inst : dataset.instances) {
    ++j;
    if (inst.split != Split::train) continue;
    if (inst.cloud.size() == config.points_per_cloud) {
      out.push_back(inst.cloud);
    } else {
      Rng rng(mix_seed(config.seed ^ 0x7265'7361'6d70ULL, j));
      out.push_back(resample_to(inst.cloud, config.points_per_cloud, rng));
    }
  }
  if (out.empty()) throw Error("dataset has no training instances");
  return out;
}

ViewPair make_views(const PointCloud& cloud, const RunConfig& config, const ViewSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  Rng anchor_rng = rng.split(1);
  Rng view_rng = rng.split(2);
  PointCloud posed = config.anchor_rotates() ? rotate(cloud, random_unit_quaternion(anchor_rng)) : cloud;
  PointCloud view = apply_view(spec, posed, view_rng);
  if (config.encode_points > 0) {
    posed = resample_to(posed, config.encode_points, anchor_rng);
    view = resample_to(view, config.encode_points, view_rng);
  }
  return {std::move(posed), std::move(view)};
}

double train_epoch(std::span<const PointCloud> clouds, TrainState& st) {
  const RunConfig& cfg = st.config;
  const std::size_t m = clouds.size();
  if (m != st.bank.rows) throw Error("memory bank size does not match the dataset");
  const std::size_t n = std::min(cfg.batch_size, m);
  if (cfg.loss == LossKind::infonce && n < 2) throw Error("info_nce: batch size must be at least 2");
  if (cfg.loss == LossKind::nce && m < 2) throw Error("nce: dataset needs at least two instances");
  const ViewSpec spec = cfg.view_spec();
  const std::size_t d = st.params.arch.embedding_dim();

  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[st.shuffle_rng.uniform_index(i)]);

  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start + n <= m; start += n) {
    if (cfg.max_steps > 0 && st.step >= cfg.max_steps) break;
    const std::span<const std::size_t> idx(order.data() + start, n);

    std::vector<std::uint64_t> seeds(n);
    for (auto& s : seeds) s = st.view_rng.next_u64();
    std::vector<PointCloud> batch(2 * n);
    std::vector<std::string> failures(n);
    const auto ns = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t ii = 0; ii < ns; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      try {
        auto pair = make_views(clouds[idx[i]], cfg, spec, seeds[i]);
        batch[i] = std::move(pair.anchor);
        batch[n + i] = std::move(pair.view);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
    for (const auto& f : failures) {
      if (!f.empty()) throw Error(f);
    }

    const auto passes = forward_batch(st.params, batch);
    const auto all = embeddings_of(passes, 7);
    const std::span<const double> za(all.data(), n * d);
    const std::span<const double> zb(all.data() + n * d, n * d);

    LossResult r;
    if (cfg.loss == LossKind::infonce) {
      r = info_nce_loss(za, zb, d, st.params.critic, cfg.tau);
    } else {
      std::vector<std::vector<std::size_t>> negatives(n);
      for (std::size_t i = 0; i < n; ++i) negatives[i] = sample_negatives(m, cfg.k, idx[i], st.negative_rng);
      if (!st.bank.z) bank_calibrate_z(st.bank, raw_negative_scores(za, d, st.bank, negatives, st.params.critic, cfg.tau));
      r = nce_loss(za, idx, d, st.bank, negatives, st.params.critic, cfg.tau);
    }
    if (!std::isfinite(r.loss)) throw Error("diverged");

    // The NCE positive is a bank row, so only the anchor branch gets gradient.
    std::vector<double> upstream(r.grad_a);
    std::span<const ForwardPass> active(passes);
    if (r.grad_b.empty()) {
      active = active.first(n);
    } else {
      upstream.insert(upstream.end(), r.grad_b.begin(), r.grad_b.end());
    }
    Gradients grads = EncoderParams::zeros(st.params.arch);
    backward(st.params, active, upstream, grads);
    grads.critic = r.grad_critic;
    adam_step(st.params, grads, st.adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);

    for (std::size_t i = 0; i < n; ++i) bank_update(st.bank, idx[i], zb.subspan(i * d, d));
    total += r.loss;
    ++batches;
    ++st.step;
  }
  if (batches == 0) throw Error("no training steps were taken");
  return total / static_cast<double>(batches);
}

bool record_epoch(TrainState& st, double loss) {
  ++st.epoch;
  st.epoch_losses.push_back(loss);
  if (loss < st.best_loss) {
    st.best_loss = loss;
    st.epochs_since_best = 0;
  } else {
    ++st.epochs_since_best;
  }
  if (st.epoch >= st.config.epochs) return true;
  if (st.config.max_steps > 0 && st.step >= st.config.max_steps) return true;
  return st.epochs_since_best >= st.config.early_stop_patience;
}

void train(std::span<const PointCloud> clouds, TrainState& st, const std::function<void(const TrainState&)>& on_epoch) {
  auto finished = [&] {
    return st.epoch >= st.config.epochs || (st.config.max_steps > 0 && st.step >= st.config.max_steps) ||
           st.epochs_since_best >= st.config.early_stop_patience;
  };
  while (!finished()) {
    const double loss = train_epoch(clouds, st);
    const bool stop = record_epoch(st, loss);
    if (on_epoch) on_epoch(st);
    if (stop) break;
  }
}

// ------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[4] = {'I', '3', 'D', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_string(std::string& buf, const std::string& s) {
  binio::put_u32(buf, static_cast<std::uint32_t>(s.size()));
  buf += s;
}

std::string get_string(binio::Reader& r) { return r.bytes(r.u32()); }

void put_params(std::string& buf, const EncoderParams& p) {
  for (const auto& t : tensors(p)) binio::put_f64s(buf, t);
}

void get_params(binio::Reader& r, EncoderParams& p) {
  for (auto t : tensors(p)) r.f64s(t);
}

std::vector<std::pair<std::string, std::string>> sections(const TrainState& st) {
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("config", st.config.to_text());

  std::string arch;
  for (std::size_t w : st.params.arch.widths) binio::put_u64(arch, w);
  out.emplace_back("arch", arch);

  std::string params;
  put_params(params, st.params);
  out.emplace_back("params", params);

  std::string adam;
  binio::put_u64(adam, st.adam.step);
  put_params(adam, st.adam.m);
  put_params(adam, st.adam.v);
  out.emplace_back("adam", adam);

  std::string bank;
  binio::put_u64(bank, st.bank.rows);
  binio::put_u64(bank, st.bank.dim);
  binio::put_f64(bank, st.bank.momentum);
  binio::put_u32(bank, st.bank.z ? 1 : 0);
  binio::put_f64(bank, st.bank.z.value_or(0.0));
  binio::put_f64s(bank, st.bank.data);
  out.emplace_back("bank", bank);

  std::string epoch;
  binio::put_u64(epoch, st.epoch);
  binio::put_u64(epoch, st.step);
  binio::put_f64(epoch, st.best_loss);
  binio::put_u64(epoch, st.epochs_since_best);
  binio::put_u64(epoch, st.epoch_losses.size());
  binio::put_f64s(epoch, st.epoch_losses);
  out.emplace_back("epoch", epoch);

  std::string rng;
  put_string(rng, st.shuffle_rng.state());
  put_string(rng, st.view_rng.state());
  put_string(rng, st.negative_rng.state());
  out.emplace_back("rng", rng);
  return out;
}

void finish(const binio::Reader& r, const std::string& name) {
  if (r.remaining() != 0) throw Error("checkpoint section '" + name + "' has trailing bytes");
}

}  // namespace

std::string encode_checkpoint(const TrainState& st) {
  const auto secs = sections(st);
  std::string header(kMagic, 4);
  binio::put_u32(header, kVersion);
  binio::put_u32(header, static_cast<std::uint32_t>(secs.size()));
  std::size_t table = 0;
  for (const auto& [name, body] : secs) table += 4 + name.size() + 16;
  std::uint64_t offset = header.size() + table;
  for (const auto& [name, body] : secs) {
    put_string(header, name);
    binio::put_u64(header, offset);
    binio::put_u64(header, body.size());
    offset += body.size();
  }
  for (const auto& [name, body] : secs) header += body;
  return header;
}

TrainState decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, kMagic, 4) != 0) throw Error("not a checkpoint");
  binio::Reader head(bytes.data() + 4, bytes.size() - 4, "checkpoint header");
  const std::uint32_t version = head.u32();
  if (version != kVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  std::map<std::string, std::string> body;
  std::uint64_t end = 0;
  try {
    const std::uint32_t count = head.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::string name = get_string(head);
      const std::uint64_t off = head.u64();
      const std::uint64_t len = head.u64();
      if (off > bytes.size() || len > bytes.size() - off) throw Error("truncated section '" + name + "'");
      body[name] = bytes.substr(off, len);
      end = std::max(end, off + len);
    }
  } catch (const Error& e) {
    if (std::string(e.what()).rfind("truncated section", 0) == 0) throw;
    throw Error("truncated section table");
  }
  if (end < bytes.size()) throw Error("checkpoint has trailing bytes");
  auto section = [&](const std::string& name) -> const std::string& {
    const auto it = body.find(name);
    if (it == body.end()) throw Error("checkpoint is missing section '" + name + "'");
    return it->second;
  };
  auto reader = [&](const std::string& name) {
    const std::string& b = section(name);
    return binio::Reader(b.data(), b.size(), "truncated section '" + name + "'");
  };

  TrainState st;
  st.config = RunConfig::parse(section("config"));

  EncoderArch arch;
  {
    auto r = reader("arch");
    for (auto& w : arch.widths) w = r.u64();
    finish(r, "arch");
    arch.validate();
  }
  st.params = EncoderParams::zeros(arch);
  {
    auto r = reader("params");
    get_params(r, st.params);
    finish(r, "params");
  }
  st.adam = AdamState::zeros(arch);
  {
    auto r = reader("adam");
    st.adam.step = r.u64();
    get_params(r, st.adam.m);
    get_params(r, st.adam.v);
    finish(r, "adam");
  }
  {
    auto r = reader("bank");
    st.bank.rows = r.u64();
    st.bank.dim = r.u64();
    st.bank.momentum = r.f64();
    const bool has_z = r.u32() != 0;
    const double z = r.f64();
    if (has_z) st.bank.z = z;
    if (st.bank.dim != arch.embedding_dim()) throw Error("checkpoint bank width does not match the encoder");
    r.need(st.bank.rows * st.bank.dim * 8);
    st.bank.data.resize(st.bank.rows * st.bank.dim);
    r.f64s(st.bank.data);
    finish(r, "bank");
  }
  {
    auto r = reader("epoch");
    st.epoch = r.u64();
    st.step = r.u64();
    st.best_loss = r.f64();
    st.epochs_since_best = r.u64();
    const std::uint64_t nl = r.u64();
    r.need(nl * 8);
    st.epoch_losses.resize(nl);
    r.f64s(st.epoch_losses);
    finish(r, "epoch");
  }
  {
    auto r = reader("rng");
    st.shuffle_rng.set_state(get_string(r));
    st.view_rng.set_state(get_string(r));
    st.negative_rng.set_state(get_string(r));
    finish(r, "rng");
  }
  if (!(st.config.arch == arch)) throw Error("checkpoint config and arch sections disagree");
  return st;
}

void save_checkpoint(const std::string& path, const TrainState& state) {
  binio::write_file(path, encode_checkpoint(state));
}

TrainState load_checkpoint(const std::string& path) { return decode_checkpoint(binio::read_file(path)); }

}  // namespace shapecon
