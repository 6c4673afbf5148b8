#include "shapecon/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "shapecon/error.hpp"
#include "shapecon/objective.hpp"

namespace shapecon {

namespace {

struct Problem {
  std::size_t n = 0;
  std::size_t d = 0;
  double tau = 0.07;
  LossKind loss = LossKind::nce;
  std::vector<PointCloud> clouds;  // anchors then views
  MemoryBank bank;
  std::vector<std::size_t> indices;  // bank row of each instance
  std::vector<std::vector<std::size_t>> negatives;
};

struct Eval {
  double loss = 0.0;
  std::uint64_t signature = 0;
  std::vector<ForwardPass> passes;
  LossResult result;
};

Eval evaluate(const Problem& pb, const EncoderParams& params) {
  Eval e;
  e.passes = forward_batch(params, pb.clouds);
  const auto z = embeddings_of(e.passes, 7);
  const std::span<const double> za(z.data(), pb.n * pb.d);
  const std::span<const double> zb(z.data() + pb.n * pb.d, pb.n * pb.d);
  e.result = pb.loss == LossKind::infonce ? info_nce_loss(za, zb, pb.d, params.critic, pb.tau)
                                          : nce_loss(za, pb.indices, pb.d, pb.bank, pb.negatives, params.critic, pb.tau);
  e.loss = e.result.loss;
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : e.passes) h = (h ^ p.branch_signature()) * 1099511628211ULL;
  e.signature = h;
  return e;
}

}  // namespace

GradcheckResult gradcheck(const GradcheckOptions& opt) {
  if (opt.batch < 2) throw Error("gradcheck: batch must be at least 2");
  if (opt.points == 0 || opt.coordinates == 0) throw Error("gradcheck: points and coordinates must be positive");
  opt.arch.validate();
  Rng rng(opt.seed);

  EncoderParams params = init_params(rng, opt.arch);
  // Nonzero biases and a generic critic so that every tensor matters.
  for (auto& layer : params.layers) {
    for (double& b : layer.bias) b = rng.uniform(-0.1, 0.1);
  }
  for (double& w : params.critic) w += rng.uniform(-0.2, 0.2);

  Problem pb;
  pb.n = opt.batch;
  pb.d = opt.arch.embedding_dim();
  pb.tau = opt.tau;
  pb.loss = opt.loss;
  std::vector<PointCloud> views;
  for (std::size_t i = 0; i < pb.n; ++i) {
    std::vector<Vec3> pts(opt.points);
    for (auto& p : pts) p = {rng.normal(), rng.normal() * 0.7, rng.normal() * 0.4};
    PointCloud cloud = normalize_bounding_sphere(PointCloud(std::move(pts)));
    Quaternion q = random_unit_quaternion(rng);
    views.push_back(rotate(cloud, q));
    pb.clouds.push_back(std::move(cloud));
  }
  for (auto& v : views) pb.clouds.push_back(std::move(v));

  if (opt.loss == LossKind::nce) {
    const std::size_t rows = std::max(opt.bank_rows, pb.n);
    pb.bank = bank_init(rows, pb.d, rng);
    for (std::size_t i = 0; i < pb.n; ++i) {
      pb.indices.push_back(i);
      pb.negatives.push_back(sample_negatives(rows, opt.negatives, i, rng));
    }
    const auto passes = forward_batch(params, std::span<const PointCloud>(pb.clouds).first(pb.n));
    const auto za = embeddings_of(passes, 7);
    bank_calibrate_z(pb.bank, raw_negative_scores(za, pb.d, pb.bank, pb.negatives, params.critic, pb.tau));
  }

  const Eval base = evaluate(pb, params);
  std::vector<double> upstream(base.result.grad_a);
  if (base.result.grad_b.empty()) {
    upstream.resize(2 * pb.n * pb.d, 0.0);
  } else {
    upstream.insert(upstream.end(), base.result.grad_b.begin(), base.result.grad_b.end());
  }
  Gradients grads = EncoderParams::zeros(opt.arch);
  backward(params, base.passes, upstream, grads);
  grads.critic = base.result.grad_critic;

  std::vector<std::pair<std::string, std::span<double>>> theta;
  params.for_each_tensor([&](const std::string& name, std::span<double> t) { theta.emplace_back(name, t); });
  std::vector<std::span<const double>> analytic;
  std::as_const(grads).for_each_tensor([&](const std::string&, std::span<const double> t) { analytic.push_back(t); });

  GradcheckResult res;
  // Cycle over tensors until enough coordinates are checked; stencils that
  // cross a branch switch are skipped and redrawn, up to a fixed budget.
  const std::size_t budget = 4 * opt.coordinates;
  for (std::size_t c = 0; res.checked < opt.coordinates && c < budget; ++c) {
    const std::size_t t = c % theta.size();
    auto& [name, tensor] = theta[t];
    const std::size_t k = rng.uniform_index(tensor.size());
    const double orig = tensor[k];
    // Fourth-order central stencil at +-h and +-2h.
    double f[4];
    bool kink = false;
    const double offsets[4] = {2.0, 1.0, -1.0, -2.0};
    for (int s = 0; s < 4; ++s) {
      tensor[k] = orig + offsets[s] * opt.step;
      const Eval e = evaluate(pb, params);
      f[s] = e.loss;
      kink = kink || e.signature != base.signature;
    }
    tensor[k] = orig;
    if (kink) {
      ++res.skipped;
      continue;
    }
    const double numeric = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * opt.step);
    const double a = analytic[t][k];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
    ++res.checked;
    if (a != 0.0) ++res.nonzero;
    if (err >= res.max_rel_error) {
      res.max_rel_error = err;
      res.worst = name + "[" + std::to_string(k) + "]";
      res.worst_analytic = a;
      res.worst_numeric = numeric;
    }
  }
  return res;
}

}  // namespace shapecon
