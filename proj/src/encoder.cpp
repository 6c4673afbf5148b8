#include "shapecon/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "shapecon/error.hpp"

namespace shapecon {

std::size_t EncoderArch::tap_dim(int layer) const {
  if (layer != 6 && layer != 7) throw Error("layer tap must be 6 or 7");
  return widths[static_cast<std::size_t>(layer)];
}

void EncoderArch::validate() const {
  if (widths[0] != 3) throw Error("encoder input width must be 3");
  for (std::size_t w : widths) {
    if (w == 0) throw Error("encoder widths must be positive");
  }
}

EncoderParams EncoderParams::zeros(const EncoderArch& arch) {
  arch.validate();
  EncoderParams p;
  p.arch = arch;
  for (std::size_t l = 0; l < EncoderArch::kLayers; ++l) p.layers[l] = DenseLayer(arch.widths[l], arch.widths[l + 1]);
  const std::size_t d = arch.embedding_dim();
  p.critic.assign(d * d, 0.0);
  return p;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = critic.size();
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

void EncoderParams::for_each_tensor(const std::function<void(const std::string&, std::span<double>)>& fn) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l + 1);
    fn(prefix + ".weight", layers[l].weight);
    fn(prefix + ".bias", layers[l].bias);
  }
  fn("critic", critic);
}

void EncoderParams::for_each_tensor(
    const std::function<void(const std::string&, std::span<const double>)>& fn) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l + 1);
    fn(prefix + ".weight", layers[l].weight);
    fn(prefix + ".bias", layers[l].bias);
  }
  fn("critic", critic);
}

bool EncoderParams::operator==(const EncoderParams& other) const {
  if (!(arch == other.arch) || critic != other.critic) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].weight != other.layers[l].weight || layers[l].bias != other.layers[l].bias) return false;
  }
  return true;
}

EncoderParams init_params(Rng& rng, const EncoderArch& arch) {
  EncoderParams p = EncoderParams::zeros(arch);
  for (auto& layer : p.layers) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.in));
    for (double& w : layer.weight) w = rng.uniform(-scale, scale);
  }
  const std::size_t d = arch.embedding_dim();
  for (std::size_t i = 0; i < d; ++i) p.critic[i * d + i] = 1.0;
  return p;
}

std::span<const double> ForwardPass::tap(int layer) const {
  if (layer == 6) return layer6;
  if (layer == 7) return layer7;
  throw Error("layer tap must be 6 or 7");
}

std::uint64_t ForwardPass::branch_signature() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  std::vector<char> winner(points, 0);
  for (std::size_t o = 0; o < pooled.size(); ++o) {
    mix(argmax[o]);
    mix(pooled[o] > 0.0);
    if (pooled[o] > 0.0) winner[argmax[o]] = 1;
  }
  // Rectifier signs only matter on points that feed the pooled features.
  for (const auto& acts : point_acts) {
    const std::size_t width = acts.size() / points;
    for (std::size_t p = 0; p < points; ++p) {
      if (!winner[p]) continue;
      for (std::size_t k = 0; k < width; ++k) mix(acts[p * width + k] > 0.0);
    }
  }
  for (double v : layer6) mix(v > 0.0);
  return h;
}

ForwardPass forward(const EncoderParams& params, const PointCloud& cloud) {
  if (cloud.empty()) throw Error("forward: empty cloud");
  const auto& w = params.arch.widths;
  ForwardPass f;
  f.points = cloud.size();
  f.input.resize(f.points * 3);
  for (std::size_t p = 0; p < f.points; ++p) {
    for (int a = 0; a < 3; ++a) f.input[p * 3 + a] = cloud[p][a];
  }
  std::span<const double> x = f.input;
  for (std::size_t l = 0; l < 4; ++l) {
    f.point_acts[l].resize(f.points * w[l + 1]);
    kernels::dense_forward(x, f.points, params.layers[l], f.point_acts[l], true);
    x = f.point_acts[l];
  }
  f.pooled.resize(w[5]);
  f.argmax.resize(w[5]);
  kernels::dense_max_forward(x, f.points, params.layers[4], f.pooled, f.argmax);
  f.layer6.resize(w[6]);
  kernels::dense_forward(f.pooled, 1, params.layers[5], f.layer6, true);
  f.layer7.resize(w[7]);
  kernels::dense_forward(f.layer6, 1, params.layers[6], f.layer7, false);
  return f;
}

std::vector<double> point_features(const EncoderParams& params, const Vec3& p) {
  std::vector<double> x(p.begin(), p.end());
  for (std::size_t l = 0; l < EncoderArch::kPointLayers; ++l) {
    std::vector<double> y(params.layers[l].out);
    kernels::reference::dense_forward(x, 1, params.layers[l], y, true);
    x = std::move(y);
  }
  return x;
}

std::vector<double> normalize_tap(std::span<const double> tap) {
  double s = 0.0;
  for (double v : tap) s += v * v;
  const double n = std::sqrt(s);
  if (!(n > 0.0) || !std::isfinite(n)) throw Error("degenerate embedding");
  std::vector<double> z(tap.begin(), tap.end());
  for (double& v : z) v /= n;
  return z;
}

std::vector<double> embed(const EncoderParams& params, const PointCloud& cloud, int layer_tap) {
  params.arch.tap_dim(layer_tap);
  return normalize_tap(forward(params, cloud).tap(layer_tap));
}

std::vector<ForwardPass> forward_batch(const EncoderParams& params, std::span<const PointCloud> clouds) {
  std::vector<ForwardPass> out(clouds.size());
  const auto n = static_cast<std::ptrdiff_t>(clouds.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = forward(params, clouds[i]);
  return out;
}

std::vector<double> embeddings_of(std::span<const ForwardPass> passes, int layer_tap) {
  std::vector<double> out;
  for (const auto& f : passes) {
    const auto z = normalize_tap(f.tap(layer_tap));
    out.insert(out.end(), z.begin(), z.end());
  }
  return out;
}

namespace {

// Backward quantities of one sample. Point-layer deltas are stored only for
// the points that win at least one live pooled channel; all other points
// receive exactly zero gradient.
struct Signals {
  std::vector<double> d7, d6, d5;
  std::vector<std::uint32_t> active;             // point index per active row
  std::array<std::vector<double>, 4> deltas;     // layers 1-4, active x width
};

Signals backward_signals(const EncoderParams& params, const ForwardPass& f, std::span<const double> g) {
  const auto& w = params.arch.widths;
  const std::size_t d = w[7];
  Signals s;

  // Through z = u / |u|.
  double uu = 0.0, zg = 0.0;
  for (std::size_t k = 0; k < d; ++k) uu += f.layer7[k] * f.layer7[k];
  const double un = std::sqrt(uu);
  if (!(un > 0.0)) throw Error("degenerate embedding");
  for (std::size_t k = 0; k < d; ++k) zg += (f.layer7[k] / un) * g[k];
  s.d7.resize(d);
  for (std::size_t k = 0; k < d; ++k) s.d7[k] = (g[k] - (f.layer7[k] / un) * zg) / un;

  std::vector<double> dh6(w[6]);
  kernels::dense_backward_input(s.d7, params.layers[6], dh6);
  s.d6.resize(w[6]);
  for (std::size_t k = 0; k < w[6]; ++k) s.d6[k] = f.layer6[k] > 0.0 ? dh6[k] : 0.0;

  std::vector<double> dpool(w[5]);
  kernels::dense_backward_input(s.d6, params.layers[5], dpool);
  s.d5.resize(w[5]);
  std::vector<std::int64_t> row_of(f.points, -1);
  for (std::size_t o = 0; o < w[5]; ++o) {
    s.d5[o] = f.pooled[o] > 0.0 ? dpool[o] : 0.0;
    if (s.d5[o] != 0.0 && row_of[f.argmax[o]] < 0) {
      row_of[f.argmax[o]] = 0;
    }
  }
  for (std::size_t p = 0; p < f.points; ++p) {
    if (row_of[p] >= 0) {
      row_of[p] = static_cast<std::int64_t>(s.active.size());
      s.active.push_back(static_cast<std::uint32_t>(p));
    }
  }
  const std::size_t rows = s.active.size();

  // dX4 for active points: scatter each live channel back to its winner.
  std::vector<double> dx(rows * w[4], 0.0);
  const auto& w5 = params.layers[4].weight;
  for (std::size_t i = 0; i < w[4]; ++i) {
    const double* wi = w5.data() + i * w[5];
    for (std::size_t o = 0; o < w[5]; ++o) {
      if (s.d5[o] == 0.0) continue;
      dx[static_cast<std::size_t>(row_of[f.argmax[o]]) * w[4] + i] += wi[o] * s.d5[o];
    }
  }

  for (std::size_t l = 4; l-- > 0;) {
    const std::size_t width = w[l + 1];
    const auto& acts = f.point_acts[l];
    auto& delta = s.deltas[l];
    delta.resize(rows * width);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t p = s.active[r];
      for (std::size_t k = 0; k < width; ++k) {
        delta[r * width + k] = acts[p * width + k] > 0.0 ? dx[r * width + k] : 0.0;
      }
    }
    if (l == 0) break;
    std::vector<double> prev(rows * w[l]);
    for (std::size_t r = 0; r < rows; ++r) {
      kernels::dense_backward_input(std::span<const double>(delta).subspan(r * width, width), params.layers[l],
                                    std::span<double>(prev).subspan(r * w[l], w[l]));
    }
    dx = std::move(prev);
  }
  return s;
}

}  // namespace

void backward(const EncoderParams& params, std::span<const ForwardPass> passes, std::span<const double> upstream,
              Gradients& grads) {
  const auto& w = params.arch.widths;
  const std::size_t d = w[7];
  const std::size_t n = passes.size();
  if (upstream.size() != n * d) throw Error("backward: upstream gradient shape mismatch");
  if (!(grads.arch == params.arch)) throw Error("backward: gradient layout mismatch");
  for (const auto& f : passes) {
    if (f.points == 0 || f.layer7.size() != d || f.pooled.size() != w[5]) {
      throw Error("backward: missing activations");
    }
  }

  std::vector<Signals> sig(n);
  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    const auto s = static_cast<std::size_t>(i);
    sig[s] = backward_signals(params, passes[s], upstream.subspan(s * d, d));
  }

  // Every (tensor, row) is owned by one iteration and sums samples in order.
  for (std::size_t l = 0; l < EncoderArch::kLayers; ++l) {
    const std::size_t in = w[l], out = w[l + 1];
    double* gw = grads.layers[l].weight.data();
    const auto rows = static_cast<std::ptrdiff_t>(in);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      double* gi = gw + i * out;
      for (std::size_t s = 0; s < n; ++s) {
        const ForwardPass& f = passes[s];
        const Signals& g = sig[s];
        if (l < 4) {
          const auto& delta = g.deltas[l];
          const std::vector<double>& input = l == 0 ? f.input : f.point_acts[l - 1];
          for (std::size_t r = 0; r < g.active.size(); ++r) {
            const double xv = input[g.active[r] * in + i];
            if (xv == 0.0) continue;
            const double* dr = delta.data() + r * out;
#pragma omp simd
            for (std::size_t o = 0; o < out; ++o) gi[o] += xv * dr[o];
          }
        } else if (l == 4) {
          const auto& x4 = f.point_acts[3];
          for (std::size_t o = 0; o < out; ++o) {
            if (g.d5[o] != 0.0) gi[o] += x4[f.argmax[o] * in + i] * g.d5[o];
          }
        } else {
          const double xv = l == 5 ? f.pooled[i] : f.layer6[i];
          const std::vector<double>& dv = l == 5 ? g.d6 : g.d7;
          if (xv == 0.0) continue;
#pragma omp simd
          for (std::size_t o = 0; o < out; ++o) gi[o] += xv * dv[o];
        }
      }
    }
    auto& gb = grads.layers[l].bias;
    for (std::size_t s = 0; s < n; ++s) {
      const Signals& g = sig[s];
      if (l < 4) {
        for (std::size_t r = 0; r < g.active.size(); ++r) {
          for (std::size_t o = 0; o < out; ++o) gb[o] += g.deltas[l][r * out + o];
        }
      } else {
        const std::vector<double>& dv = l == 4 ? g.d5 : (l == 5 ? g.d6 : g.d7);
        for (std::size_t o = 0; o < out; ++o) gb[o] += dv[o];
      }
    }
  }
}

namespace reference {

void backward_one(const EncoderParams& params, const PointCloud& cloud, std::span<const double> upstream,
                  Gradients& grads) {
  const auto& w = params.arch.widths;
  const std::size_t n = cloud.size();
  std::array<std::vector<double>, 6> acts;  // acts[0] input, acts[l] layer l (points x width)
  acts[0].resize(n * 3);
  for (std::size_t p = 0; p < n; ++p) {
    for (int a = 0; a < 3; ++a) acts[0][p * 3 + a] = cloud[p][a];
  }
  for (std::size_t l = 1; l <= 5; ++l) {
    acts[l].resize(n * w[l]);
    kernels::reference::dense_forward(acts[l - 1], n, params.layers[l - 1], acts[l], true);
  }
  std::vector<double> pooled(w[5]);
  std::vector<std::size_t> winner(w[5]);
  for (std::size_t o = 0; o < w[5]; ++o) {
    pooled[o] = acts[5][o];
    winner[o] = 0;
    for (std::size_t p = 1; p < n; ++p) {
      if (acts[5][p * w[5] + o] > pooled[o]) {
        pooled[o] = acts[5][p * w[5] + o];
        winner[o] = p;
      }
    }
  }
  std::vector<double> h6(w[6]), h7(w[7]);
  kernels::reference::dense_forward(pooled, 1, params.layers[5], h6, true);
  kernels::reference::dense_forward(h6, 1, params.layers[6], h7, false);

  double nrm = 0.0;
  for (double v : h7) nrm += v * v;
  nrm = std::sqrt(nrm);
  std::vector<double> d7(w[7]);
  for (std::size_t a = 0; a < w[7]; ++a) {
    double s = 0.0;
    for (std::size_t b = 0; b < w[7]; ++b) {
      // Jacobian of u/|u|: (I - z z^T) / |u|.
      const double jac = ((a == b ? 1.0 : 0.0) - (h7[a] / nrm) * (h7[b] / nrm)) / nrm;
      s += jac * upstream[b];
    }
    d7[a] = s;
  }

  auto dense_back = [&](std::size_t l, const std::vector<double>& x, const std::vector<double>& dy, std::size_t rows,
                        std::vector<double>& dx) {
    const DenseLayer& layer = params.layers[l];
    dx.assign(rows * layer.in, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < layer.in; ++i) {
        for (std::size_t o = 0; o < layer.out; ++o) {
          grads.layers[l].weight[i * layer.out + o] += x[r * layer.in + i] * dy[r * layer.out + o];
          dx[r * layer.in + i] += layer.weight[i * layer.out + o] * dy[r * layer.out + o];
        }
      }
      for (std::size_t o = 0; o < layer.out; ++o) grads.layers[l].bias[o] += dy[r * layer.out + o];
    }
  };

  std::vector<double> dx;
  dense_back(6, h6, d7, 1, dx);
  std::vector<double> d6(w[6]);
  for (std::size_t k = 0; k < w[6]; ++k) d6[k] = h6[k] > 0.0 ? dx[k] : 0.0;
  dense_back(5, pooled, d6, 1, dx);
  std::vector<double> dy(n * w[5], 0.0);
  for (std::size_t o = 0; o < w[5]; ++o) {
    const std::size_t p = winner[o];
    if (acts[5][p * w[5] + o] > 0.0) dy[p * w[5] + o] = dx[o];
  }
  for (std::size_t l = 5; l >= 1; --l) {
    dense_back(l - 1, acts[l - 1], dy, n, dx);
    if (l == 1) break;
    dy.assign(n * w[l - 1], 0.0);
    for (std::size_t k = 0; k < dy.size(); ++k) dy[k] = acts[l - 1][k] > 0.0 ? dx[k] : 0.0;
  }
}

}  // namespace reference
}  // namespace shapecon
