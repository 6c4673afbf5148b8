#include "shapecon/objective.hpp"

#include <algorithm>
#include <cmath>

#include "shapecon/error.hpp"

namespace shapecon {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0)) throw Error("temperature must be positive");
}

// a^T W (length d).
std::vector<double> left_product(std::span<const double> a, std::span<const double> w, std::size_t d) {
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const double av = a[i];
    if (av == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) out[j] += av * w[i * d + j];
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::size_t dim_of(std::span<const double> w) {
  const auto d = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(w.size()))));
  if (d * d != w.size()) throw Error("critic matrix must be square");
  return d;
}

// grad_a += W v, grad_w += a v^T.
void accumulate_gradients(std::span<const double> a, std::span<const double> v, std::span<const double> w,
                          std::span<double> grad_a, std::span<double> grad_w) {
  const std::size_t d = a.size();
  for (std::size_t p = 0; p < d; ++p) {
    grad_a[p] += dot(w.subspan(p * d, d), v);
    const double ap = a[p];
    if (ap == 0.0) continue;
    for (std::size_t q = 0; q < d; ++q) grad_w[p * d + q] += ap * v[q];
  }
}

// log(exp(a) + exp(b)).
double log_add_exp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

double critic(std::span<const double> a, std::span<const double> b, std::span<const double> w, double tau) {
  check_tau(tau);
  const std::size_t d = dim_of(w);
  if (a.size() != d || b.size() != d) throw Error("critic: embedding size mismatch");
  return std::exp(dot(left_product(a, w, d), b) / tau);
}

LossResult info_nce_loss(std::span<const double> za, std::span<const double> zb, std::size_t d,
                         std::span<const double> w, double tau) {
  check_tau(tau);
  if (d == 0 || za.size() % d != 0 || za.size() != zb.size()) throw Error("info_nce: embedding shape mismatch");
  if (w.size() != d * d) throw Error("info_nce: critic shape mismatch");
  const std::size_t n = za.size() / d;
  if (n < 2) throw Error("info_nce: batch size must be at least 2");

  // aw[i] = a_i^T W; logits s_ij = aw[i] . b_j / tau.
  std::vector<double> aw(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = left_product(za.subspan(i * d, d), w, d);
    std::copy(row.begin(), row.end(), aw.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<double> logits(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      logits[i * n + j] = dot(std::span<const double>(aw).subspan(i * d, d), zb.subspan(j * d, d)) / tau;
    }
  }

  LossResult r;
  // g[i][j] = dL/ds_ij = (softmax_ij - [i == j]) / N.
  std::vector<double> g(n * n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* li = logits.data() + i * n;
    const double m = *std::max_element(li, li + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(li[j] - m);
    const double lse = m + std::log(s);
    r.loss += (lse - li[i]) * inv_n;
    for (std::size_t j = 0; j < n; ++j) {
      g[i * n + j] = (std::exp(li[j] - lse) - (i == j ? 1.0 : 0.0)) * inv_n;
    }
  }

  // With v_i = sum_j g_ij b_j / tau:
  //   dL/da_i = W v_i,  dL/db_j = sum_i g_ij W^T a_i / tau,  dL/dW = sum_i a_i v_i^T.
  r.grad_a.assign(n * d, 0.0);
  r.grad_b.assign(n * d, 0.0);
  r.grad_critic.assign(d * d, 0.0);
  std::vector<double> v(d);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double c = g[i * n + j] / tau;
      for (std::size_t p = 0; p < d; ++p) {
        v[p] += c * zb[j * d + p];
        r.grad_b[j * d + p] += c * aw[i * d + p];
      }
    }
    accumulate_gradients(za.subspan(i * d, d), v, w, std::span<double>(r.grad_a).subspan(i * d, d), r.grad_critic);
  }
  return r;
}

MemoryBank bank_init(std::size_t rows, std::size_t dim, Rng& rng, double momentum) {
  if (rows == 0 || dim == 0) throw Error("memory bank dimensions must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("bank momentum must lie in [0, 1)");
  MemoryBank bank;
  bank.rows = rows;
  bank.dim = dim;
  bank.momentum = momentum;
  bank.data.resize(rows * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    do {
      s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double v = rng.normal();
        bank.data[r * dim + k] = v;
        s += v * v;
      }
    } while (s == 0.0);
    const double inv = 1.0 / std::sqrt(s);
    for (std::size_t k = 0; k < dim; ++k) bank.data[r * dim + k] *= inv;
  }
  return bank;
}

void bank_calibrate_z(MemoryBank& bank, std::span<const double> raw_scores) {
  if (bank.z) throw Error("memory bank already calibrated");
  if (raw_scores.empty()) throw Error("calibration requires at least one score");
  double mean = 0.0;
  for (double s : raw_scores) mean += s;
  mean /= static_cast<double>(raw_scores.size());
  if (!(mean > 0.0) || !std::isfinite(mean)) throw Error("calibration scores must be positive and finite");
  bank.z = static_cast<double>(bank.rows) * mean;
}

void bank_update(MemoryBank& bank, std::size_t index, std::span<const double> embedding, double momentum) {
  if (index >= bank.rows) throw Error("memory bank index out of range");
  if (embedding.size() != bank.dim) throw Error("memory bank: embedding size mismatch");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("bank momentum must lie in [0, 1)");
  double* row = bank.data.data() + index * bank.dim;
  double s = 0.0;
  for (std::size_t k = 0; k < bank.dim; ++k) {
    row[k] = momentum * row[k] + (1.0 - momentum) * embedding[k];
    s += row[k] * row[k];
  }
  if (!(s > 0.0)) throw Error("memory bank row collapsed to zero");
  const double inv = 1.0 / std::sqrt(s);
  for (std::size_t k = 0; k < bank.dim; ++k) row[k] *= inv;
}

void bank_update(MemoryBank& bank, std::size_t index, std::span<const double> embedding) {
  bank_update(bank, index, embedding, bank.momentum);
}

std::vector<std::size_t> sample_negatives(std::size_t bank_rows, std::size_t k, std::size_t positive, Rng& rng) {
  if (k == 0) throw Error("need at least one negative");
  if (bank_rows < 2) throw Error("memory bank needs at least two rows for negatives");
  std::vector<std::size_t> out(k);
  for (auto& idx : out) {
    do {
      idx = rng.uniform_index(bank_rows);
    } while (idx == positive);
  }
  return out;
}

std::vector<double> raw_negative_scores(std::span<const double> za, std::size_t d, const MemoryBank& bank,
                                        std::span<const std::vector<std::size_t>> negatives,
                                        std::span<const double> w, double tau) {
  check_tau(tau);
  std::vector<double> out;
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    const auto aw = left_product(za.subspan(i * d, d), w, d);
    for (std::size_t idx : negatives[i]) {
      if (idx >= bank.rows) throw Error("negative index out of range");
      out.push_back(std::exp(dot(aw, bank.row(idx)) / tau));
    }
  }
  return out;
}

LossResult nce_loss(std::span<const double> za, std::span<const std::size_t> indices, std::size_t d,
                    const MemoryBank& bank, std::span<const std::vector<std::size_t>> negatives,
                    std::span<const double> w, double tau) {
  check_tau(tau);
  if (!bank.z) throw Error("memory bank is not calibrated");
  if (d != bank.dim || w.size() != d * d) throw Error("nce: dimension mismatch");
  const std::size_t n = negatives.size();
  if (n == 0 || za.size() != n * d || indices.size() != n) throw Error("nce: batch shape mismatch");

  const double log_z = std::log(*bank.z);
  LossResult r;
  r.grad_a.assign(n * d, 0.0);
  r.grad_critic.assign(d * d, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> v(d);

  for (std::size_t i = 0; i < n; ++i) {
    if (indices[i] >= bank.rows) throw Error("memory bank index out of range");
    const std::size_t k = negatives[i].size();
    if (k == 0) throw Error("need at least one negative");
    // log(k * Pn).
    const double log_c = std::log(static_cast<double>(k) * bank.noise_probability());
    const auto a = za.subspan(i * d, d);
    const auto aw = left_product(a, w, d);

    // Adds one score's loss and its dL/du (u = log raw critic) times b to v.
    auto add_term = [&](std::span<const double> b, bool positive) {
      const double u = dot(aw, b) / tau;
      const double log_s = u - log_z;
      const double log_den = log_add_exp(log_s, log_c);
      double dl_du;
      if (positive) {
        r.loss += (log_den - log_s) * inv_n;   // -log(s / (s + c))
        dl_du = -std::exp(log_c - log_den);    // -c / (s + c)
      } else {
        r.loss += (log_den - log_c) * inv_n;   // -log(c / (s + c))
        dl_du = std::exp(log_s - log_den);     // s / (s + c)
      }
      const double coef = dl_du * inv_n / tau;
      for (std::size_t p = 0; p < d; ++p) v[p] += coef * b[p];
    };

    std::fill(v.begin(), v.end(), 0.0);
    add_term(bank.row(indices[i]), true);
    for (std::size_t idx : negatives[i]) {
      if (idx >= bank.rows) throw Error("negative index out of range");
      add_term(bank.row(idx), false);
    }
    accumulate_gradients(a, v, w, std::span<double>(r.grad_a).subspan(i * d, d), r.grad_critic);
  }
  return r;
}

}  // namespace shapecon
