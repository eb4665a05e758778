// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "feddq/errors.hpp"
#include "feddq/federation.hpp"
#include "feddq/numerics.hpp"
#include "feddq/param_vector.hpp"
#include "feddq/random.hpp"

namespace feddq {

/// Worst-case relative variance factor of the stochastic quantizer at
/// level s for d coordinates: E||Q(x) - x||^2 <= q * range^2 with
/// q = d / s^2.
inline double q_factor(std::uint64_t d, double s) {
  if (d == 0 || !(s >= 1.0)) throw std::invalid_argument("q_factor: need d >= 1 and s >= 1");
  return static_cast<double>(d) / (s * s);
}

/// Everything the convergence bound consumes. ranges holds one row per
/// round with one entry per participating client.
struct bound_inputs {
  double L = 0.0;       // smoothness constant
  double sigma2 = 0.0;  // local gradient variance bound
  double eta = 0.0;     // local stepsize
  double B = 0.0;       // total uplink budget in bits (paper accounting)
  double s = 0.0;       // quantization level, sections per range
  double f0 = 0.0;      // objective at the initial model
  double fK = 0.0;      // objective at the final model
  std::size_t tau = 1;
  std::size_t n = 1;
  std::size_t r = 1;
  std::uint64_t d = 1;
  std::vector<std::vector<double>> ranges;

  double sum_sq_ranges() const {
    double acc = 0.0;
    for (const auto& row : ranges)
      for (double v : row) acc += v * v;
    return acc;
  }

  void validate() const {
    if (!(L > 0.0) || !std::isfinite(L)) throw std::invalid_argument("bound_inputs: L must be positive");
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2))
      throw std::invalid_argument("bound_inputs: sigma2 must be nonnegative");
    if (!(eta > 0.0) || !std::isfinite(eta))
      throw std::invalid_argument("bound_inputs: eta must be positive");
    if (!(B > 0.0)) throw std::invalid_argument("bound_inputs: B must be positive");
    if (!(s >= 1.0)) throw std::invalid_argument("bound_inputs: s must be >= 1");
    if (!std::isfinite(f0) || !std::isfinite(fK))
      throw std::invalid_argument("bound_inputs: objective values must be finite");
    if (tau == 0 || n == 0 || d == 0) throw std::invalid_argument("bound_inputs: tau, n, d must be >= 1");
    if (r == 0 || r > n) throw std::invalid_argument("bound_inputs: need 1 <= r <= n");
    if (ranges.empty()) throw std::invalid_argument("bound_inputs: ranges must not be empty");
    for (const auto& row : ranges) {
      if (row.empty()) throw std::invalid_argument("bound_inputs: empty ranges row");
      for (double v : row)
        if (!(v >= 0.0) || !std::isfinite(v))
          throw std::invalid_argument("bound_inputs: ranges must be finite and nonnegative");
    }
  }
};

/// The bound's right-hand side split into named terms. total is always the
/// exact sum of the terms; the selection terms are zero at r == n.
struct bound_report {
  double initial_gap_term = 0.0;      // communication-budget term in f0 - fK
  double range_term = 0.0;            // quantization error term in the per-round ranges
  double sigma_term = 0.0;            // sampling noise, single-step
  double sigma_local_term = 0.0;      // sampling noise amplified by local steps
  double selection_quant_term = 0.0;  // partial participation x quantization
  double selection_sample_term = 0.0; // partial participation x sampling
  double total = 0.0;
  std::optional<double> measured_lhs;

  bool satisfied() const { return measured_lhs.has_value() && *measured_lhs <= total; }
};

namespace detail {

inline bound_report bound_terms(const bound_inputs& in) {
  in.validate();
  const auto nd = static_cast<double>(in.n);
  const auto rd = static_cast<double>(in.r);
  const auto dd = static_cast<double>(in.d);
  const auto taud = static_cast<double>(in.tau);
  const double root3s = std::sqrt(3.0 * in.s);

  bound_report rep;
  rep.initial_gap_term = 2.0 * nd * dd * root3s * (in.f0 - in.fK) / (in.B * in.eta * taud);
  rep.range_term = in.L * dd * dd * std::sqrt(3.0) /
                   (4.0 * in.B * nd * in.eta * taud * in.s * std::sqrt(in.s)) *
                   in.sum_sq_ranges();
  rep.sigma_term = in.eta * in.L * in.sigma2 / nd;
  rep.sigma_local_term =
      in.eta * in.eta * (in.sigma2 / nd) * (nd + 1.0) * (taud - 1.0) * in.L * in.L;
  if (in.r < in.n) {
    const double sel = (1.0 - rd / nd) / (rd * (nd - 1.0));
    rep.selection_quant_term = in.eta * in.L * in.sigma2 * sel * dd * nd / (in.s * in.s);
    rep.selection_sample_term = in.eta * in.L * in.sigma2 * sel * 4.0 * nd;
  }
  rep.total = rep.initial_gap_term + rep.range_term + rep.sigma_term + rep.sigma_local_term +
              rep.selection_quant_term + rep.selection_sample_term;
  return rep;
}

}  // namespace detail

/// Full-participation convergence bound on the mean squared gradient norm.
/// Requires r == n; partial participation goes through generalized_rhs.
inline bound_report theorem1_rhs(const bound_inputs& in) {
  if (in.r != in.n)
    throw std::invalid_argument("theorem1_rhs: requires r == n, use generalized_rhs");
  return detail::bound_terms(in);
}

/// Convergence bound with r-of-n client selection. Reduces exactly to the
/// full-participation bound at r == n.
inline bound_report generalized_rhs(const bound_inputs& in) { return detail::bound_terms(in); }

/// Budget-optimal quantization level: the real-valued s minimizing the sum
/// of the budget and range terms for a fixed bit budget.
inline double optimal_level(double L, std::uint64_t d, std::size_t n,
                            const std::vector<std::vector<double>>& ranges, double f0, double fK) {
  if (!(L > 0.0) || d == 0 || n == 0) throw std::invalid_argument("optimal_level: bad constants");
  if (!(f0 > fK)) throw std::invalid_argument("optimal_level: requires f0 > fK");
  double ssq = 0.0;
  for (const auto& row : ranges)
    for (double v : row) {
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument("optimal_level: ranges must be finite and nonnegative");
      ssq += v * v;
    }
  if (!(ssq > 0.0)) throw std::invalid_argument("optimal_level: ranges are all zero");
  const auto nd = static_cast<double>(n);
  return std::sqrt(3.0 * L * static_cast<double>(d) * ssq / (8.0 * nd * nd * (f0 - fK)));
}

/// Asymptotic stationarity rate at the optimal level and stepsize
/// eta = 1 / (L sqrt(K tau)).
inline double rate_rhs(double L, double f0, double fK, std::size_t K, std::size_t tau,
                       double sigma2, std::size_t n) {
  if (!(L > 0.0) || K == 0 || tau == 0 || n == 0 || !(sigma2 >= 0.0))
    throw std::invalid_argument("rate_rhs: bad constants");
  const double kt = static_cast<double>(K) * static_cast<double>(tau);
  const auto nd = static_cast<double>(n);
  return 8.0 * L * (f0 - fK) / (3.0 * std::sqrt(kt)) + sigma2 / (nd * std::sqrt(kt)) +
         sigma2 * (nd + 1.0) * (static_cast<double>(tau) - 1.0) / (nd * kt);
}

/// Whether the stepsize keeps the descent argument valid:
/// 1 - L eta (1 + c tau) - 2 L^2 tau (tau - 1) eta^2 >= 0 where c is the
/// selection amplification (zero at full participation).
inline bool stepsize_condition(double L, double eta, std::size_t tau, std::size_t n, std::size_t r,
                               double q) {
  if (!(L > 0.0) || !(eta > 0.0) || tau == 0 || n == 0 || r == 0 || r > n || !(q >= 0.0))
    throw std::invalid_argument("stepsize_condition: bad constants");
  double sel = 0.0;
  if (r < n) {
    if (n < 2) throw std::invalid_argument("stepsize_condition: r < n needs n >= 2");
    const auto nd = static_cast<double>(n);
    const auto rd = static_cast<double>(r);
    sel = (nd / (rd * (nd - 1.0))) * (1.0 - rd / nd) * 4.0 * (1.0 + q);
  }
  const double taud = static_cast<double>(tau);
  const double value =
      1.0 - L * eta * (1.0 + sel * taud) - 2.0 * L * L * taud * (taud - 1.0) * eta * eta;
  return value >= 0.0;
}

/// Mean squared gradient norm over all recorded local steps, the quantity
/// the convergence bound controls. Requires verification-mode reports.
inline double measured_stationarity(std::span<const round_report> reports, std::size_t tau) {
  if (reports.empty() || tau == 0)
    throw std::invalid_argument("measured_stationarity: need reports and tau >= 1");
  double acc = 0.0;
  for (const auto& rep : reports) {
    if (!rep.grad_norm_sq)
      throw std::invalid_argument("measured_stationarity: reports lack gradient norms");
    acc += *rep.grad_norm_sq;
  }
  return acc / (static_cast<double>(reports.size()) * static_cast<double>(tau));
}

/// Lower-bound estimate of the smoothness constant from gradient
/// differences: the max ratio ||g(x) - g(y)|| / ||x - y|| over all sample
/// pairs, refined by power iteration on the local curvature around the
/// first sample. Every ratio is a certified lower bound on L.
inline double estimate_L(const model_spec& spec, std::span<const param_vector> samples,
                         const dataset_shard& shard) {
  spec.validate();
  shard.validate();
  if (samples.size() < 2) throw std::invalid_argument("estimate_L: need at least two samples");

  std::vector<param_vector> grads(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != spec.param_count())
      throw dimension_error(spec.param_count(), samples[i].size(), "smoothness sample");
    grads[i] = gradient(spec, samples[i], shard);
  }

  double best = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      const double dist2 = l2_distance_sq(samples[i], samples[j]);
      if (dist2 == 0.0) continue;
      best = std::max(best, std::sqrt(l2_distance_sq(grads[i], grads[j]) / dist2));
    }
  if (best == 0.0) throw std::invalid_argument("estimate_L: all samples coincide");

  // Power iteration on the symmetric curvature at the first sample:
  // v <- normalize(g(x + eps v) - g(x - eps v)); each step's ratio is
  // itself a valid difference quotient.
  const param_vector& x0 = samples.front();
  const std::size_t dim = x0.size();
  param_vector v(dim, 0.0);
  random_stream rng = random_stream::keyed(0x5eedULL, 0, 0, "estimate-L");
  for (double& c : v) c = rng.next_normal();
  double vnorm = std::sqrt(l2_norm_sq(v));
  for (double& c : v) c /= vnorm;

  const double eps = 1e-4;
  param_vector xp(dim), xm(dim);
  double prev = 0.0;
  for (int it = 0; it < 200; ++it) {
    for (std::size_t i = 0; i < dim; ++i) {
      xp[i] = x0[i] + eps * v[i];
      xm[i] = x0[i] - eps * v[i];
    }
    const param_vector gp = gradient(spec, xp, shard);
    const param_vector gm = gradient(spec, xm, shard);
    for (std::size_t i = 0; i < dim; ++i) v[i] = gp[i] - gm[i];
    vnorm = std::sqrt(l2_norm_sq(v));
    if (vnorm == 0.0) break;
    const double ratio = vnorm / (2.0 * eps);
    best = std::max(best, ratio);
    for (double& c : v) c /= vnorm;
    if (it > 2 && std::abs(ratio - prev) <= 1e-12 * std::max(1.0, ratio)) break;
    prev = ratio;
  }
  return best;
}

/// Largest eigenvalue of the design Gram matrix (features plus intercept
/// column) divided by the example count: the exact smoothness constant of
/// the half-MSE linear regression objective.
inline double linreg_smoothness(const dataset_shard& shard) {
  shard.validate();
  const std::size_t m = shard.size();
  const std::size_t dim = shard.dim + 1;

  param_vector v(dim, 0.0);
  random_stream rng = random_stream::keyed(0x5eedULL, 0, 1, "linreg-L");
  for (double& c : v) c = rng.next_normal();
  double norm = std::sqrt(l2_norm_sq(v));
  for (double& c : v) c /= norm;

  std::vector<double> u(m);
  param_vector w(dim);
  double lambda = 0.0;
  for (int it = 0; it < 2000; ++it) {
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = shard.row(i);
      double acc = v[dim - 1];
      for (std::size_t j = 0; j + 1 < dim; ++j) acc += row[j] * v[j];
      u[i] = acc;
    }
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = shard.row(i);
      for (std::size_t j = 0; j + 1 < dim; ++j) w[j] += row[j] * u[i];
      w[dim - 1] += u[i];
    }
    for (double& c : w) c /= static_cast<double>(m);
    const double wnorm = std::sqrt(l2_norm_sq(w));
    if (wnorm == 0.0) return 0.0;
    for (std::size_t i = 0; i < dim; ++i) v[i] = w[i] / wnorm;
    if (it > 2 && std::abs(wnorm - lambda) <= 1e-13 * std::max(1.0, wnorm)) {
      lambda = wnorm;
      break;
    }
    lambda = wnorm;
  }
  return lambda;
}

/// Monte Carlo estimate of the local gradient variance at a fixed model:
/// the mean squared distance between minibatch and full gradients. A batch
/// covering the shard is exactly zero.
inline double estimate_sigma2(const model_spec& spec, const param_vector& params,
                              const dataset_shard& shard, std::size_t batch_size,
                              std::size_t trials, std::uint64_t seed) {
  spec.validate();
  shard.validate();
  if (batch_size == kFullBatch || batch_size >= shard.size()) return 0.0;
  if (trials < 100) throw std::invalid_argument("estimate_sigma2: need at least 100 trials");

  const param_vector full = gradient(spec, params, shard);

  double acc = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    random_stream rng = random_stream::keyed(seed, t, 0, "sigma2");
    const param_vector g = gradient(spec, params, shard, batch_size, rng);
    acc += l2_distance_sq(g, full);
  }
  return acc / static_cast<double>(trials);
}

}  // namespace feddq
