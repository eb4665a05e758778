// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used to cross-check the library.
// Everything here is deliberately written from first principles (straight
// line code, explicit matrices, loop-based integer math) rather than by
// calling the code under test.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "feddq/analysis.hpp"
#include "feddq/federation.hpp"
#include "feddq/numerics.hpp"
#include "feddq/param_vector.hpp"

namespace oracle {

// Valid bound-evaluator inputs spanning wide magnitude ranges, deterministic
// in the seed. r is uniform on [1, n]; force it when a case needs r < n.
inline feddq::bound_inputs random_bound_inputs(std::uint64_t seed) {
  auto rng = feddq::random_stream::keyed(seed, 0, 0, "bound-inputs");
  feddq::bound_inputs in;
  in.L = 0.1 + 4.0 * rng.next_unit();
  in.sigma2 = 2.0 * rng.next_unit();
  in.eta = 0.01 + 0.2 * rng.next_unit();
  in.B = 1e4 + 1e6 * rng.next_unit();
  in.s = static_cast<double>(1 + rng.next_below(4000));
  in.fK = rng.next_unit();
  in.f0 = in.fK + 0.1 + 3.0 * rng.next_unit();
  in.tau = 1 + rng.next_below(8);
  in.n = 2 + rng.next_below(20);
  in.r = 1 + rng.next_below(in.n);
  in.d = 1 + rng.next_below(500);
  const std::size_t rounds = 1 + rng.next_below(12);
  in.ranges.resize(rounds);
  for (auto& row : in.ranges) {
    row.resize(in.n);
    for (double& v : row) v = 2.0 * rng.next_unit();
  }
  return in;
}

// Smallest N >= 0 with 2^N >= value, by repeated doubling.
inline int int_bits_for(std::uint64_t value) {
  int n = 0;
  unsigned __int128 pow = 1;
  while (pow < value) {
    pow *= 2;
    ++n;
  }
  return n;
}

inline double sum_sq(const std::vector<std::vector<double>>& ranges) {
  double acc = 0.0;
  for (const auto& row : ranges)
    for (double v : row) acc += v * v;
  return acc;
}

// Full-participation bound, typed directly from the statement with its
// four terms grouped differently from the library's arrangement.
inline double theorem1(double L, double sigma2, double eta, double B, double s, double f0,
                       double fK, std::size_t tau, std::size_t n, std::uint64_t d,
                       const std::vector<std::vector<double>>& ranges) {
  const double nd = static_cast<double>(n);
  const double dd = static_cast<double>(d);
  const double taud = static_cast<double>(tau);
  const double t1 = (2.0 * (f0 - fK) / (eta * taud)) * (nd * dd * std::sqrt(3.0 * s) / B);
  const double t2 =
      (L * sum_sq(ranges) / (4.0 * nd * eta * taud)) * (dd * dd * std::sqrt(3.0) / (B * std::pow(s, 1.5)));
  const double t3 = eta * L * sigma2 / nd;
  const double t4 = eta * eta * sigma2 * (nd + 1.0) * (taud - 1.0) * L * L / nd;
  return t1 + t2 + t3 + t4;
}

// r-of-n selection bound: the full-participation terms plus the two
// partial-participation penalties.
inline double generalized(double L, double sigma2, double eta, double B, double s, double f0,
                          double fK, std::size_t tau, std::size_t n, std::size_t r,
                          std::uint64_t d, const std::vector<std::vector<double>>& ranges) {
  double total = theorem1(L, sigma2, eta, B, s, f0, fK, tau, n, d, ranges);
  if (r < n) {
    const double nd = static_cast<double>(n);
    const double rd = static_cast<double>(r);
    const double w = (1.0 - rd / nd) / (rd * (nd - 1.0));
    total += eta * L * sigma2 * w * static_cast<double>(d) * nd / (s * s);
    total += eta * L * sigma2 * w * 4.0 * nd;
  }
  return total;
}

inline double optimal_level(double L, std::uint64_t d, std::size_t n,
                            const std::vector<std::vector<double>>& ranges, double f0, double fK) {
  const double nd = static_cast<double>(n);
  return std::sqrt((3.0 * L * static_cast<double>(d) * sum_sq(ranges)) /
                   (8.0 * nd * nd * (f0 - fK)));
}

inline double rate(double L, double f0, double fK, std::size_t K, std::size_t tau, double sigma2,
                   std::size_t n) {
  const double kt = static_cast<double>(K) * static_cast<double>(tau);
  const double nd = static_cast<double>(n);
  return (8.0 / 3.0) * L * (f0 - fK) / std::sqrt(kt) + sigma2 / (nd * std::sqrt(kt)) +
         sigma2 * ((nd + 1.0) / nd) * (static_cast<double>(tau) - 1.0) / kt;
}

// Largest eigenvalue of G = [A | 1]^T [A | 1] / m via the explicit dense
// matrix and power iteration from a fixed deterministic start.
inline double gram_lambda_max(const feddq::dataset_shard& shard) {
  const std::size_t m = shard.size();
  const std::size_t dim = shard.dim + 1;
  std::vector<double> G(dim * dim, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> row(dim, 1.0);
    for (std::size_t j = 0; j < shard.dim; ++j) row[j] = shard.features[i * shard.dim + j];
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = 0; b < dim; ++b) G[a * dim + b] += row[a] * row[b];
  }
  for (double& g : G) g /= static_cast<double>(m);

  std::vector<double> v(dim);
  for (std::size_t i = 0; i < dim; ++i) v[i] = 1.0 + 0.01 * static_cast<double>(i);
  double lambda = 0.0;
  for (int it = 0; it < 10000; ++it) {
    std::vector<double> w(dim, 0.0);
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = 0; b < dim; ++b) w[a] += G[a * dim + b] * v[b];
    double norm = 0.0;
    for (double c : w) norm += c * c;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (std::size_t i = 0; i < dim; ++i) v[i] = w[i] / norm;
    if (it > 10 && std::abs(norm - lambda) <= 1e-14 * norm) return norm;
    lambda = norm;
  }
  return lambda;
}

// Straight-line loss of the 2-input, 2-hidden-unit network on one example.
// Parameter order: w1 row 0, w1 row 1, b1, w2, b2.
inline double mlp_loss_2_2(const std::array<double, 9>& p, double x0, double x1, double y) {
  const double h0 = std::tanh(p[0] * x0 + p[1] * x1 + p[4]);
  const double h1 = std::tanh(p[2] * x0 + p[3] * x1 + p[5]);
  const double z = p[6] * h0 + p[7] * h1 + p[8];
  const double sp = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return sp - y * z;
}

// Plain FedAvg with unquantized uplinks, mirroring the orchestrator's
// selection-free path: every client runs tau local steps from the global
// model, deltas are combined with size-proportional weights.
inline feddq::param_vector reference_fedavg(const feddq::model_spec& spec,
                                            const std::vector<feddq::client_state>& clients,
                                            const feddq::sgd_config& sgd, std::size_t rounds,
                                            std::uint64_t seed) {
  feddq::param_vector x = feddq::initial_params(spec, seed);
  std::size_t total = 0;
  for (const auto& c : clients) total += c.shard.size();

  for (std::size_t m = 0; m < rounds; ++m) {
    feddq::param_vector acc(x.size(), 0.0);
    for (const auto& c : clients) {
      auto rng = feddq::random_stream::keyed(seed, m, c.id, "local-sgd");
      feddq::param_vector local = x;
      for (std::size_t t = 0; t < sgd.tau; ++t) {
        const feddq::param_vector g =
            feddq::gradient(spec, local, c.shard, sgd.batch_size, rng);
        for (std::size_t i = 0; i < local.size(); ++i) local[i] -= sgd.eta * g[i];
      }
      const double p = static_cast<double>(c.shard.size()) / static_cast<double>(total);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p * (local[i] - x[i]);
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += acc[i];
  }
  return x;
}

}  // namespace oracle
