// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "feddq/errors.hpp"
#include "feddq/param_vector.hpp"
#include "feddq/random.hpp"

namespace feddq {

enum class model_kind { linear_regression, logistic_regression, mlp };

inline const char* to_string(model_kind k) {
  switch (k) {
    case model_kind::linear_regression: return "linear-regression";
    case model_kind::logistic_regression: return "logistic-regression";
    case model_kind::mlp: return "mlp";
  }
  return "?";
}

/// Desk-scale model zoo. All three kinds predict a single output:
///   linear-regression   y = w.x + b, half-MSE loss
///   logistic-regression p = sigmoid(w.x + b), cross-entropy loss
///   mlp                 p = sigmoid(w2.tanh(W1 x + b1) + b2), cross-entropy
///
/// Parameter layout is row-major W1 | b1 | w2 | b2 for the mlp and w | b for
/// the linear kinds. tanh keeps every loss L-smooth in the parameters.
struct model_spec {
  model_kind kind = model_kind::linear_regression;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 0;  // 0 unless mlp
  std::size_t output_dim = 1;

  std::size_t param_count() const noexcept {
    if (kind == model_kind::mlp) return hidden_dim * input_dim + hidden_dim + hidden_dim + 1;
    return input_dim + 1;
  }

  bool is_classifier() const noexcept { return kind != model_kind::linear_regression; }

  void validate() const {
    if (input_dim == 0) throw config_error("model.input_dim", "must be positive");
    if (output_dim != 1) throw config_error("model.output_dim", "only single-output models are supported");
    if (kind == model_kind::mlp && hidden_dim == 0)
      throw config_error("model.hidden_dim", "mlp requires a positive hidden dimension");
    if (kind != model_kind::mlp && hidden_dim != 0)
      throw config_error("model.hidden_dim", "must be 0 unless kind is mlp");
  }
};

/// One client's slice of data: row-major feature matrix plus a label per row.
struct dataset_shard {
  std::size_t dim = 0;
  std::vector<double> features;  // size() * dim entries
  std::vector<double> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }

  void validate() const {
    if (labels.empty()) throw std::invalid_argument("dataset shard is empty");
    if (features.size() != labels.size() * dim)
      throw dimension_error(labels.size() * dim, features.size(), "shard features");
  }
};

/// Local SGD settings: step size eta, local steps tau, and mini-batch size
/// (kFullBatch selects the exact mean gradient).
inline constexpr std::size_t kFullBatch = 0;

struct sgd_config {
  double eta = 0.1;
  std::size_t tau = 1;
  std::size_t batch_size = kFullBatch;

  void validate() const {
    if (!(eta > 0.0)) throw config_error("federation.eta", "step size must be positive");
    if (tau < 1) throw config_error("federation.tau", "local steps must be >= 1");
  }
};

namespace detail {

inline void check_dims(const model_spec& spec, const param_vector& params, const dataset_shard& shard) {
  if (params.size() != spec.param_count())
    throw dimension_error(spec.param_count(), params.size(), "model parameters");
  if (shard.dim != spec.input_dim)
    throw dimension_error(spec.input_dim, shard.dim, "shard feature dimension");
  shard.validate();
}

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double sigmoid(double z) noexcept { return 1.0 / (1.0 + std::exp(-z)); }

// log(1 + exp(z)) without overflow for large |z|.
inline double softplus(double z) noexcept {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Per-example loss and gradient contributions, accumulated over `rows`.
// The gradient scale 1/m (m = rows.size()) is applied by the caller.
struct accumulator {
  double loss = 0.0;
  param_vector grad;  // empty when only the loss is needed
};

inline void accumulate(const model_spec& spec, const param_vector& params, const dataset_shard& shard,
                       std::span<const std::size_t> rows, bool want_grad, accumulator& acc) {
  const std::size_t in = spec.input_dim;
  if (want_grad && acc.grad.size() != params.size()) acc.grad.assign(params.size(), 0.0);

  switch (spec.kind) {
    case model_kind::linear_regression: {
      const std::span<const double> w{params.data(), in};
      const double b = params[in];
      for (std::size_t r : rows) {
        const auto x = shard.row(r);
        const double residual = dot(w, x) + b - shard.labels[r];
        acc.loss += 0.5 * residual * residual;
        if (want_grad) {
          for (std::size_t j = 0; j < in; ++j) acc.grad[j] += residual * x[j];
          acc.grad[in] += residual;
        }
      }
      break;
    }
    case model_kind::logistic_regression: {
      const std::span<const double> w{params.data(), in};
      const double b = params[in];
      for (std::size_t r : rows) {
        const auto x = shard.row(r);
        const double z = dot(w, x) + b;
        const double y = shard.labels[r];
        acc.loss += softplus(z) - y * z;
        if (want_grad) {
          const double err = sigmoid(z) - y;
          for (std::size_t j = 0; j < in; ++j) acc.grad[j] += err * x[j];
          acc.grad[in] += err;
        }
      }
      break;
    }
    case model_kind::mlp: {
      const std::size_t h = spec.hidden_dim;
      const double* w1 = params.data();            // h x in, row-major
      const double* b1 = w1 + h * in;              // h
      const double* w2 = b1 + h;                   // h
      const double b2 = w2[h];
      std::vector<double> hidden(h);
      for (std::size_t r : rows) {
        const auto x = shard.row(r);
        for (std::size_t u = 0; u < h; ++u)
          hidden[u] = std::tanh(dot({w1 + u * in, in}, x) + b1[u]);
        const double z = dot({w2, h}, {hidden.data(), h}) + b2;
        const double y = shard.labels[r];
        acc.loss += softplus(z) - y * z;
        if (want_grad) {
          const double err = sigmoid(z) - y;
          double* g1 = acc.grad.data();
          double* gb1 = g1 + h * in;
          double* g2 = gb1 + h;
          for (std::size_t u = 0; u < h; ++u) {
            g2[u] += err * hidden[u];
            const double pre = err * w2[u] * (1.0 - hidden[u] * hidden[u]);
            for (std::size_t j = 0; j < in; ++j) g1[u * in + j] += pre * x[j];
            gb1[u] += pre;
          }
          g2[h] += err;
        }
      }
      break;
    }
  }
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace detail

/// Mean loss of the model over the shard.
inline double loss(const model_spec& spec, const param_vector& params, const dataset_shard& shard) {
  detail::check_dims(spec, params, shard);
  detail::accumulator acc;
  detail::accumulate(spec, params, shard, detail::all_rows(shard.size()), false, acc);
  return acc.loss / static_cast<double>(shard.size());
}

/// Exact mean gradient over the whole shard (deterministic).
inline param_vector gradient(const model_spec& spec, const param_vector& params,
                             const dataset_shard& shard) {
  detail::check_dims(spec, params, shard);
  detail::accumulator acc;
  acc.grad.assign(params.size(), 0.0);
  detail::accumulate(spec, params, shard, detail::all_rows(shard.size()), true, acc);
  const double scale = 1.0 / static_cast<double>(shard.size());
  for (double& g : acc.grad) g *= scale;
  return acc.grad;
}

/// Stochastic gradient over a batch sampled without replacement from the
/// shard. rng is consumed only for the sampling; a batch_size of kFullBatch
/// (or >= the shard size) computes the exact mean gradient and draws nothing.
inline param_vector gradient(const model_spec& spec, const param_vector& params,
                             const dataset_shard& shard, std::size_t batch_size, random_stream& rng) {
  detail::check_dims(spec, params, shard);
  const std::size_t n = shard.size();
  if (batch_size == kFullBatch || batch_size >= n) return gradient(spec, params, shard);

  // Partial Fisher-Yates, front `batch_size` entries of a fresh permutation.
  std::vector<std::size_t> rows = detail::all_rows(n);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
    std::swap(rows[i], rows[j]);
  }
  rows.resize(batch_size);

  detail::accumulator acc;
  acc.grad.assign(params.size(), 0.0);
  detail::accumulate(spec, params, shard, rows, true, acc);
  const double scale = 1.0 / static_cast<double>(batch_size);
  for (double& g : acc.grad) g *= scale;
  return acc.grad;
}

/// One SGD update, params - eta * grad. Inputs are untouched.
inline param_vector sgd_step(const param_vector& params, const param_vector& grad, double eta) {
  if (params.size() != grad.size()) throw dimension_error(params.size(), grad.size(), "sgd_step gradient");
  if (!(eta > 0.0)) throw std::invalid_argument("sgd_step: eta must be positive");
  param_vector next(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) next[i] = params[i] - eta * grad[i];
  return next;
}

/// Central-difference gradient of the full-shard loss, (f(x + h e_j) -
/// f(x - h e_j)) / 2h per coordinate. Oracle-grade, O(d) loss evaluations.
inline param_vector finite_diff_gradient(const model_spec& spec, const param_vector& params,
                                         const dataset_shard& shard, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_gradient: h must be positive");
  detail::check_dims(spec, params, shard);
  param_vector grad(params.size());
  param_vector probe = params;
  for (std::size_t j = 0; j < params.size(); ++j) {
    const double saved = probe[j];
    probe[j] = saved + h;
    const double up = loss(spec, probe, shard);
    probe[j] = saved - h;
    const double down = loss(spec, probe, shard);
    probe[j] = saved;
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

enum class synthetic_task { linreg, logreg_blobs };

/// Seed-deterministic synthetic data.
///
/// linreg draws a hidden weight vector and bias, standard-normal features,
/// and labels w*.x + b* + noise_sigma * N(0,1); with noise_sigma 0 the
/// hidden parameters achieve loss 0 exactly. logreg-blobs places two
/// Gaussian class clusters with per-coordinate spread noise_sigma at unit
/// distance from the origin along a random direction (class centers 2
/// apart), labels alternating 0/1.
inline dataset_shard make_synthetic(synthetic_task task, std::size_t input_dim,
                                    std::size_t n_examples, double noise_sigma, std::uint64_t seed) {
  if (n_examples == 0) throw std::invalid_argument("make_synthetic: n_examples must be positive");
  if (input_dim == 0) throw std::invalid_argument("make_synthetic: input_dim must be positive");

  dataset_shard shard;
  shard.dim = input_dim;
  shard.features.resize(n_examples * input_dim);
  shard.labels.resize(n_examples);

  if (task == synthetic_task::linreg) {
    auto rng = random_stream::keyed(seed, 0, 0, "synthetic-linreg");
    std::vector<double> hidden_w(input_dim);
    for (double& w : hidden_w) w = rng.next_normal();
    const double hidden_b = rng.next_normal();
    for (std::size_t i = 0; i < n_examples; ++i) {
      double* x = shard.features.data() + i * input_dim;
      for (std::size_t j = 0; j < input_dim; ++j) x[j] = rng.next_normal();
      shard.labels[i] =
          detail::dot({hidden_w.data(), input_dim}, {x, input_dim}) + hidden_b +
          (noise_sigma > 0.0 ? noise_sigma * rng.next_normal() : 0.0);
    }
  } else {
    auto rng = random_stream::keyed(seed, 0, 0, "synthetic-blobs");
    std::vector<double> direction(input_dim);
    double norm_sq = 0.0;
    do {
      for (double& c : direction) c = rng.next_normal();
      norm_sq = l2_norm_sq(direction);
    } while (norm_sq == 0.0);
    const double inv_norm = 1.0 / std::sqrt(norm_sq);
    for (double& c : direction) c *= inv_norm;
    for (std::size_t i = 0; i < n_examples; ++i) {
      const double label = static_cast<double>(i % 2);
      const double sign = label > 0.5 ? 1.0 : -1.0;
      double* x = shard.features.data() + i * input_dim;
      for (std::size_t j = 0; j < input_dim; ++j)
        x[j] = sign * direction[j] + noise_sigma * rng.next_normal();
      shard.labels[i] = label;
    }
  }
  return shard;
}

/// Fraction of shard rows the classifier labels correctly (0.5 threshold).
inline double accuracy(const model_spec& spec, const param_vector& params, const dataset_shard& shard) {
  detail::check_dims(spec, params, shard);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < shard.size(); ++i) {
    const auto x = shard.row(i);
    double z = 0.0;
    if (spec.kind == model_kind::mlp) {
      const std::size_t h = spec.hidden_dim;
      const double* w1 = params.data();
      const double* b1 = w1 + h * spec.input_dim;
      const double* w2 = b1 + h;
      z = w2[h];
      for (std::size_t u = 0; u < h; ++u)
        z += w2[u] * std::tanh(detail::dot({w1 + u * spec.input_dim, spec.input_dim}, x) + b1[u]);
    } else {
      z = detail::dot({params.data(), spec.input_dim}, x) + params[spec.input_dim];
    }
    const double predicted = z > 0.0 ? 1.0 : 0.0;
    if (predicted == shard.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(shard.size());
}

}  // namespace feddq
