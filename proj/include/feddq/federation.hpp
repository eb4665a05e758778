// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "feddq/codec.hpp"
#include "feddq/errors.hpp"
#include "feddq/numerics.hpp"
#include "feddq/param_vector.hpp"
#include "feddq/policy.hpp"
#include "feddq/quantizer.hpp"
#include "feddq/random.hpp"

namespace feddq {

enum class partition_kind { iid, label_skew };

inline const char* to_string(partition_kind k) {
  return k == partition_kind::iid ? "iid" : "label-skew";
}

struct federation_config {
  std::size_t n_clients = 1;
  std::size_t r_selected = 0;  // 0 means all clients
  std::size_t rounds = 1;
  sgd_config sgd;
  std::uint64_t seed = 0;
  partition_kind partition = partition_kind::iid;
  std::size_t shards_per_client = 2;  // label-skew only

  std::size_t effective_r() const { return r_selected == 0 ? n_clients : r_selected; }

  void validate() const {
    if (n_clients == 0) throw config_error("federation.n_clients", "must be >= 1");
    if (effective_r() > n_clients)
      throw config_error("federation.r_selected", "cannot exceed n_clients");
    if (rounds == 0) throw config_error("federation.rounds", "must be >= 1");
    if (!(sgd.eta > 0.0) || !std::isfinite(sgd.eta))
      throw config_error("federation.eta", "must be positive and finite");
    if (sgd.tau == 0) throw config_error("federation.tau", "must be >= 1");
    if (partition == partition_kind::label_skew && shards_per_client == 0)
      throw config_error("federation.shards_per_client", "must be >= 1");
  }
};

struct client_state {
  std::size_t id = 0;
  dataset_shard shard;
};

/// Splits one dataset into n client shards.
///
/// iid shuffles all row indices with the run's partition stream and deals
/// contiguous chunks. label-skew sorts rows by label, slices them into
/// n * shards_per_client contiguous label-sorted chunks, and deals the
/// chunks out in shuffled order, so each client sees only a few label
/// regions. Chunk sizes differ by at most one either way.
inline std::vector<client_state> partition_dataset(const dataset_shard& data,
                                                   const federation_config& cfg) {
  cfg.validate();
  data.validate();
  const std::size_t n = cfg.n_clients;
  const std::size_t m = data.size();

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);

  std::size_t n_chunks = n;
  if (cfg.partition == partition_kind::iid) {
    random_stream rng = random_stream::keyed(cfg.seed, 0, 0, "partition");
    for (std::size_t i = m; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
      std::swap(order[i - 1], order[j]);
    }
  } else {
    n_chunks = n * cfg.shards_per_client;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return data.labels[a] < data.labels[b]; });
  }
  if (m < n_chunks)
    throw config_error("federation.n_clients", "dataset smaller than the number of shards");

  // Chunk c covers [c*base + min(c, extra), ...), sizes base or base + 1.
  const std::size_t base = m / n_chunks;
  const std::size_t extra = m % n_chunks;
  auto chunk_begin = [&](std::size_t c) { return c * base + std::min(c, extra); };

  std::vector<std::size_t> chunk_of(n_chunks);
  std::iota(chunk_of.begin(), chunk_of.end(), 0);
  if (cfg.partition == partition_kind::label_skew) {
    random_stream rng = random_stream::keyed(cfg.seed, 0, 0, "partition");
    for (std::size_t i = n_chunks; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
      std::swap(chunk_of[i - 1], chunk_of[j]);
    }
  }

  const std::size_t chunks_per_client = n_chunks / n;
  std::vector<client_state> clients(n);
  for (std::size_t i = 0; i < n; ++i) {
    clients[i].id = i;
    clients[i].shard.dim = data.dim;
    for (std::size_t k = 0; k < chunks_per_client; ++k) {
      const std::size_t c = chunk_of[i * chunks_per_client + k];
      for (std::size_t pos = chunk_begin(c); pos < chunk_begin(c + 1); ++pos) {
        const auto row = data.row(order[pos]);
        clients[i].shard.features.insert(clients[i].shard.features.end(), row.begin(), row.end());
        clients[i].shard.labels.push_back(data.labels[order[pos]]);
      }
    }
    clients[i].shard.validate();
  }
  return clients;
}

struct local_outcome {
  param_vector delta;           // local final minus global
  double loss_before = 0.0;     // at the incoming global model
  double loss_after = 0.0;      // at the local final model
  std::vector<param_vector> iterates;  // pre-step local models, recorded on request
};

/// Runs tau local SGD steps from the global model and returns the update.
/// Throws divergence_error when the loss or any parameter stops being
/// finite.
inline local_outcome local_round(const model_spec& spec, const client_state& client,
                                 const param_vector& global, const sgd_config& sgd,
                                 std::size_t round, random_stream& rng, bool record_iterates) {
  local_outcome out;
  out.loss_before = loss(spec, global, client.shard);
  if (!std::isfinite(out.loss_before))
    throw divergence_error(client.id, round, "loss is not finite at the incoming model");

  param_vector x = global;
  if (record_iterates) out.iterates.reserve(sgd.tau);
  for (std::size_t t = 0; t < sgd.tau; ++t) {
    if (record_iterates) out.iterates.push_back(x);
    const param_vector grad = gradient(spec, x, client.shard, sgd.batch_size, rng);
    x = sgd_step(x, grad, sgd.eta);
    if (!all_finite(x)) throw divergence_error(client.id, round, "parameters diverged");
  }

  out.loss_after = loss(spec, x, client.shard);
  if (!std::isfinite(out.loss_after))
    throw divergence_error(client.id, round, "loss diverged during local training");

  out.delta.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.delta[i] = x[i] - global[i];
  return out;
}

/// One client's uplink contribution: a decoded quantized payload or a raw
/// full-precision delta.
struct uplink_update {
  double weight = 0.0;
  std::variant<quantized_payload, param_vector> update;
};

/// FedAvg aggregation: global plus the weighted sum of client deltas.
/// Weights must sum to one within 1e-9 and every update must match the
/// model dimension.
inline param_vector aggregate(const param_vector& global,
                              const std::vector<uplink_update>& updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate: no updates");
  double weight_sum = 0.0;
  for (const auto& u : updates) weight_sum += u.weight;
  if (std::abs(weight_sum - 1.0) > 1e-9)
    throw std::invalid_argument("aggregate: weights must sum to 1");

  param_vector acc(global.size(), 0.0);
  for (const auto& u : updates) {
    if (const auto* payload = std::get_if<quantized_payload>(&u.update)) {
      if (payload->count != global.size())
        throw dimension_error(global.size(), payload->count, "aggregate update");
      const param_vector delta = dequantize(*payload);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += u.weight * delta[i];
    } else {
      const auto& delta = std::get<param_vector>(u.update);
      if (delta.size() != global.size())
        throw dimension_error(global.size(), delta.size(), "aggregate update");
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += u.weight * delta[i];
    }
  }
  param_vector next(global.size());
  for (std::size_t i = 0; i < next.size(); ++i) next[i] = global[i] + acc[i];
  return next;
}

struct client_round_stat {
  std::size_t client_id = 0;
  double range = 0.0;
  int bits = 0;
  std::uint64_t level = 0;
  std::uint64_t paper_bits = 0;
  std::uint64_t wire_bits = 0;
  double loss_before = 0.0;
  double loss_after = 0.0;
};

struct round_report {
  std::size_t round = 0;
  std::vector<client_round_stat> clients;  // selected clients, ascending id
  double avg_bits = 0.0;
  int min_bits = 0;
  int max_bits = 0;
  double mean_range = 0.0;
  std::uint64_t paper_bits_round = 0;
  std::uint64_t wire_bits_round = 0;
  std::uint64_t paper_bits_cum = 0;
  std::uint64_t wire_bits_cum = 0;
  double avg_train_loss = 0.0;  // weighted mean of selected clients' loss at the incoming model
  double eval_loss = 0.0;
  std::optional<double> eval_accuracy;
  std::optional<double> grad_norm_sq;  // verification: sum_t ||grad f(mean local iterate_t)||^2
  double delta_norm_sq = 0.0;          // ||X_{m+1} - X_m||^2
};

struct run_options {
  bool verification = false;  // record per-step mean-iterate gradient norms; requires r == n
  bool parallel = false;      // run client work on std::async workers
};

struct run_result {
  std::vector<round_report> reports;
  param_vector initial_model;
  param_vector final_model;
  double final_train_loss = std::numeric_limits<double>::quiet_NaN();
  bool completed = false;
  std::string error;
};

/// Deterministic model initialization: zeros for the linear models, scaled
/// uniform weights for the MLP hidden and output layers (biases zero).
inline param_vector initial_params(const model_spec& spec, std::uint64_t seed) {
  spec.validate();
  param_vector x(spec.param_count(), 0.0);
  if (spec.kind != model_kind::mlp) return x;

  random_stream rng = random_stream::keyed(seed, 0, 0, "init");
  const std::size_t in = spec.input_dim;
  const std::size_t h = spec.hidden_dim;
  const double a1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(h));
  for (std::size_t i = 0; i < h * in; ++i) x[i] = rng.next_uniform(-a1, a1);
  for (std::size_t i = 0; i < h; ++i) x[h * in + h + i] = rng.next_uniform(-a2, a2);
  return x;
}

/// Global objective f(x) = sum_i p_i f_i(x) with p_i proportional to shard
/// size, over every client.
inline double global_train_loss(const model_spec& spec, const param_vector& x,
                                const std::vector<client_state>& clients) {
  std::size_t total = 0;
  for (const auto& c : clients) total += c.shard.size();
  double f = 0.0;
  for (const auto& c : clients)
    f += (static_cast<double>(c.shard.size()) / static_cast<double>(total)) *
         loss(spec, x, c.shard);
  return f;
}

/// Weighted gradient of the global objective, over every client.
inline param_vector global_gradient(const model_spec& spec, const param_vector& x,
                                    const std::vector<client_state>& clients) {
  std::size_t total = 0;
  for (const auto& c : clients) total += c.shard.size();
  param_vector g(x.size(), 0.0);
  for (const auto& c : clients) {
    const double p = static_cast<double>(c.shard.size()) / static_cast<double>(total);
    const param_vector gi = gradient(spec, x, c.shard);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += p * gi[i];
  }
  return g;
}

namespace detail {

// Uniform client selection without replacement, returned in ascending id
// order so downstream iteration order is deterministic.
inline std::vector<std::size_t> select_clients(std::size_t n, std::size_t r, std::uint64_t seed,
                                               std::size_t round) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  if (r < n) {
    random_stream rng = random_stream::keyed(seed, round, 0, "select");
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
      std::swap(ids[i], ids[j]);
    }
    ids.resize(r);
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

// Everything one client produces in a round. The payload travels encoded so
// the hot path always exercises the wire codec.
struct client_work {
  local_outcome outcome;
  bit_decision decision;
  std::vector<std::uint8_t> frame;  // empty for the full-precision bypass
  std::uint64_t wire_bits = 0;
  double range = 0.0;
};

inline client_work run_client(const model_spec& spec, const client_state& client,
                              const param_vector& global, const federation_config& cfg,
                              const policy_config& policy, const bit_decision& preset,
                              std::size_t round, bool record_iterates) {
  client_work w;
  random_stream rng = random_stream::keyed(cfg.seed, round, client.id, "local-sgd");
  w.outcome = local_round(spec, client, global, cfg.sgd, round, rng, record_iterates);
  const range_stat rs = compute_range(w.outcome.delta);
  w.range = rs.range;

  if (policy.kind == policy_kind::full_precision) {
    w.decision = preset;
    w.decision.range = rs.range;
    w.wire_bits = 64 * static_cast<std::uint64_t>(w.outcome.delta.size());
  } else {
    w.decision = policy.kind == policy_kind::feddq ? decide_bits_feddq(rs.range, policy) : preset;
    w.decision.range = rs.range;
    random_stream qrng = random_stream::keyed(cfg.seed, round, client.id, "quantize");
    const quantized_payload payload = quantize(w.outcome.delta, w.decision.bits, qrng);
    // A degenerate update collapses to the zero-bit frame regardless of the
    // decision; report what actually went on the wire.
    w.decision.bits = payload.bit_width;
    w.decision.level = payload.level();
    w.frame = encode_frame(payload);
    w.wire_bits = 8 * static_cast<std::uint64_t>(w.frame.size());
  }
  w.decision.client_id = client.id;
  w.decision.round = round;
  return w;
}

}  // namespace detail

/// Runs the full federated loop: select clients, local SGD, per-client bit
/// decision, quantize, encode, decode, aggregate, evaluate. Divergence
/// stops the run early and returns the partial report trail with
/// completed == false.
inline run_result run_experiment(const model_spec& spec, const std::vector<client_state>& clients,
                                 const dataset_shard& eval_set, const federation_config& cfg,
                                 const policy_config& policy, const run_options& options = {}) {
  spec.validate();
  cfg.validate();
  policy.validate();
  if (clients.size() != cfg.n_clients)
    throw dimension_error(cfg.n_clients, clients.size(), "run client roster");
  eval_set.validate();
  if (eval_set.dim != spec.input_dim)
    throw dimension_error(spec.input_dim, eval_set.dim, "eval set dimension");
  for (const auto& c : clients)
    if (c.shard.dim != spec.input_dim)
      throw dimension_error(spec.input_dim, c.shard.dim, "client shard dimension");
  const std::size_t r = cfg.effective_r();
  if (options.verification && r != cfg.n_clients)
    throw config_error("federation.verification", "requires r_selected == n_clients");

  run_result result;
  result.initial_model = initial_params(spec, cfg.seed);
  param_vector x = result.initial_model;

  policy_state pstate;
  std::uint64_t paper_cum = 0;
  std::uint64_t wire_cum = 0;
  const auto d = static_cast<std::uint64_t>(x.size());

  for (std::size_t m = 0; m < cfg.rounds; ++m) {
    const std::vector<std::size_t> selected = detail::select_clients(cfg.n_clients, r, cfg.seed, m);

    // Fixed and full-precision decisions are global; ascending decides once
    // per round from the previous round's average training loss.
    bit_decision preset;
    switch (policy.kind) {
      case policy_kind::fixed: preset = decide_bits_fixed(policy); break;
      case policy_kind::full_precision: preset = decide_bits_full_precision(); break;
      case policy_kind::ascending:
        // Round 0 runs at s0 (the loss ratio is 1 by definition); later
        // rounds grow the level from the previous round's average loss.
        if (pstate.have_initial_loss)
          preset = decide_bits_ascending(result.reports.back().avg_train_loss, pstate, policy);
        else
          preset = detail::clamped_decision(ceil_log2_u64(policy.s0 + 1), 0.0, policy);
        break;
      case policy_kind::feddq: break;
    }

    std::vector<detail::client_work> work(selected.size());
    try {
      if (options.parallel && selected.size() > 1) {
        std::vector<std::future<detail::client_work>> futures;
        futures.reserve(selected.size());
        for (const std::size_t id : selected)
          futures.push_back(std::async(std::launch::async, [&, id] {
            return detail::run_client(spec, clients[id], x, cfg, policy, preset, m,
                                      options.verification);
          }));
        for (std::size_t k = 0; k < futures.size(); ++k) work[k] = futures[k].get();
      } else {
        for (std::size_t k = 0; k < selected.size(); ++k)
          work[k] = detail::run_client(spec, clients[selected[k]], x, cfg, policy, preset, m,
                                       options.verification);
      }
    } catch (const divergence_error& e) {
      result.error = e.what();
      return result;
    }

    // Ascending needs f0 before its first real decision; round 0 always
    // runs at s0 and records the starting loss.
    std::size_t selected_examples = 0;
    for (const std::size_t id : selected) selected_examples += clients[id].shard.size();

    round_report rep;
    rep.round = m;
    rep.min_bits = work[0].decision.bits;
    rep.max_bits = work[0].decision.bits;
    std::vector<uplink_update> updates(selected.size());
    for (std::size_t k = 0; k < selected.size(); ++k) {
      const auto& w = work[k];
      const double p = static_cast<double>(clients[selected[k]].shard.size()) /
                       static_cast<double>(selected_examples);
      updates[k].weight = p;
      if (policy.kind == policy_kind::full_precision)
        updates[k].update = w.outcome.delta;
      else
        updates[k].update = decode_frame(w.frame);

      client_round_stat cs;
      cs.client_id = selected[k];
      cs.range = w.range;
      cs.bits = w.decision.bits;
      cs.level = w.decision.level;
      cs.paper_bits = decision_paper_bits(d, w.decision);
      cs.wire_bits = w.wire_bits;
      cs.loss_before = w.outcome.loss_before;
      cs.loss_after = w.outcome.loss_after;
      rep.clients.push_back(cs);

      rep.avg_bits += cs.bits;
      rep.min_bits = std::min(rep.min_bits, cs.bits);
      rep.max_bits = std::max(rep.max_bits, cs.bits);
      rep.mean_range += cs.range;
      rep.paper_bits_round += cs.paper_bits;
      rep.wire_bits_round += cs.wire_bits;
      rep.avg_train_loss += p * cs.loss_before;
    }
    rep.avg_bits /= static_cast<double>(selected.size());
    rep.mean_range /= static_cast<double>(selected.size());
    paper_cum += rep.paper_bits_round;
    wire_cum += rep.wire_bits_round;
    rep.paper_bits_cum = paper_cum;
    rep.wire_bits_cum = wire_cum;

    if (!pstate.have_initial_loss) {
      pstate.have_initial_loss = true;
      pstate.initial_loss = rep.avg_train_loss;
    }

    param_vector next = aggregate(x, updates);
    rep.delta_norm_sq = l2_distance_sq(next, x);

    if (options.verification) {
      // Stationarity measure: gradients of the global objective at the mean
      // of the clients' pre-step local iterates, summed over local steps.
      double gsum = 0.0;
      param_vector mean_iter(x.size());
      for (std::size_t t = 0; t < cfg.sgd.tau; ++t) {
        std::fill(mean_iter.begin(), mean_iter.end(), 0.0);
        for (const auto& w : work)
          for (std::size_t i = 0; i < mean_iter.size(); ++i)
            mean_iter[i] += w.outcome.iterates[t][i];
        for (double& v : mean_iter) v /= static_cast<double>(work.size());
        gsum += l2_norm_sq(global_gradient(spec, mean_iter, clients));
      }
      rep.grad_norm_sq = gsum;
    }

    x = std::move(next);
    rep.eval_loss = loss(spec, x, eval_set);
    if (spec.is_classifier()) rep.eval_accuracy = accuracy(spec, x, eval_set);

    pstate.round = m + 1;
    result.reports.push_back(std::move(rep));
  }

  result.final_model = x;
  result.final_train_loss = global_train_loss(spec, x, clients);
  result.completed = std::isfinite(result.final_train_loss);
  if (!result.completed) result.error = "final training loss is not finite";
  return result;
}

}  // namespace feddq
