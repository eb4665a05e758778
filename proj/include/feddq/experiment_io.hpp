// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "feddq/analysis.hpp"
#include "feddq/errors.hpp"
#include "feddq/federation.hpp"
#include "feddq/numerics.hpp"
#include "feddq/policy.hpp"

namespace feddq::io {

using nlohmann::json;

/// Shortest round-trip decimal form, the format used for every CSV number.
inline std::string format_double(double v) {
  std::array<char, 64> buf;
  const auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw std::logic_error("format_double: buffer too small");
  return std::string(buf.data(), p);
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw config_error(where, "expected a number, got '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_u64(std::string_view s, const std::string& where) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw config_error(where, "expected an unsigned integer, got '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::string& where,
                                std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known) throw config_error(where + "." + item.key(), "unknown key");
  }
}

inline const json& require_field(const json& obj, const std::string& where, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw config_error(where + "." + key, "missing required key");
  return *it;
}

inline double get_double(const json& obj, const std::string& where, const char* key) {
  const json& v = require_field(obj, where, key);
  if (!v.is_number()) throw config_error(where + "." + key, "expected a number");
  return v.get<double>();
}

inline std::uint64_t get_uint(const json& obj, const std::string& where, const char* key) {
  const json& v = require_field(obj, where, key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw config_error(where + "." + key, "expected a nonnegative integer");
}

inline std::string get_string(const json& obj, const std::string& where, const char* key) {
  const json& v = require_field(obj, where, key);
  if (!v.is_string()) throw config_error(where + "." + key, "expected a string");
  return v.get<std::string>();
}

inline bool get_bool_or(const json& obj, const std::string& where, const char* key, bool fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_boolean()) throw config_error(where + "." + key, "expected a boolean");
  return it->get<bool>();
}

inline std::uint64_t get_uint_or(const json& obj, const std::string& where, const char* key,
                                 std::uint64_t fallback) {
  if (obj.find(key) == obj.end()) return fallback;
  return get_uint(obj, where, key);
}

inline double get_double_or(const json& obj, const std::string& where, const char* key,
                            double fallback) {
  if (obj.find(key) == obj.end()) return fallback;
  return get_double(obj, where, key);
}

}  // namespace detail

struct policy_entry {
  policy_config cfg;
  std::string label;
};

struct experiment_config {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = ".";
  std::optional<double> target_loss;
  model_spec model;
  synthetic_task task = synthetic_task::linreg;
  std::size_t n_examples = 0;
  std::size_t n_eval = 0;
  double noise_sigma = 0.0;
  federation_config fed;
  run_options options;
  std::vector<policy_entry> policies;
};

namespace detail {

inline policy_config parse_policy(const json& obj, const std::string& where) {
  if (!obj.is_object()) throw config_error(where, "expected an object");
  const std::string kind = get_string(obj, where, "kind");
  policy_config cfg;
  if (kind == "feddq") {
    reject_unknown_keys(obj, where, {"kind", "resolution", "bit_min", "bit_max"});
    cfg.kind = policy_kind::feddq;
    cfg.resolution = get_double_or(obj, where, "resolution", cfg.resolution);
  } else if (kind == "fixed") {
    reject_unknown_keys(obj, where, {"kind", "bits", "bit_min", "bit_max"});
    cfg.kind = policy_kind::fixed;
    cfg.fixed_bits = static_cast<int>(get_uint(obj, where, "bits"));
  } else if (kind == "ascending") {
    reject_unknown_keys(obj, where, {"kind", "s0", "bit_min", "bit_max"});
    cfg.kind = policy_kind::ascending;
    cfg.s0 = get_uint_or(obj, where, "s0", cfg.s0);
  } else if (kind == "full-precision") {
    reject_unknown_keys(obj, where, {"kind"});
    cfg.kind = policy_kind::full_precision;
  } else {
    throw config_error(where + ".kind", "unknown policy '" + kind + "'");
  }
  if (cfg.kind != policy_kind::full_precision) {
    cfg.bit_min = static_cast<int>(get_uint_or(obj, where, "bit_min", cfg.bit_min));
    cfg.bit_max = static_cast<int>(get_uint_or(obj, where, "bit_max", cfg.bit_max));
  }
  cfg.validate();
  return cfg;
}

inline std::string policy_label(const policy_config& cfg) {
  if (cfg.kind == policy_kind::fixed) return "fixed" + std::to_string(cfg.fixed_bits);
  return to_string(cfg.kind);
}

}  // namespace detail

/// Parses and validates a run configuration. Unknown keys anywhere in the
/// document are errors, as are missing required keys and type mismatches.
inline experiment_config parse_config(const json& root) {
  if (!root.is_object()) throw config_error("config", "expected a JSON object");
  detail::reject_unknown_keys(
      root, "config", {"seed", "output_dir", "target_loss", "model", "data", "federation", "policy"});

  experiment_config cfg;
  cfg.seed = detail::get_uint(root, "config", "seed");
  if (root.contains("output_dir")) cfg.output_dir = detail::get_string(root, "config", "output_dir");
  if (root.contains("target_loss")) {
    cfg.target_loss = detail::get_double(root, "config", "target_loss");
    if (!(*cfg.target_loss > 0.0)) throw config_error("config.target_loss", "must be positive");
  }

  const json& model = detail::require_field(root, "config", "model");
  detail::reject_unknown_keys(model, "model", {"kind", "input_dim", "hidden_dim", "output_dim"});
  const std::string kind = detail::get_string(model, "model", "kind");
  if (kind == "linear-regression")
    cfg.model.kind = model_kind::linear_regression;
  else if (kind == "logistic-regression")
    cfg.model.kind = model_kind::logistic_regression;
  else if (kind == "mlp")
    cfg.model.kind = model_kind::mlp;
  else
    throw config_error("model.kind", "unknown model '" + kind + "'");
  cfg.model.input_dim = detail::get_uint(model, "model", "input_dim");
  cfg.model.hidden_dim = detail::get_uint_or(model, "model", "hidden_dim", 0);
  cfg.model.output_dim = detail::get_uint_or(model, "model", "output_dim", 1);
  cfg.model.validate();

  const json& data = detail::require_field(root, "config", "data");
  detail::reject_unknown_keys(data, "data", {"task", "n_examples", "n_eval", "noise_sigma"});
  const std::string task = detail::get_string(data, "data", "task");
  if (task == "linreg")
    cfg.task = synthetic_task::linreg;
  else if (task == "logreg-blobs")
    cfg.task = synthetic_task::logreg_blobs;
  else
    throw config_error("data.task", "unknown task '" + task + "'");
  if (cfg.task == synthetic_task::logreg_blobs && cfg.model.kind == model_kind::linear_regression)
    throw config_error("data.task", "classification data needs a classifier model");
  cfg.n_examples = detail::get_uint(data, "data", "n_examples");
  cfg.n_eval = detail::get_uint(data, "data", "n_eval");
  cfg.noise_sigma = detail::get_double(data, "data", "noise_sigma");
  if (cfg.n_examples == 0) throw config_error("data.n_examples", "must be >= 1");
  if (cfg.n_eval == 0) throw config_error("data.n_eval", "must be >= 1");
  if (!(cfg.noise_sigma >= 0.0)) throw config_error("data.noise_sigma", "must be nonnegative");

  const json& fed = detail::require_field(root, "config", "federation");
  detail::reject_unknown_keys(fed, "federation",
                              {"n_clients", "r_selected", "rounds", "tau", "eta", "batch_size",
                               "partition", "shards_per_client", "verification", "parallel"});
  cfg.fed.n_clients = detail::get_uint(fed, "federation", "n_clients");
  cfg.fed.r_selected = detail::get_uint_or(fed, "federation", "r_selected", 0);
  cfg.fed.rounds = detail::get_uint(fed, "federation", "rounds");
  cfg.fed.sgd.tau = detail::get_uint(fed, "federation", "tau");
  cfg.fed.sgd.eta = detail::get_double(fed, "federation", "eta");
  cfg.fed.seed = cfg.seed;
  if (const auto it = fed.find("batch_size"); it != fed.end()) {
    if (it->is_string()) {
      if (it->get<std::string>() != "full")
        throw config_error("federation.batch_size", "expected a positive integer or \"full\"");
      cfg.fed.sgd.batch_size = kFullBatch;
    } else if (it->is_number_unsigned() && it->get<std::uint64_t>() > 0) {
      cfg.fed.sgd.batch_size = it->get<std::uint64_t>();
    } else if (it->is_number_integer() && it->get<std::int64_t>() > 0) {
      cfg.fed.sgd.batch_size = static_cast<std::size_t>(it->get<std::int64_t>());
    } else {
      throw config_error("federation.batch_size", "expected a positive integer or \"full\"");
    }
  }
  if (const auto it = fed.find("partition"); it != fed.end()) {
    const std::string p = detail::get_string(fed, "federation", "partition");
    if (p == "iid")
      cfg.fed.partition = partition_kind::iid;
    else if (p == "label-skew")
      cfg.fed.partition = partition_kind::label_skew;
    else
      throw config_error("federation.partition", "expected \"iid\" or \"label-skew\"");
  }
  cfg.fed.shards_per_client = detail::get_uint_or(fed, "federation", "shards_per_client", 2);
  cfg.options.verification = detail::get_bool_or(fed, "federation", "verification", false);
  cfg.options.parallel = detail::get_bool_or(fed, "federation", "parallel", false);
  cfg.fed.validate();

  const json& pol = detail::require_field(root, "config", "policy");
  if (pol.is_array()) {
    if (pol.empty()) throw config_error("policy", "must list at least one policy");
    for (std::size_t i = 0; i < pol.size(); ++i)
      cfg.policies.push_back(
          {detail::parse_policy(pol[i], "policy[" + std::to_string(i) + "]"), ""});
  } else {
    cfg.policies.push_back({detail::parse_policy(pol, "policy"), ""});
  }
  for (auto& entry : cfg.policies) {
    std::string label = detail::policy_label(entry.cfg);
    int suffix = 2;
    auto taken = [&](const std::string& l) {
      for (const auto& other : cfg.policies)
        if (&other != &entry && other.label == l) return true;
      return false;
    };
    while (taken(label)) label = detail::policy_label(entry.cfg) + "-" + std::to_string(suffix++);
    entry.label = label;
  }
  return cfg;
}

inline experiment_config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error(path.string(), "cannot open config file");
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw config_error(path.string(), std::string("invalid JSON: ") + e.what());
  }
  return parse_config(root);
}

inline constexpr const char* kRoundsCsvHeader =
    "round,policy,avg_bits,min_bits,max_bits,mean_range,paper_bits_round,wire_bits_round,"
    "paper_bits_cum,wire_bits_cum,avg_train_loss,eval_loss,eval_accuracy,grad_norm_sq";

inline std::string rounds_csv_text(const std::string& label,
                                   const std::vector<round_report>& reports) {
  std::string out = kRoundsCsvHeader;
  out += '\n';
  for (const auto& r : reports) {
    out += std::to_string(r.round);
    out += ',';
    out += label;
    out += ',';
    out += format_double(r.avg_bits);
    out += ',';
    out += std::to_string(r.min_bits);
    out += ',';
    out += std::to_string(r.max_bits);
    out += ',';
    out += format_double(r.mean_range);
    out += ',';
    out += std::to_string(r.paper_bits_round);
    out += ',';
    out += std::to_string(r.wire_bits_round);
    out += ',';
    out += std::to_string(r.paper_bits_cum);
    out += ',';
    out += std::to_string(r.wire_bits_cum);
    out += ',';
    out += format_double(r.avg_train_loss);
    out += ',';
    out += format_double(r.eval_loss);
    out += ',';
    if (r.eval_accuracy) out += format_double(*r.eval_accuracy);
    out += ',';
    if (r.grad_norm_sq) out += format_double(*r.grad_norm_sq);
    out += '\n';
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error(path.string(), "cannot open for writing");
  out << text;
  if (!out) throw io_error(path.string(), "write failed");
}

/// Bit cost and round count to first reach the target training loss. The
/// scanned sequence is f(X_0), ..., f(X_K): the per-round incoming losses
/// followed by the final loss. Reaching it at index m costs the bits of
/// the first m rounds.
struct target_scan {
  bool reached = false;
  std::size_t rounds = 0;
  std::uint64_t paper_bits = 0;
};

inline target_scan scan_target(const std::vector<round_report>& reports, double final_train_loss,
                               double target) {
  target_scan out;
  for (std::size_t m = 0; m < reports.size(); ++m) {
    if (reports[m].avg_train_loss <= target) {
      out.reached = true;
      out.rounds = m;
      out.paper_bits = m == 0 ? 0 : reports[m - 1].paper_bits_cum;
      return out;
    }
  }
  if (std::isfinite(final_train_loss) && final_train_loss <= target) {
    out.reached = true;
    out.rounds = reports.size();
    out.paper_bits = reports.empty() ? 0 : reports.back().paper_bits_cum;
  }
  return out;
}

inline json summary_entry(const std::string& label, const model_spec& spec,
                          const run_result& result, std::optional<double> target) {
  json entry;
  entry["policy"] = label;
  entry["rounds_run"] = result.reports.size();
  entry["final_train_loss"] =
      result.completed ? json(result.final_train_loss) : json(nullptr);
  if (result.reports.empty()) {
    entry["final_eval_metric"] = nullptr;
  } else {
    const auto& last = result.reports.back();
    entry["final_eval_metric"] =
        spec.is_classifier() && last.eval_accuracy ? *last.eval_accuracy : last.eval_loss;
  }
  entry["paper_bits_total"] = result.reports.empty() ? 0 : result.reports.back().paper_bits_cum;
  entry["wire_bits_total"] = result.reports.empty() ? 0 : result.reports.back().wire_bits_cum;
  entry["target_value"] = target ? json(*target) : json(nullptr);
  if (target && result.completed) {
    const target_scan scan = scan_target(result.reports, result.final_train_loss, *target);
    entry["bits_to_target"] = scan.reached ? json(scan.paper_bits) : json(nullptr);
    entry["rounds_to_target"] = scan.reached ? json(scan.rounds) : json(nullptr);
  } else {
    entry["bits_to_target"] = nullptr;
    entry["rounds_to_target"] = nullptr;
  }
  return entry;
}

/// Side artifact carrying the per-round, per-client data the bound
/// evaluator needs but the CSV schema does not hold.
inline json verification_json(const experiment_config& cfg, const run_result& result) {
  json v;
  v["seed"] = cfg.seed;
  v["n"] = cfg.fed.n_clients;
  v["r"] = cfg.fed.effective_r();
  v["d"] = cfg.model.param_count();
  v["rounds"] = result.reports.size();
  v["tau"] = cfg.fed.sgd.tau;
  v["eta"] = cfg.fed.sgd.eta;
  v["f0"] = result.reports.empty() ? json(nullptr) : json(result.reports.front().avg_train_loss);
  v["fK"] = result.completed ? json(result.final_train_loss) : json(nullptr);
  v["paper_bits_total"] = result.reports.empty() ? 0 : result.reports.back().paper_bits_cum;
  v["wire_bits_total"] = result.reports.empty() ? 0 : result.reports.back().wire_bits_cum;

  json ranges = json::array();
  json levels = json::array();
  json bits = json::array();
  std::uint64_t level_bits_acc = 0;
  double level_weighted = 0.0;
  bool uniform = true;
  std::uint64_t uniform_level = 0;
  for (const auto& rep : result.reports) {
    json rrow = json::array();
    json lrow = json::array();
    json brow = json::array();
    for (const auto& c : rep.clients) {
      rrow.push_back(c.range);
      lrow.push_back(c.level);
      brow.push_back(c.bits);
      if (c.level > 0) {
        if (uniform_level == 0)
          uniform_level = c.level;
        else if (c.level != uniform_level)
          uniform = false;
        level_weighted += static_cast<double>(c.paper_bits) * static_cast<double>(c.level);
        level_bits_acc += c.paper_bits;
      }
    }
    ranges.push_back(std::move(rrow));
    levels.push_back(std::move(lrow));
    bits.push_back(std::move(brow));
  }
  v["ranges"] = std::move(ranges);
  v["levels"] = std::move(levels);
  v["bits"] = std::move(bits);
  v["uniform_level"] = (uniform && uniform_level > 0) ? json(uniform_level) : json(nullptr);
  v["bit_weighted_mean_level"] =
      level_bits_acc > 0 ? json(level_weighted / static_cast<double>(level_bits_acc))
                         : json(nullptr);
  return v;
}

struct run_artifact {
  std::string label;
  std::filesystem::path csv_path;
  bool completed = false;
  std::string error;
};

/// Runs every configured policy on the shared data partition and writes
/// rounds CSVs, summary.json, and (in verification mode) the sidecar JSON.
inline std::vector<run_artifact> cmd_run(const std::filesystem::path& config_path) {
  const experiment_config cfg = load_config(config_path);

  const dataset_shard all =
      make_synthetic(cfg.task, cfg.model.input_dim, cfg.n_examples + cfg.n_eval, cfg.noise_sigma,
                     cfg.seed);
  dataset_shard train{all.dim, {}, {}};
  dataset_shard eval{all.dim, {}, {}};
  train.features.assign(all.features.begin(),
                        all.features.begin() + static_cast<std::ptrdiff_t>(cfg.n_examples * all.dim));
  train.labels.assign(all.labels.begin(),
                      all.labels.begin() + static_cast<std::ptrdiff_t>(cfg.n_examples));
  eval.features.assign(all.features.begin() + static_cast<std::ptrdiff_t>(cfg.n_examples * all.dim),
                       all.features.end());
  eval.labels.assign(all.labels.begin() + static_cast<std::ptrdiff_t>(cfg.n_examples),
                     all.labels.end());

  const std::vector<client_state> clients = partition_dataset(train, cfg.fed);

  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw io_error(cfg.output_dir.string(), "cannot create output directory");

  const bool single = cfg.policies.size() == 1;
  std::vector<run_artifact> artifacts;
  json summary = json::array();
  for (const auto& entry : cfg.policies) {
    const run_result result =
        run_experiment(cfg.model, clients, eval, cfg.fed, entry.cfg, cfg.options);

    run_artifact art;
    art.label = entry.label;
    art.completed = result.completed;
    art.error = result.error;
    const std::string stem = single ? std::string("rounds") : "rounds_" + entry.label;
    art.csv_path = cfg.output_dir / (stem + ".csv");
    write_text_file(art.csv_path, rounds_csv_text(entry.label, result.reports));
    if (cfg.options.verification)
      write_text_file(cfg.output_dir / (stem + ".verification.json"),
                      verification_json(cfg, result).dump(2) + "\n");
    summary.push_back(summary_entry(entry.label, cfg.model, result, cfg.target_loss));
    artifacts.push_back(std::move(art));
  }
  write_text_file(cfg.output_dir / "summary.json", summary.dump(2) + "\n");
  return artifacts;
}

struct quantize_stats {
  std::size_t count = 0;
  double vmin = 0.0;
  double vmax = 0.0;
  int bits = 0;
  std::uint64_t level = 0;
  std::uint64_t paper_bits = 0;
  std::uint64_t wire_bits = 0;
  double mse = 0.0;
};

/// Quantizes a whitespace-separated list of floats into a wire frame and
/// reports the realized cost and distortion.
inline quantize_stats cmd_quantize(const std::filesystem::path& input_path, int bits,
                                   std::uint64_t seed, const std::filesystem::path& out_path) {
  std::ifstream in(input_path);
  if (!in) throw io_error(input_path.string(), "cannot open input file");
  std::vector<double> values;
  std::string token;
  while (in >> token) values.push_back(parse_double(token, input_path.string()));
  if (values.empty()) throw config_error(input_path.string(), "no values in input");

  random_stream rng = random_stream::keyed(seed, 0, 0, "cli-quantize");
  const quantized_payload payload = quantize(values, bits, rng);
  const std::vector<std::uint8_t> frame = encode_frame(payload);
  const param_vector back = dequantize(payload);

  quantize_stats stats;
  stats.count = values.size();
  stats.vmin = payload.vmin;
  stats.vmax = payload.vmax;
  stats.bits = payload.bit_width;
  stats.level = payload.level();
  stats.paper_bits = payload.bit_width == 0
                         ? 32
                         : paper_bit_cost(static_cast<std::uint64_t>(values.size()), stats.level);
  stats.wire_bits = 8 * static_cast<std::uint64_t>(frame.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double e = back[i] - values[i];
    stats.mse += e * e;
  }
  stats.mse /= static_cast<double>(values.size());

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw io_error(out_path.string(), "cannot open output file");
  out.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
  if (!out) throw io_error(out_path.string(), "write failed");
  return stats;
}

struct parsed_rounds_csv {
  std::vector<double> avg_train_loss;
  std::vector<double> grad_norm_sq;
  std::uint64_t paper_bits_total = 0;
};

inline parsed_rounds_csv read_rounds_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error(path.string(), "cannot open rounds CSV");
  std::string line;
  if (!std::getline(in, line)) throw config_error(path.string(), "empty CSV");
  if (line == std::string(kRoundsCsvHeader) + "\r") line.pop_back();
  if (line != kRoundsCsvHeader) throw config_error(path.string(), "unexpected CSV header");

  parsed_rounds_csv out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 14)
      throw config_error(path.string(), "row " + std::to_string(row) + ": expected 14 fields");
    const std::string where = path.string() + " row " + std::to_string(row);
    out.avg_train_loss.push_back(parse_double(fields[10], where));
    if (fields[13].empty())
      throw config_error(where,
                         "grad_norm_sq is empty, bound evaluation needs a verification run");
    out.grad_norm_sq.push_back(parse_double(fields[13], where));
    out.paper_bits_total = parse_u64(fields[8], where);
    ++row;
  }
  if (out.avg_train_loss.empty()) throw config_error(path.string(), "CSV has no data rows");
  return out;
}

/// Reads a verification run's CSV and sidecar plus externally estimated
/// constants, evaluates the convergence bound against the measured mean
/// squared gradient norm, and writes a JSON report.
inline json cmd_bound(const std::filesystem::path& csv_path,
                      const std::filesystem::path& constants_path,
                      const std::filesystem::path& report_path) {
  const parsed_rounds_csv csv = read_rounds_csv(csv_path);

  std::filesystem::path sidecar = csv_path;
  sidecar.replace_extension(".verification.json");
  std::ifstream sin(sidecar);
  if (!sin) throw io_error(sidecar.string(), "cannot open verification sidecar");
  json v;
  try {
    v = json::parse(sin);
  } catch (const json::parse_error& e) {
    throw config_error(sidecar.string(), std::string("invalid JSON: ") + e.what());
  }

  std::ifstream cin_(constants_path);
  if (!cin_) throw io_error(constants_path.string(), "cannot open constants file");
  json consts;
  try {
    consts = json::parse(cin_);
  } catch (const json::parse_error& e) {
    throw config_error(constants_path.string(), std::string("invalid JSON: ") + e.what());
  }
  detail::reject_unknown_keys(consts, "constants", {"L", "sigma2"});
  const double L = detail::get_double(consts, "constants", "L");
  const double sigma2 = detail::get_double(consts, "constants", "sigma2");

  bound_inputs in;
  in.L = L;
  in.sigma2 = sigma2;
  in.eta = detail::get_double(v, "verification", "eta");
  in.tau = detail::get_uint(v, "verification", "tau");
  in.n = detail::get_uint(v, "verification", "n");
  in.r = detail::get_uint(v, "verification", "r");
  in.d = detail::get_uint(v, "verification", "d");
  in.B = static_cast<double>(detail::get_uint(v, "verification", "paper_bits_total"));
  if (!v.contains("f0") || v["f0"].is_null() || !v.contains("fK") || v["fK"].is_null())
    throw config_error(sidecar.string(), "run did not complete, no f0/fK");
  in.f0 = v["f0"].get<double>();
  in.fK = v["fK"].get<double>();
  if (!v.contains("uniform_level"))
    throw config_error(sidecar.string(), "missing uniform_level");
  if (!v["uniform_level"].is_null())
    in.s = v["uniform_level"].get<double>();
  else if (v.contains("bit_weighted_mean_level") && !v["bit_weighted_mean_level"].is_null())
    in.s = v["bit_weighted_mean_level"].get<double>();
  else
    throw config_error(sidecar.string(), "no quantization level recorded");
  for (const auto& row : v.at("ranges")) {
    std::vector<double> r;
    for (const auto& x : row) r.push_back(x.get<double>());
    in.ranges.push_back(std::move(r));
  }
  if (in.ranges.size() != csv.grad_norm_sq.size())
    throw config_error(sidecar.string(), "round count disagrees with the CSV");

  const std::size_t K = csv.grad_norm_sq.size();
  double measured = 0.0;
  for (double g : csv.grad_norm_sq) measured += g;
  measured /= static_cast<double>(K) * static_cast<double>(in.tau);

  bound_report rep = in.r == in.n ? theorem1_rhs(in) : generalized_rhs(in);
  rep.measured_lhs = measured;

  json out;
  out["terms"]["initial_gap"] = rep.initial_gap_term;
  out["terms"]["range"] = rep.range_term;
  out["terms"]["sigma"] = rep.sigma_term;
  out["terms"]["sigma_local"] = rep.sigma_local_term;
  out["terms"]["selection_quant"] = rep.selection_quant_term;
  out["terms"]["selection_sample"] = rep.selection_sample_term;
  out["total_rhs"] = rep.total;
  out["measured_lhs"] = measured;
  out["satisfied"] = rep.satisfied();
  const double q = q_factor(in.d, in.s);
  out["q"] = q;
  out["stepsize_condition_ok"] = stepsize_condition(L, in.eta, in.tau, in.n, in.r, q);
  try {
    const double sstar = optimal_level(L, in.d, in.n, in.ranges, in.f0, in.fK);
    out["optimal_level"] = sstar;
    out["optimal_bits"] = std::max(1, feddq::detail::ceil_log2_positive(sstar + 1.0));
  } catch (const std::invalid_argument&) {
    out["optimal_level"] = nullptr;
    out["optimal_bits"] = nullptr;
  }
  out["inputs"] = {{"L", in.L},     {"sigma2", in.sigma2}, {"eta", in.eta}, {"B", in.B},
                   {"s", in.s},     {"f0", in.f0},         {"fK", in.fK},   {"tau", in.tau},
                   {"n", in.n},     {"r", in.r},           {"d", in.d},     {"rounds", K}};
  write_text_file(report_path, out.dump(2) + "\n");
  return out;
}

}  // namespace feddq::io
