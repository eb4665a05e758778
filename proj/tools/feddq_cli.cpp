// SPDX-License-Identifier: Apache-2.0
//
// feddq command line: run federated experiments from a JSON config,
// quantize a float list into a wire frame, or evaluate the convergence
// bound on a finished verification run.
//
// Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include "CLI11.hpp"

#include "feddq/errors.hpp"
#include "feddq/experiment_io.hpp"

namespace {

int run_command(const std::string& config_path) {
  const auto artifacts = feddq::io::cmd_run(config_path);
  bool diverged = false;
  for (const auto& art : artifacts) {
    if (art.completed) {
      std::printf("policy %s: completed, wrote %s\n", art.label.c_str(),
                  art.csv_path.string().c_str());
    } else {
      std::printf("policy %s: diverged (%s), partial results in %s\n", art.label.c_str(),
                  art.error.c_str(), art.csv_path.string().c_str());
      diverged = true;
    }
  }
  return diverged ? 3 : 0;
}

int quantize_command(const std::string& input, int bits, std::uint64_t seed,
                     const std::string& out) {
  const feddq::io::quantize_stats stats = feddq::io::cmd_quantize(input, bits, seed, out);
  std::printf("count: %zu\n", stats.count);
  std::printf("vmin: %s\n", feddq::io::format_double(stats.vmin).c_str());
  std::printf("vmax: %s\n", feddq::io::format_double(stats.vmax).c_str());
  std::printf("bits: %d\n", stats.bits);
  std::printf("level: %llu\n", static_cast<unsigned long long>(stats.level));
  std::printf("paper_bits: %llu\n", static_cast<unsigned long long>(stats.paper_bits));
  std::printf("wire_bits: %llu\n", static_cast<unsigned long long>(stats.wire_bits));
  std::printf("mse: %s\n", feddq::io::format_double(stats.mse).c_str());
  return 0;
}

int bound_command(const std::string& csv, const std::string& constants, std::string out) {
  if (out.empty())
    out = (std::filesystem::path(csv).parent_path() / "bound_report.json").string();
  const auto report = feddq::io::cmd_bound(csv, constants, out);
  std::printf("total_rhs: %s\n", feddq::io::format_double(report["total_rhs"].get<double>()).c_str());
  std::printf("measured_lhs: %s\n",
              feddq::io::format_double(report["measured_lhs"].get<double>()).c_str());
  std::printf("satisfied: %s\n", report["satisfied"].get<bool>() ? "true" : "false");
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated learning with descending-bit quantized uplinks"};
  app.require_subcommand(1);

  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "run the experiment described by a JSON config");
  run->add_option("config", config_path, "path to the config JSON")->required();

  std::string quant_input;
  std::string quant_out;
  int quant_bits = 8;
  std::uint64_t quant_seed = 0;
  CLI::App* quant = app.add_subcommand("quantize", "quantize a float list into a wire frame");
  quant->add_option("input", quant_input, "text file of whitespace-separated floats")->required();
  quant->add_option("--bits", quant_bits, "bit width, 1 to 16")->required();
  quant->add_option("--seed", quant_seed, "randomization seed")->default_val(0);
  quant->add_option("--out", quant_out, "output frame path")->required();

  std::string bound_csv;
  std::string bound_constants;
  std::string bound_out;
  CLI::App* bound = app.add_subcommand("bound", "evaluate the convergence bound on a run");
  bound->add_option("rounds_csv", bound_csv, "rounds CSV from a verification run")->required();
  bound->add_option("--constants", bound_constants, "JSON file with L and sigma2")->required();
  bound->add_option("--out", bound_out, "report path, default bound_report.json next to the CSV");

  try {
    app.parse(argc, argv);
    if (run->parsed()) return run_command(config_path);
    if (quant->parsed()) return quantize_command(quant_input, quant_bits, quant_seed, quant_out);
    return bound_command(bound_csv, bound_constants, bound_out);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  } catch (const feddq::config_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const feddq::divergence_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const feddq::io_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
