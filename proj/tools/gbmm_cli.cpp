// gbmm: command-line front end for the experiment runners.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gbmm/gbmm.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
};

gbmm::ExperimentConfig load_config(const CommonOptions& opts) {
  gbmm::ExperimentConfig config;
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path);
    if (!in) throw gbmm::Error("cannot open config file " + opts.config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw gbmm::Error("config file is not valid JSON: " + std::string(e.what()));
    }
    config = j.get<gbmm::ExperimentConfig>();
  }
  if (opts.seed) config.seed = *opts.seed;
  if (opts.threads) config.threads = *opts.threads;
  return config;
}

void emit(const CommonOptions& opts, const std::string& text) {
  if (opts.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(opts.out, std::ios::binary);
  if (!os) throw gbmm::Error("cannot write " + opts.out);
  os << text;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw gbmm::Error("cannot write " + path);
  os << j.dump(2) << '\n';
}

/// <out>.meta.json: everything needed to replay the run. The thread count is
/// left out on purpose since it cannot change results.
void write_meta(const CommonOptions& opts, const std::string& command, const gbmm::ExperimentConfig& config) {
  if (opts.out.empty()) return;
  nlohmann::json cfg = config;
  cfg.erase("threads");
  const nlohmann::json meta = {{"command", command},
                               {"version", gbmm::kVersion},
                               {"seed", config.seed},
                               {"config_hash", gbmm::config_hash(config)},
                               {"config", cfg}};
  write_json_file(opts.out + ".meta.json", meta);
}

std::string csv(const std::vector<gbmm::SweepRow>& rows) {
  std::ostringstream os;
  gbmm::write_csv(os, rows);
  return os.str();
}

void add_common(CLI::App* sub, CommonOptions& opts) {
  sub->add_option("-c,--config", opts.config_path, "JSON experiment config (defaults used when omitted)")
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", opts.seed, "master seed override");
  sub->add_option("--threads", opts.threads, "worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  sub->add_option("-o,--out", opts.out, "output file (stdout when omitted)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Beamspace index-modulation experiments for mmWave MIMO"};
  app.set_version_flag("--version", std::string(gbmm::kVersion));
  app.require_subcommand(1);

  CommonOptions opts;
  auto* sweep = app.add_subcommand("sweep", "SE versus SNR for the optimized families and the WF baseline");
  auto* converge = app.add_subcommand("converge", "lower-bound optimizer convergence traces on one channel");
  auto* hybrid = app.add_subcommand("hybrid", "fully-digital versus hybrid precoders and combiners");
  auto* ofdm = app.add_subcommand("ofdm", "multi-carrier study with shared analog precoders");
  auto* codec = app.add_subcommand("codec", "codeword partition for an activation distribution");
  auto* gen = app.add_subcommand("gen-channels", "write channel realizations as JSON");
  for (auto* sub : {sweep, converge, hybrid, ofdm, codec, gen}) add_common(sub, opts);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = load_config(opts);
    if (sweep->parsed()) {
      emit(opts, csv(gbmm::run_sweep(config)));
      write_meta(opts, "sweep", config);
    } else if (converge->parsed()) {
      const auto result = gbmm::run_convergence(config);
      std::ostringstream os;
      gbmm::write_trace_csv(os, result);
      emit(opts, os.str());
      nlohmann::json summary = {{"snr_db", config.convergence_snr_db},
                                {"alg2_lower_bound_plus_gap", result.alg2_lower_bound_plus_gap},
                                {"alg2_exact_mc", result.alg2_exact_mc},
                                {"wf_capacity", result.wf_capacity}};
      for (const auto& t : result.traces)
        summary[t.variant] = {{"final_lower_bound_plus_gap", t.final_lower_bound_plus_gap},
                              {"iterations", t.rows.size()},
                              {"reached_max_iterations", t.reached_max_iterations}};
      if (opts.out.empty())
        std::cerr << summary.dump(2) << '\n';
      else
        write_json_file(opts.out + ".summary.json", summary);
      write_meta(opts, "converge", config);
    } else if (hybrid->parsed()) {
      emit(opts, csv(gbmm::run_hybrid(config)));
      write_meta(opts, "hybrid", config);
    } else if (ofdm->parsed()) {
      emit(opts, csv(gbmm::run_ofdm(config)));
      write_meta(opts, "ofdm", config);
    } else if (codec->parsed()) {
      const auto run = gbmm::run_codec(config);
      nlohmann::json j = gbmm::codec_report_to_json(run.report);
      j["partition"] = gbmm::partition_to_json(run.partition);
      j["target_p"] = gbmm::real_vector_to_json(run.target_p);
      j["target_entropy_bits"] = run.target_entropy_bits;
      emit(opts, j.dump(2) + "\n");
      write_meta(opts, "codec", config);
    } else if (gen->parsed()) {
      config.validate();
      nlohmann::json list = nlohmann::json::array();
      for (int r = 0; r < config.n_realizations; ++r) {
        const auto seed = gbmm::realization_seed(config, r);
        list.push_back({{"realization", r},
                        {"seed", seed},
                        {"config_hash", gbmm::config_hash(config)},
                        {"channel", gbmm::make_channel(config, seed)}});
      }
      emit(opts, list.dump(2) + "\n");
      write_meta(opts, "gen-channels", config);
    }
  } catch (const gbmm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
