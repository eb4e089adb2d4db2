#pragma once

// Configuration-driven experiment runners behind the command-line tool.
// Every run is a pure function of (config, seed): realizations are seeded
// from the master seed by index, results are written into per-realization
// slots and reduced in a fixed order, so thread count never changes output.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gbmm/channel_model.hpp"
#include "gbmm/hybrid_design.hpp"
#include "gbmm/index_codec.hpp"
#include "gbmm/lower_bound_optimizer.hpp"
#include "gbmm/parallel.hpp"
#include "gbmm/precoder_family.hpp"
#include "gbmm/se_metrics.hpp"
#include "gbmm/upper_bound_optimizer.hpp"
#include "gbmm/version.hpp"

namespace gbmm {

struct SchemeFlags {
  bool alg1 = true;
  bool alg2 = true;
  bool equal_p = true;
  bool bbs_baseline = true;
  bool hybrid_fully_connected = true;
  bool hybrid_partially_connected = true;
  bool receiver = true;
};

struct ExperimentConfig {
  int n_tx = 16;
  int n_rx = 9;
  int n_rf_tx = 2;
  int n_rf_rx = 4;
  int n_streams = 2;
  int n_clusters = 3;
  int n_rays_per_cluster = 2;
  double angular_spread_deg = 10.0;
  std::vector<double> cluster_powers;  // empty: all ones
  double antenna_spacing = 0.5;
  std::vector<double> snr_grid_db = {0.0, 5.0, 10.0, 15.0, 20.0, 30.0};
  int n_realizations = 20;
  std::uint64_t seed = 1;
  SchemeFlags schemes;
  std::uint64_t mc_samples = 200000;
  BarrierConfig barrier;
  int ofdm_carriers = 16;
  int codec_bits = 12;
  std::vector<double> codec_p;  // empty: use the closed-form distribution of realization 0
  double convergence_snr_db = 15.0;
  int threads = 1;

  ChannelConfig channel_config() const {
    ChannelConfig c;
    c.n_clusters = n_clusters;
    c.n_rays_per_cluster = n_rays_per_cluster;
    c.cluster_powers = cluster_powers.empty() ? std::vector<double>(static_cast<std::size_t>(std::max(0, n_clusters)), 1.0)
                                              : cluster_powers;
    c.angular_spread_deg = angular_spread_deg;
    c.tx_geometry = {n_tx, antenna_spacing};
    c.rx_geometry = {n_rx, antenna_spacing};
    return c;
  }

  /// Upper bound on the channel rank m.
  int rank_bound() const { return std::min({n_clusters * n_rays_per_cluster, n_tx, n_rx}); }

  void validate() const {
    channel_config().validate();
    if (n_streams < 1) throw Error("N_s must be positive");
    if (n_streams >= rank_bound())
      throw Error("index modulation impossible: N_s must be smaller than the channel rank bound min(N_cl*N_ray, N_t, N_r) = " +
                  std::to_string(rank_bound()));
    if (n_rf_tx < n_streams) throw Error("N_RF^t must be at least N_s");
    if (n_rf_tx > n_tx) throw Error("N_RF^t cannot exceed N_t");
    if (n_rf_rx > n_rx) throw Error("N_RF^r cannot exceed N_r");
    if (snr_grid_db.empty()) throw Error("snr_grid_db must not be empty");
    for (double s : snr_grid_db)
      if (!std::isfinite(s)) throw Error("snr_grid_db entries must be finite");
    if (n_realizations < 1) throw Error("n_realizations must be positive");
    if (mc_samples < kMinMonteCarloSamples) throw Error("mc_samples must be at least 1000");
    if (ofdm_carriers < 1) throw Error("ofdm_carriers must be positive");
    if (codec_bits < 1 || codec_bits > 30) throw Error("codec_bits must lie in [1, 30]");
    if (threads < 1) throw Error("threads must be positive");
    if (!std::isfinite(convergence_snr_db)) throw Error("convergence_snr_db must be finite");
    barrier.validate();
  }

  void validate_hybrid() const {
    validate();
    if (schemes.hybrid_fully_connected && n_rf_tx > n_clusters * n_rays_per_cluster)
      throw Error("N_RF^t exceeds the number of path steering vectors in the OMP dictionary");
    if (schemes.hybrid_partially_connected && n_tx % n_rf_tx != 0)
      throw Error("subarray mismatch: N_t must be divisible by N_RF^t");
    if (schemes.receiver) {
      if (n_rf_rx <= n_streams)
        throw Error("receive RF chains must exceed the stream count (N_RF^r > N_s), otherwise the effective "
                    "channel has rank N_s and the precoder index carries no information");
      if (n_rf_rx > n_clusters * n_rays_per_cluster)
        throw Error("N_RF^r exceeds the number of path steering vectors in the receive OMP dictionary");
    }
  }
};

inline void to_json(nlohmann::json& j, const BarrierConfig& b) {
  j = {{"t_schedule", b.t_schedule},
       {"halting_epsilon", b.halting_epsilon},
       {"prune_threshold", b.prune_threshold},
       {"gradient_modification", b.gradient_modification},
       {"zero_frozen_output", b.zero_frozen_output},
       {"line_search_shrink", b.line_search_shrink},
       {"line_search_slope", b.line_search_slope},
       {"max_iterations", b.max_iterations}};
}

inline void to_json(nlohmann::json& j, const SchemeFlags& s) {
  j = {{"alg1", s.alg1},
       {"alg2", s.alg2},
       {"equal_p", s.equal_p},
       {"bbs_baseline", s.bbs_baseline},
       {"hybrid_fully_connected", s.hybrid_fully_connected},
       {"hybrid_partially_connected", s.hybrid_partially_connected},
       {"receiver", s.receiver}};
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"n_tx", c.n_tx},
       {"n_rx", c.n_rx},
       {"n_rf_tx", c.n_rf_tx},
       {"n_rf_rx", c.n_rf_rx},
       {"n_streams", c.n_streams},
       {"n_clusters", c.n_clusters},
       {"n_rays_per_cluster", c.n_rays_per_cluster},
       {"angular_spread_deg", c.angular_spread_deg},
       {"cluster_powers", c.cluster_powers},
       {"antenna_spacing", c.antenna_spacing},
       {"snr_grid_db", c.snr_grid_db},
       {"n_realizations", c.n_realizations},
       {"seed", c.seed},
       {"schemes", c.schemes},
       {"mc_samples", c.mc_samples},
       {"barrier", c.barrier},
       {"ofdm_carriers", c.ofdm_carriers},
       {"codec_bits", c.codec_bits},
       {"codec_p", c.codec_p},
       {"convergence_snr_db", c.convergence_snr_db},
       {"threads", c.threads}};
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw Error(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw Error("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, BarrierConfig& b) {
  detail::reject_unknown_keys(j,
                              {"t_schedule", "halting_epsilon", "prune_threshold", "gradient_modification",
                               "zero_frozen_output", "line_search_shrink", "line_search_slope", "max_iterations"},
                              "barrier");
  detail::read_if(j, "t_schedule", b.t_schedule);
  detail::read_if(j, "halting_epsilon", b.halting_epsilon);
  detail::read_if(j, "prune_threshold", b.prune_threshold);
  detail::read_if(j, "gradient_modification", b.gradient_modification);
  detail::read_if(j, "zero_frozen_output", b.zero_frozen_output);
  detail::read_if(j, "line_search_shrink", b.line_search_shrink);
  detail::read_if(j, "line_search_slope", b.line_search_slope);
  detail::read_if(j, "max_iterations", b.max_iterations);
}

inline void from_json(const nlohmann::json& j, SchemeFlags& s) {
  detail::reject_unknown_keys(j,
                              {"alg1", "alg2", "equal_p", "bbs_baseline", "hybrid_fully_connected",
                               "hybrid_partially_connected", "receiver"},
                              "schemes");
  detail::read_if(j, "alg1", s.alg1);
  detail::read_if(j, "alg2", s.alg2);
  detail::read_if(j, "equal_p", s.equal_p);
  detail::read_if(j, "bbs_baseline", s.bbs_baseline);
  detail::read_if(j, "hybrid_fully_connected", s.hybrid_fully_connected);
  detail::read_if(j, "hybrid_partially_connected", s.hybrid_partially_connected);
  detail::read_if(j, "receiver", s.receiver);
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  detail::reject_unknown_keys(
      j,
      {"n_tx", "n_rx", "n_rf_tx", "n_rf_rx", "n_streams", "n_clusters", "n_rays_per_cluster", "angular_spread_deg",
       "cluster_powers", "antenna_spacing", "snr_grid_db", "n_realizations", "seed", "schemes", "mc_samples",
       "barrier", "ofdm_carriers", "codec_bits", "codec_p", "convergence_snr_db", "threads"},
      "config");
  detail::read_if(j, "n_tx", c.n_tx);
  detail::read_if(j, "n_rx", c.n_rx);
  detail::read_if(j, "n_rf_tx", c.n_rf_tx);
  detail::read_if(j, "n_rf_rx", c.n_rf_rx);
  detail::read_if(j, "n_streams", c.n_streams);
  detail::read_if(j, "n_clusters", c.n_clusters);
  detail::read_if(j, "n_rays_per_cluster", c.n_rays_per_cluster);
  detail::read_if(j, "angular_spread_deg", c.angular_spread_deg);
  detail::read_if(j, "cluster_powers", c.cluster_powers);
  detail::read_if(j, "antenna_spacing", c.antenna_spacing);
  detail::read_if(j, "snr_grid_db", c.snr_grid_db);
  detail::read_if(j, "n_realizations", c.n_realizations);
  detail::read_if(j, "seed", c.seed);
  if (j.contains("schemes")) from_json(j.at("schemes"), c.schemes);
  detail::read_if(j, "mc_samples", c.mc_samples);
  if (j.contains("barrier")) from_json(j.at("barrier"), c.barrier);
  detail::read_if(j, "ofdm_carriers", c.ofdm_carriers);
  detail::read_if(j, "codec_bits", c.codec_bits);
  detail::read_if(j, "codec_p", c.codec_p);
  detail::read_if(j, "convergence_snr_db", c.convergence_snr_db);
  detail::read_if(j, "threads", c.threads);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of everything that determines results; seed and threads excluded.
inline std::uint64_t config_hash(const ExperimentConfig& config) {
  nlohmann::json j = config;
  j.erase("threads");
  j.erase("seed");
  return fnv1a(j.dump());
}

// Seed domains keep the random streams of different consumers disjoint.
inline constexpr std::uint64_t kChannelDomain = 0x6368;
inline constexpr std::uint64_t kCarrierDomain = 0x6f66;
inline constexpr std::uint64_t kMonteCarloDomain = 0x6d63;

inline std::uint64_t realization_seed(const ExperimentConfig& config, int realization) {
  return derive_seed(config.seed, static_cast<std::uint64_t>(realization), kChannelDomain);
}

/// Carrier 0 reuses the realization's narrowband channel.
inline std::uint64_t carrier_seed(const ExperimentConfig& config, int realization, int carrier) {
  const std::uint64_t base = realization_seed(config, realization);
  return carrier == 0 ? base : derive_seed(base, static_cast<std::uint64_t>(carrier), kCarrierDomain);
}

/// Common Monte-Carlo stream shared by every scheme at one (realization, carrier, snr) point.
inline std::uint64_t mc_seed(const ExperimentConfig& config, int realization, int carrier, std::size_t snr_index) {
  const std::uint64_t point =
      (static_cast<std::uint64_t>(realization) << 32) ^ (static_cast<std::uint64_t>(carrier) << 16) ^ snr_index;
  return derive_seed(config.seed, point, kMonteCarloDomain);
}

inline ChannelRealization make_channel(const ExperimentConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  return generate_channel(config.channel_config(), rng);
}

inline ChannelFingerprint fingerprint(const ExperimentConfig& config, std::uint64_t seed) {
  return {seed, config_hash(config)};
}

struct SweepRow {
  double snr_db = 0.0;
  std::string scheme;
  std::string kind;
  double mean = 0.0;
  double std_error = 0.0;
  int n = 0;
};

/// Per-realization values of named (scheme, kind) series over the SNR grid.
class ResultGrid {
 public:
  struct Series {
    std::string scheme;
    std::string kind;
  };

  ResultGrid(std::vector<Series> series, std::vector<double> snr_grid_db, int n_realizations)
      : series_(std::move(series)),
        snr_(std::move(snr_grid_db)),
        n_real_(n_realizations),
        values_(series_.size() * snr_.size() * static_cast<std::size_t>(n_realizations),
                std::numeric_limits<double>::quiet_NaN()) {}

  std::size_t index(const std::string& scheme, const std::string& kind) const {
    for (std::size_t s = 0; s < series_.size(); ++s)
      if (series_[s].scheme == scheme && series_[s].kind == kind) return s;
    throw Error("unknown series " + scheme + "/" + kind);
  }

  double& at(std::size_t series, std::size_t snr, int realization) {
    return values_[(series * snr_.size() + snr) * static_cast<std::size_t>(n_real_) +
                   static_cast<std::size_t>(realization)];
  }

  void set(const std::string& scheme, const std::string& kind, std::size_t snr, int realization, double v) {
    at(index(scheme, kind), snr, realization) = v;
  }

  /// Rows ordered by series (scheme, then kind), then SNR.
  std::vector<SweepRow> rows() {
    std::vector<SweepRow> out;
    for (std::size_t s = 0; s < series_.size(); ++s) {
      for (std::size_t k = 0; k < snr_.size(); ++k) {
        double mean = 0.0, m2 = 0.0;
        for (int r = 0; r < n_real_; ++r) {
          const double v = at(s, k, r);
          if (!std::isfinite(v))
            throw Error("missing result for " + series_[s].scheme + "/" + series_[s].kind + " realization " +
                        std::to_string(r));
          const double delta = v - mean;
          mean += delta / (r + 1);
          m2 += delta * (v - mean);
        }
        const double sd = n_real_ > 1 ? std::sqrt(m2 / (n_real_ - 1)) : 0.0;
        out.push_back({snr_[k], series_[s].scheme, series_[s].kind, mean, sd / std::sqrt(static_cast<double>(n_real_)),
                       n_real_});
      }
    }
    return out;
  }

 private:
  std::vector<Series> series_;
  std::vector<double> snr_;
  int n_real_;
  std::vector<double> values_;
};

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline void write_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "snr_db,scheme,kind,mean,stderr,n\n";
  for (const auto& r : rows)
    os << format_number(r.snr_db) << ',' << r.scheme << ',' << r.kind << ',' << format_number(r.mean) << ','
       << format_number(r.std_error) << ',' << r.n << '\n';
}

/// Water-filled family with uniform activation probabilities.
inline PrecoderFamily equal_probability_family(const PrecoderFamily& alg2) {
  return alg2.with(alg2.lambdas(), RVector::Constant(alg2.size(), 1.0 / static_cast<double>(alg2.size())));
}

namespace detail {

inline MonteCarloOptions mc_options(const ExperimentConfig& config, std::uint64_t seed) {
  MonteCarloOptions o;
  o.n_samples = config.mc_samples;
  o.seed = seed;
  o.threads = 1;  // parallelism lives at the realization level
  return o;
}

inline void add_bounds(ResultGrid& grid, const std::string& scheme, const PrecoderFamily& family,
                       const MonteCarloOptions& mc, std::size_t snr, int r) {
  grid.set(scheme, "exact_mc", snr, r, exact_se_monte_carlo(family, mc).value);
  grid.set(scheme, "upper_bound", snr, r, upper_bound(family).value);
  grid.set(scheme, "lower_bound_plus_gap", snr, r, lower_bound_plus_gap(family).value);
}

inline std::vector<ResultGrid::Series> bound_series(const std::string& scheme) {
  return {{scheme, "exact_mc"}, {scheme, "upper_bound"}, {scheme, "lower_bound_plus_gap"}};
}

}  // namespace detail

/// SE versus SNR for the lower-bound, closed-form and equal-probability
/// families plus the water-filling baseline.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& config) {
  config.validate();
  std::vector<ResultGrid::Series> series;
  auto append = [&](std::vector<ResultGrid::Series> s) { series.insert(series.end(), s.begin(), s.end()); };
  if (config.schemes.alg1) append(detail::bound_series("gbmm_alg1"));
  if (config.schemes.alg2) append(detail::bound_series("gbmm_alg2"));
  if (config.schemes.equal_p) append(detail::bound_series("gbmm_equal_p"));
  if (config.schemes.bbs_baseline) series.push_back({"bbs_wf", "baseline_wf"});
  if (series.empty()) throw Error("no scheme enabled for the sweep");
  ResultGrid grid(series, config.snr_grid_db, config.n_realizations);

  parallel_for(static_cast<std::size_t>(config.n_realizations), config.threads, [&](std::size_t ri) {
    const int r = static_cast<int>(ri);
    const std::uint64_t seed = realization_seed(config, r);
    const auto channel = make_channel(config, seed);
    const auto dec = std::make_shared<const ChannelDecomposition>(decompose(channel));
    for (std::size_t k = 0; k < config.snr_grid_db.size(); ++k) {
      const double snr = db_to_linear(config.snr_grid_db[k]);
      const auto mc = detail::mc_options(config, mc_seed(config, r, 0, k));
      const auto skeleton = PrecoderFamily::uniform(dec, config.n_streams, snr, fingerprint(config, seed));
      const auto alg2 = optimize_upper_bound(skeleton);
      if (config.schemes.alg1)
        detail::add_bounds(grid, "gbmm_alg1", optimize_lower_bound(skeleton, config.barrier).family, mc, k, r);
      if (config.schemes.alg2) detail::add_bounds(grid, "gbmm_alg2", alg2, mc, k, r);
      if (config.schemes.equal_p) detail::add_bounds(grid, "gbmm_equal_p", equal_probability_family(alg2), mc, k, r);
      if (config.schemes.bbs_baseline)
        grid.set("bbs_wf", "baseline_wf", k, r, wf_capacity(*dec, snr, config.n_streams).value);
    }
  });
  return grid.rows();
}

struct ConvergenceTrace {
  std::string variant;  // "modified" or "plain"
  std::vector<TraceRow> rows;
  double final_lower_bound_plus_gap = 0.0;
  bool reached_max_iterations = false;
};

struct ConvergenceResult {
  std::vector<ConvergenceTrace> traces;
  double alg2_lower_bound_plus_gap = 0.0;
  double alg2_exact_mc = 0.0;
  double wf_capacity = 0.0;
  int n_rx = 0;
};

/// Lower-bound optimizer traces with and without gradient modification on realization
/// 0 at convergence_snr_db, with the closed-form and water-filling references.
inline ConvergenceResult run_convergence(const ExperimentConfig& config) {
  config.validate();
  const std::uint64_t seed = realization_seed(config, 0);
  const auto channel = make_channel(config, seed);
  const auto dec = std::make_shared<const ChannelDecomposition>(decompose(channel));
  const double snr = db_to_linear(config.convergence_snr_db);
  const auto skeleton = PrecoderFamily::uniform(dec, config.n_streams, snr, fingerprint(config, seed));
  const auto alg2 = optimize_upper_bound(skeleton);

  ConvergenceResult out;
  out.n_rx = dec->n_rx();
  out.alg2_lower_bound_plus_gap = lower_bound_plus_gap(alg2).value;
  out.alg2_exact_mc = exact_se_monte_carlo(alg2, detail::mc_options(config, mc_seed(config, 0, 0, 0))).value;
  out.wf_capacity = wf_capacity(*dec, snr, config.n_streams).value;
  std::vector<ConvergenceTrace> traces(2);
  parallel_for(2, config.threads, [&](std::size_t v) {
    BarrierConfig b = config.barrier;
    b.gradient_modification = v == 0;
    auto result = optimize_lower_bound(skeleton, b);
    traces[v].variant = v == 0 ? "modified" : "plain";
    traces[v].rows = std::move(result.trace);
    traces[v].final_lower_bound_plus_gap = lower_bound_plus_gap(result.family).value;
    traces[v].reached_max_iterations = result.reached_max_iterations;
  });
  out.traces = std::move(traces);
  return out;
}

/// Per-iteration trace; R^L is reported both raw and with the N_r(log2 e - 1) gap.
inline void write_trace_csv(std::ostream& os, const ConvergenceResult& result) {
  os << "variant,iteration,t_barrier,objective,lower_bound,lower_bound_plus_gap,eta_p,eta_lambda,active_p,"
        "active_lambda\n";
  const double gap = result.n_rx * (kLog2E - 1.0);
  for (const auto& trace : result.traces)
    for (const auto& row : trace.rows)
      os << trace.variant << ',' << row.iteration << ',' << format_number(row.t_barrier) << ','
         << format_number(row.objective) << ',' << format_number(row.lower_bound) << ','
         << format_number(row.lower_bound + gap) << ',' << format_number(row.eta_p) << ','
         << format_number(row.eta_lambda) << ',' << row.active_p << ',' << row.active_lambda << '\n';
}

namespace detail {

inline std::vector<CMatrix> family_precoders(const PrecoderFamily& family) {
  std::vector<CMatrix> out;
  for (Eigen::Index i = 0; i < family.size(); ++i) out.push_back(family.precoder(i));
  return out;
}

template <typename Factor>
std::vector<CMatrix> factor_all(const std::vector<CMatrix>& targets, Factor&& factor) {
  std::vector<CMatrix> out;
  out.reserve(targets.size());
  for (const auto& t : targets) out.push_back(factor(t).product());
  return out;
}

inline double mixture_se(const CMatrix& h, const std::vector<CMatrix>& precoders, const RVector& p, double snr,
                         const MonteCarloOptions& mc) {
  return exact_se_monte_carlo(GaussianMixture::from_precoders(h, precoders, p, snr), mc).value;
}

}  // namespace detail

/// Fully-digital versus fully- and partially-connected hybrid closed-form
/// families, and with receiver enabled the combiner study over H_tilde.
inline std::vector<SweepRow> run_hybrid(const ExperimentConfig& config) {
  config.validate_hybrid();
  std::vector<ResultGrid::Series> series = {{"fully_digital", "exact_mc"}};
  if (config.schemes.hybrid_fully_connected) series.push_back({"hybrid_fully_connected", "exact_mc"});
  if (config.schemes.hybrid_partially_connected) series.push_back({"hybrid_partially_connected", "exact_mc"});
  series.push_back({"bbs_wf", "baseline_wf"});
  if (config.schemes.receiver) {
    series.push_back({"transceiver_digital", "exact_mc"});
    series.push_back({"transceiver_hybrid", "exact_mc"});
    series.push_back({"transceiver_bbs_wf", "baseline_wf"});
  }
  ResultGrid grid(series, config.snr_grid_db, config.n_realizations);
  const auto cc = config.channel_config();

  parallel_for(static_cast<std::size_t>(config.n_realizations), config.threads, [&](std::size_t ri) {
    const int r = static_cast<int>(ri);
    const std::uint64_t seed = realization_seed(config, r);
    const auto channel = make_channel(config, seed);
    const auto dec = std::make_shared<const ChannelDecomposition>(decompose(channel));
    const CMatrix tx_dict = transmit_dictionary(channel, cc.tx_geometry);

    // Receiver side: W = the N_RF^r strongest left singular vectors.
    std::shared_ptr<const ChannelDecomposition> dec_rx;
    CMatrix h_rx_hybrid;
    if (config.schemes.receiver) {
      const auto w = design_combiner(*dec, config.n_rf_rx);
      const auto eff = effective_channel(w.matrix, channel.matrix);
      dec_rx = std::make_shared<const ChannelDecomposition>(decompose(eff.matrix));
      const auto w_hybrid = omp_hybrid_combiner(w.matrix, receive_dictionary(channel, cc.rx_geometry), config.n_rf_rx);
      h_rx_hybrid = whitened_effective_channel(w_hybrid.product(), channel.matrix);
    }

    for (std::size_t k = 0; k < config.snr_grid_db.size(); ++k) {
      const double snr = db_to_linear(config.snr_grid_db[k]);
      const auto mc = detail::mc_options(config, mc_seed(config, r, 0, k));
      const auto alg2 = optimize_upper_bound(dec, config.n_streams, snr, fingerprint(config, seed));
      const auto& p = alg2.probabilities();
      const auto digital = detail::family_precoders(alg2);
      grid.set("fully_digital", "exact_mc", k, r, exact_se_monte_carlo(alg2, mc).value);
      if (config.schemes.hybrid_fully_connected) {
        const auto hybrid = detail::factor_all(
            digital, [&](const CMatrix& f) { return omp_hybrid(f, tx_dict, config.n_rf_tx); });
        grid.set("hybrid_fully_connected", "exact_mc", k, r, detail::mixture_se(channel.matrix, hybrid, p, snr, mc));
      }
      if (config.schemes.hybrid_partially_connected) {
        const auto hybrid =
            detail::factor_all(digital, [&](const CMatrix& f) { return sic_hybrid(f, config.n_rf_tx); });
        grid.set("hybrid_partially_connected", "exact_mc", k, r,
                 detail::mixture_se(channel.matrix, hybrid, p, snr, mc));
      }
      grid.set("bbs_wf", "baseline_wf", k, r, wf_capacity(*dec, snr, config.n_streams).value);
      if (config.schemes.receiver) {
        const auto alg2_rx = optimize_upper_bound(dec_rx, config.n_streams, snr, fingerprint(config, seed));
        grid.set("transceiver_digital", "exact_mc", k, r, exact_se_monte_carlo(alg2_rx, mc).value);
        const auto hybrid = detail::factor_all(detail::family_precoders(alg2_rx), [&](const CMatrix& f) {
          return omp_hybrid(f, tx_dict, config.n_rf_tx);
        });
        grid.set("transceiver_hybrid", "exact_mc", k, r,
                 detail::mixture_se(h_rx_hybrid, hybrid, alg2_rx.probabilities(), snr, mc));
        grid.set("transceiver_bbs_wf", "baseline_wf", k, r, wf_capacity(*dec_rx, snr, config.n_streams).value);
      }
    }
  });
  return grid.rows();
}

/// Independent narrowband channels per carrier; closed-form families per
/// carrier, one analog precoder per family index shared across carriers.
/// Values are per-carrier averages.
inline std::vector<SweepRow> run_ofdm(const ExperimentConfig& config) {
  config.validate();
  if (config.n_rf_tx > config.ofdm_carriers * config.n_clusters * config.n_rays_per_cluster)
    throw Error("N_RF^t exceeds the number of path steering vectors in the OMP dictionary");
  const std::vector<ResultGrid::Series> series = {{"gbmm_ofdm_digital", "exact_mc"},
                                                  {"gbmm_ofdm_hybrid", "exact_mc"},
                                                  {"bbs_ofdm_digital", "baseline_wf"},
                                                  {"bbs_ofdm_hybrid", "fixed_precoder"}};
  ResultGrid grid(series, config.snr_grid_db, config.n_realizations);
  const auto cc = config.channel_config();
  const int carriers = config.ofdm_carriers;

  parallel_for(static_cast<std::size_t>(config.n_realizations), config.threads, [&](std::size_t ri) {
    const int r = static_cast<int>(ri);
    std::vector<ChannelRealization> channels;
    std::vector<std::shared_ptr<const ChannelDecomposition>> decs;
    std::vector<std::uint64_t> seeds;
    for (int c = 0; c < carriers; ++c) {
      seeds.push_back(carrier_seed(config, r, c));
      channels.push_back(make_channel(config, seeds.back()));
      decs.push_back(std::make_shared<const ChannelDecomposition>(decompose(channels.back())));
    }
    CMatrix dict(config.n_tx, 0);
    for (const auto& ch : channels) {
      const CMatrix d = transmit_dictionary(ch, cc.tx_geometry);
      dict.conservativeResize(Eigen::NoChange, dict.cols() + d.cols());
      dict.rightCols(d.cols()) = d;
    }

    for (std::size_t k = 0; k < config.snr_grid_db.size(); ++k) {
      const double snr = db_to_linear(config.snr_grid_db[k]);
      std::vector<PrecoderFamily> families;
      for (int c = 0; c < carriers; ++c)
        families.push_back(optimize_upper_bound(decs[static_cast<std::size_t>(c)], config.n_streams, snr,
                                                fingerprint(config, seeds[static_cast<std::size_t>(c)])));
      const auto n_family = families.front().size();
      for (const auto& f : families)
        if (f.size() != n_family) throw Error("carrier channels have different ranks; family sizes differ");

      // Shared analog per family index i across carriers.
      std::vector<std::vector<CMatrix>> hybrid(static_cast<std::size_t>(carriers));
      for (Eigen::Index i = 0; i < n_family; ++i) {
        std::vector<CMatrix> targets;
        for (const auto& f : families) targets.push_back(f.precoder(i));
        const auto shared = ofdm_shared_analog(targets, dict, config.n_rf_tx);
        for (int c = 0; c < carriers; ++c)
          hybrid[static_cast<std::size_t>(c)].push_back(shared.product(static_cast<std::size_t>(c)));
      }
      std::vector<CMatrix> bbs_targets;
      for (const auto& d : decs) bbs_targets.push_back(bbs_precoder(*d, snr, config.n_streams));
      const auto bbs_shared = ofdm_shared_analog(bbs_targets, dict, config.n_rf_tx);

      double gd = 0.0, gh = 0.0, bd = 0.0, bh = 0.0;
      for (int c = 0; c < carriers; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        const auto mc = detail::mc_options(config, mc_seed(config, r, c, k));
        gd += exact_se_monte_carlo(families[cu], mc).value;
        gh += detail::mixture_se(channels[cu].matrix, hybrid[cu], families[cu].probabilities(), snr, mc);
        bd += wf_capacity(*decs[cu], snr, config.n_streams).value;
        bh += se_fixed_precoder(channels[cu].matrix, bbs_shared.product(cu), snr).value;
      }
      grid.set("gbmm_ofdm_digital", "exact_mc", k, r, gd / carriers);
      grid.set("gbmm_ofdm_hybrid", "exact_mc", k, r, gh / carriers);
      grid.set("bbs_ofdm_digital", "baseline_wf", k, r, bd / carriers);
      grid.set("bbs_ofdm_hybrid", "fixed_precoder", k, r, bh / carriers);
    }
  });
  return grid.rows();
}

struct CodecRun {
  RVector target_p;
  CodebookPartition partition;
  CodecReport report;
  double target_entropy_bits = 0.0;
};

/// Partition for codec_p, or for the closed-form distribution of realization
/// 0 at convergence_snr_db when codec_p is empty.
inline CodecRun run_codec(const ExperimentConfig& config) {
  config.validate();
  RVector p;
  if (!config.codec_p.empty()) {
    p = Eigen::Map<const RVector>(config.codec_p.data(), static_cast<Eigen::Index>(config.codec_p.size()));
  } else {
    const std::uint64_t seed = realization_seed(config, 0);
    const auto dec = std::make_shared<const ChannelDecomposition>(decompose(make_channel(config, seed)));
    p = optimize_upper_bound(dec, config.n_streams, db_to_linear(config.convergence_snr_db)).probabilities();
  }
  CodebookPartition partition(p, config.codec_bits);
  CodecReport report = codec_report(partition);
  const RVector target = partition.target_p();
  return {target, std::move(partition), std::move(report), entropy_bits(target)};
}

}  // namespace gbmm
