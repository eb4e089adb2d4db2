#include <gtest/gtest.h>

#include <functional>
#include <sstream>

#include "gbmm/experiment.hpp"
#include "gbmm/serialization.hpp"

namespace gbmm {
namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.snr_grid_db = {0.0, 20.0};
  c.n_realizations = 3;
  c.mc_samples = 4000;
  c.ofdm_carriers = 2;
  c.barrier.t_schedule = {1e2, 1e3};
  return c;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

const SweepRow& find_row(const std::vector<SweepRow>& rows, const std::string& scheme, const std::string& kind,
                         double snr) {
  for (const auto& r : rows)
    if (r.scheme == scheme && r.kind == kind && r.snr_db == snr) return r;
  throw Error("row not found: " + scheme + "/" + kind);
}

std::string csv_of(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  write_csv(os, rows);
  return os.str();
}

TEST(Config, DefaultsValidate) {
  EXPECT_NO_THROW(ExperimentConfig{}.validate());
  EXPECT_NO_THROW(ExperimentConfig{}.validate_hybrid());
}

TEST(Config, ValidationMessagesNameTheRule) {
  ExperimentConfig c;
  c.n_streams = 6;
  EXPECT_TRUE(contains(error_of([&] { c.validate(); }), "index modulation impossible"));
  c = {};
  c.n_rf_tx = 1;
  EXPECT_TRUE(contains(error_of([&] { c.validate(); }), "N_RF^t must be at least N_s"));
  c = {};
  c.snr_grid_db.clear();
  EXPECT_TRUE(contains(error_of([&] { c.validate(); }), "snr_grid_db"));
  c = {};
  c.n_rf_rx = 2;
  EXPECT_NO_THROW(c.validate());
  EXPECT_TRUE(contains(error_of([&] { c.validate_hybrid(); }), "N_RF^r > N_s"));
  c.schemes.receiver = false;
  EXPECT_NO_THROW(c.validate_hybrid());
  c = {};
  c.n_rf_tx = 3;
  EXPECT_TRUE(contains(error_of([&] { c.validate_hybrid(); }), "subarray mismatch"));
  c = {};
  c.n_tx = 15;
  EXPECT_TRUE(contains(error_of([&] { c.validate(); }), "perfect square"));
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  ExperimentConfig c = small_config();
  c.codec_p = {0.5, 0.5};
  c.schemes.alg1 = false;
  const nlohmann::json j = c;
  const auto back = j.get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(config_hash(back), config_hash(c));

  nlohmann::json bad = j;
  bad["n_tx_typo"] = 4;
  EXPECT_TRUE(contains(error_of([&] { (void)bad.get<ExperimentConfig>(); }), "unknown key 'n_tx_typo'"));
  bad = j;
  bad["barrier"]["tau"] = 1;
  EXPECT_THROW((void)bad.get<ExperimentConfig>(), Error);

  const auto partial = nlohmann::json::parse(R"({"n_realizations": 7})").get<ExperimentConfig>();
  EXPECT_EQ(partial.n_realizations, 7);
  EXPECT_EQ(partial.n_tx, 16);
}

TEST(Config, HashIgnoresThreadsAndSeed) {
  ExperimentConfig a, b;
  b.threads = 4;
  b.seed = 77;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.n_realizations = 5;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Seeds, DistinctAndStable) {
  ExperimentConfig c;
  EXPECT_NE(realization_seed(c, 0), realization_seed(c, 1));
  EXPECT_EQ(carrier_seed(c, 3, 0), realization_seed(c, 3));
  EXPECT_NE(carrier_seed(c, 3, 1), realization_seed(c, 3));
  EXPECT_NE(mc_seed(c, 0, 0, 0), mc_seed(c, 0, 0, 1));
  ExperimentConfig d;
  d.seed = 2;
  EXPECT_NE(realization_seed(c, 0), realization_seed(d, 0));
}

TEST(ResultGrid, StatisticsAndOrder) {
  ResultGrid g({{"b", "exact_mc"}, {"a", "baseline_wf"}}, {0.0, 10.0}, 2);
  EXPECT_THROW(g.rows(), Error);
  g.set("b", "exact_mc", 0, 0, 1.0);
  g.set("b", "exact_mc", 0, 1, 3.0);
  g.set("b", "exact_mc", 1, 0, 5.0);
  g.set("b", "exact_mc", 1, 1, 5.0);
  g.set("a", "baseline_wf", 0, 0, 0.0);
  g.set("a", "baseline_wf", 0, 1, 0.0);
  g.set("a", "baseline_wf", 1, 0, 0.0);
  g.set("a", "baseline_wf", 1, 1, 0.0);
  const auto rows = g.rows();
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].scheme, "b");
  EXPECT_EQ(rows[0].snr_db, 0.0);
  EXPECT_EQ(rows[1].snr_db, 10.0);
  EXPECT_EQ(rows[0].mean, 2.0);
  EXPECT_NEAR(rows[0].std_error, 1.0, 1e-15);  // sd sqrt(2) over sqrt(2)
  EXPECT_EQ(rows[0].n, 2);
  EXPECT_EQ(csv_of(rows).substr(0, 35), "snr_db,scheme,kind,mean,stderr,n\n0,");
}

TEST(Sweep, RowsAndDeterminism) {
  auto c = small_config();
  const auto rows = run_sweep(c);
  EXPECT_EQ(rows.size(), 2u * (3 * 3 + 1));
  for (const auto& r : rows) EXPECT_EQ(r.n, 3);
  c.threads = 3;
  EXPECT_EQ(csv_of(run_sweep(c)), csv_of(rows));
}

TEST(Sweep, FlagsSelectSchemes) {
  auto c = small_config();
  c.schemes.alg1 = false;
  c.schemes.equal_p = false;
  const auto rows = run_sweep(c);
  EXPECT_EQ(rows.size(), 2u * 4);
  c.schemes.alg2 = false;
  c.schemes.bbs_baseline = false;
  EXPECT_THROW(run_sweep(c), Error);
}

TEST(Sweep, EqualProbabilityIsWorseAtHighSnr) {
  auto c = small_config();
  c.schemes.alg1 = false;
  c.mc_samples = 20000;
  const auto rows = run_sweep(c);
  EXPECT_LT(find_row(rows, "gbmm_equal_p", "exact_mc", 20.0).mean, find_row(rows, "gbmm_alg2", "exact_mc", 20.0).mean);
}

TEST(Convergence, TracesAndReferences) {
  auto c = small_config();
  const auto r = run_convergence(c);
  ASSERT_EQ(r.traces.size(), 2u);
  EXPECT_EQ(r.traces[0].variant, "modified");
  EXPECT_EQ(r.traces[1].variant, "plain");
  EXPECT_GT(r.alg2_exact_mc, r.wf_capacity);
  std::ostringstream os;
  write_trace_csv(os, r);
  EXPECT_TRUE(contains(os.str(), "variant,iteration,t_barrier"));
  EXPECT_TRUE(contains(os.str(), "\nplain,1,100,"));
}

TEST(Hybrid, RowsAndGate) {
  auto c = small_config();
  const auto rows = run_hybrid(c);
  EXPECT_EQ(rows.size(), 2u * 7);
  for (double snr : {0.0, 20.0}) {
    EXPECT_GE(find_row(rows, "fully_digital", "exact_mc", snr).mean + 0.05,
              find_row(rows, "hybrid_fully_connected", "exact_mc", snr).mean);
  }
  c.n_rf_rx = c.n_streams;
  EXPECT_THROW(run_hybrid(c), Error);
  c.schemes.receiver = false;
  EXPECT_EQ(run_hybrid(c).size(), 2u * 4);
}

TEST(Ofdm, SingleCarrierMatchesNarrowbandPath) {
  auto c = small_config();
  c.ofdm_carriers = 1;
  c.schemes.receiver = false;
  const auto ofdm = run_ofdm(c);
  const auto hybrid = run_hybrid(c);
  for (double snr : {0.0, 20.0}) {
    EXPECT_EQ(find_row(ofdm, "gbmm_ofdm_hybrid", "exact_mc", snr).mean,
              find_row(hybrid, "hybrid_fully_connected", "exact_mc", snr).mean);
    EXPECT_EQ(find_row(ofdm, "gbmm_ofdm_digital", "exact_mc", snr).mean,
              find_row(hybrid, "fully_digital", "exact_mc", snr).mean);
    EXPECT_EQ(find_row(ofdm, "bbs_ofdm_digital", "baseline_wf", snr).mean,
              find_row(hybrid, "bbs_wf", "baseline_wf", snr).mean);
  }
}

TEST(Ofdm, Deterministic) {
  auto c = small_config();
  const auto a = csv_of(run_ofdm(c));
  c.threads = 2;
  EXPECT_EQ(csv_of(run_ofdm(c)), a);
}

TEST(Codec, ExplicitDistribution) {
  auto c = small_config();
  c.codec_p = {0.7, 0.3};
  c.codec_bits = 3;
  const auto run = run_codec(c);
  EXPECT_EQ(run.partition.group_sizes(), (std::vector<std::uint64_t>{6, 2}));
  EXPECT_NEAR(run.report.tv_distance, 0.05, 1e-15);
}

TEST(Codec, DefaultsToClosedFormDistribution) {
  const auto run = run_codec(small_config());
  EXPECT_EQ(run.target_p.size(), 15);
  EXPECT_LE(std::abs(run.report.entropy_bits - run.target_entropy_bits), 0.05);
}

}  // namespace
}  // namespace gbmm
