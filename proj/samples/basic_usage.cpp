// Builds one desk-scale channel, optimizes the family both ways and prints
// the SE numbers next to the water-filling capacity.

#include <cstdio>
#include <memory>

#include "gbmm/gbmm.hpp"

int main() {
  using namespace gbmm;

  ChannelConfig cfg;  // 16 tx, 9 rx, 3 clusters x 2 rays
  Rng rng(derive_seed(1, 0, 0x6368));
  const auto channel = generate_channel(cfg, rng);
  const auto dec = std::make_shared<const ChannelDecomposition>(decompose(channel));

  const double snr = db_to_linear(15.0);
  const int ns = 2;
  const auto skeleton = PrecoderFamily::uniform(dec, ns, snr);

  const auto alg2 = optimize_upper_bound(skeleton);
  const auto alg1 = optimize_lower_bound(skeleton);

  const MonteCarloOptions mc{100000, 7};
  std::printf("rank %d, |F| = %ld\n", dec->rank, static_cast<long>(skeleton.size()));
  std::printf("C_WF                 %.4f\n", wf_capacity(*dec, snr, ns).value);
  for (const auto* entry : {&alg2, &alg1.family}) {
    const auto e = exact_se_monte_carlo(*entry, mc);
    std::printf("%s  exact %.4f +- %.4f  R^U %.4f  R^L+gap %.4f\n", entry == &alg2 ? "closed form" : "barrier    ",
                e.value, e.std_error, upper_bound(*entry).value, lower_bound_plus_gap(*entry).value);
  }

  const auto part = build_partition(alg2.probabilities(), 10);
  const auto report = codec_report(part);
  std::printf("10-bit codec: H = %.4f bits, TV = %.5f\n", report.entropy_bits, report.tv_distance);
  return 0;
}
