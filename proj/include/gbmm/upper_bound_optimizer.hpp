#pragma once

// Closed-form high-SNR optimum of the SE upper bound: water-filling inside
// every precoder with budget N_s, then activation probabilities proportional
// to 2^{c_i}.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gbmm/precoder_family.hpp"
#include "gbmm/types.hpp"

namespace gbmm {

struct WaterFillSolution {
  RVector lambdas;
  double water_level = 0.0;             // 1 / (xi ln 2)
  double water_level_multiplier = 0.0;  // xi
  int active_count = 0;
};

/// Maximizes sum_j log(1 + rho_eff g_j lambda_j) s.t. sum_j lambda_j = budget.
/// Exact: the active set is a prefix of the streams sorted by inverse gain.
inline WaterFillSolution water_fill(const RVector& sigma_squared, double rho_eff, double budget) {
  const Eigen::Index n = sigma_squared.size();
  if (n == 0) throw Error("water-filling needs at least one gain");
  if (!(budget > 0.0)) throw Error("water-filling budget must be positive");
  if (!(rho_eff > 0.0)) throw Error("water-filling needs a positive SNR");
  if ((sigma_squared.array() <= 0.0).any()) throw Error("water-filling gains must be positive");

  RVector inverse = (rho_eff * sigma_squared.array()).inverse().matrix();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return inverse(a) < inverse(b); });

  double prefix = 0.0;
  double level = 0.0;
  int active = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    prefix += inverse(order[static_cast<std::size_t>(k)]);
    const double candidate = (budget + prefix) / static_cast<double>(k + 1);
    if (candidate > inverse(order[static_cast<std::size_t>(k)])) {
      level = candidate;
      active = static_cast<int>(k + 1);
    } else {
      break;
    }
  }

  WaterFillSolution out;
  out.lambdas = (level - inverse.array()).max(0.0).matrix();
  out.water_level = level;
  out.water_level_multiplier = 1.0 / (level * kLn2);
  out.active_count = active;
  return out;
}

struct ActivationDistribution {
  RVector p;
};

/// p_i = 2^{c_i} / sum_k 2^{c_k}, shifted by max c to stay finite.
inline ActivationDistribution activation_distribution(const RVector& capacities) {
  if (capacities.size() == 0) throw Error("need at least one capacity");
  if (!capacities.allFinite()) throw Error("capacities must be finite");
  const double top = capacities.maxCoeff();
  RVector w = ((capacities.array() - top) * kLn2).exp().matrix();
  return {w / w.sum()};
}

/// Water-fills each selection of `skeleton` with budget N_s and sets p from
/// the resulting capacities.
inline PrecoderFamily optimize_upper_bound(const PrecoderFamily& skeleton) {
  const int ns = skeleton.n_streams();
  const auto& sigma = skeleton.decomposition().singular_values;
  LambdaMatrix lambdas(skeleton.size(), ns);
  for (Eigen::Index i = 0; i < skeleton.size(); ++i) {
    const auto& s = skeleton.selections()[static_cast<std::size_t>(i)];
    RVector gains(ns);
    for (int j = 0; j < ns; ++j) gains(j) = sigma(s[static_cast<std::size_t>(j)]) * sigma(s[static_cast<std::size_t>(j)]);
    if (skeleton.snr() > 0.0)
      lambdas.row(i) = water_fill(gains, skeleton.snr_per_stream(), ns).lambdas.transpose();
    else
      lambdas.row(i).setOnes();
  }
  PrecoderFamily filled = skeleton.with(lambdas, skeleton.probabilities());
  RVector p = activation_distribution(per_precoder_capacities(filled)).p;
  return filled.with(std::move(lambdas), std::move(p));
}

inline PrecoderFamily optimize_upper_bound(std::shared_ptr<const ChannelDecomposition> decomposition, int n_streams,
                                           double snr, ChannelFingerprint fingerprint = {}) {
  return optimize_upper_bound(PrecoderFamily::uniform(std::move(decomposition), n_streams, snr, fingerprint));
}

}  // namespace gbmm
