#pragma once

// Analog/digital factorizations of fully-digital precoders and combiners:
// greedy OMP over a steering-vector dictionary (fully connected), per-subarray
// phase alignment (partially connected), SVD receive combiners and the
// shared-analog multi-carrier variant.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/QR>

#include "gbmm/channel_model.hpp"
#include "gbmm/types.hpp"

namespace gbmm {

struct HybridFactorization {
  CMatrix analog;   // unit-modulus entries (zeros off-block when partially connected)
  CMatrix digital;
  double target_norm = 0.0;
  double residual = 0.0;  // ||target - analog * digital||_F

  CMatrix product() const { return analog * digital; }
};

/// Shared analog matrix with one digital matrix per carrier.
struct SharedAnalogFactorization {
  CMatrix analog;
  std::vector<CMatrix> digital;
  std::vector<double> target_norms;
  std::vector<double> residuals;

  CMatrix product(std::size_t k) const { return analog * digital[k]; }
  double total_residual() const {
    double acc = 0.0;
    for (double r : residuals) acc += r;
    return acc;
  }
};

struct EffectiveChannel {
  CMatrix matrix;  // m_hat x N_t
  int rank = 0;
};

struct CombinerDesign {
  CMatrix matrix;          // N_r x m_hat, orthonormal columns
  bool truncated = false;  // requested m_hat exceeded the channel rank
};

/// Steering vectors at every path's departure angles.
inline CMatrix transmit_dictionary(const ChannelRealization& channel, const ArrayGeometry& tx_geometry) {
  if (channel.paths.empty()) throw Error("channel carries no path parameters");
  CMatrix out(tx_geometry.n_antennas, static_cast<Eigen::Index>(channel.paths.size()));
  for (std::size_t l = 0; l < channel.paths.size(); ++l)
    out.col(static_cast<Eigen::Index>(l)) =
        steering_vector(tx_geometry, channel.paths[l].aod_azimuth, channel.paths[l].aod_elevation);
  return out;
}

/// Steering vectors at every path's arrival angles.
inline CMatrix receive_dictionary(const ChannelRealization& channel, const ArrayGeometry& rx_geometry) {
  if (channel.paths.empty()) throw Error("channel carries no path parameters");
  CMatrix out(rx_geometry.n_antennas, static_cast<Eigen::Index>(channel.paths.size()));
  for (std::size_t l = 0; l < channel.paths.size(); ++l)
    out.col(static_cast<Eigen::Index>(l)) =
        steering_vector(rx_geometry, channel.paths[l].aoa_azimuth, channel.paths[l].aoa_elevation);
  return out;
}

namespace detail {

inline CMatrix unit_modulus(const CMatrix& m) {
  CMatrix out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(i, j) = std::polar(1.0, std::arg(m(i, j)));
  return out;
}

/// Greedy column selection driven by the summed residual correlation over
/// every target; returns the unit-modulus analog matrix and per-target
/// least-squares digital parts.
inline std::pair<CMatrix, std::vector<CMatrix>> omp_core(std::span<const CMatrix> targets, const CMatrix& dictionary,
                                                         int n_rf) {
  if (targets.empty()) throw Error("OMP needs at least one target");
  if (n_rf < 1) throw Error("n_rf must be positive");
  if (dictionary.cols() < n_rf) throw Error("dictionary smaller than n_rf");
  const auto rows = targets.front().rows();
  const auto cols = targets.front().cols();
  for (const auto& t : targets)
    if (t.rows() != rows || t.cols() != cols) throw Error("all targets must share one shape");
  if (dictionary.rows() != rows) throw Error("dictionary and target row counts differ");
  if (cols > n_rf) throw Error("n_rf must be at least the number of target columns");

  const CMatrix candidates = unit_modulus(dictionary);
  std::vector<CMatrix> residual(targets.begin(), targets.end());
  std::vector<CMatrix> digital(targets.size());
  std::vector<bool> used(static_cast<std::size_t>(dictionary.cols()), false);
  CMatrix analog(rows, 0);
  for (int k = 0; k < n_rf; ++k) {
    RVector score = RVector::Zero(dictionary.cols());
    for (const auto& r : residual) score += (candidates.adjoint() * r).rowwise().squaredNorm();
    Eigen::Index best = -1;
    for (Eigen::Index c = 0; c < score.size(); ++c)
      if (!used[static_cast<std::size_t>(c)] && (best < 0 || score(c) > score(best))) best = c;
    used[static_cast<std::size_t>(best)] = true;
    analog.conservativeResize(Eigen::NoChange, k + 1);
    analog.col(k) = candidates.col(best);
    const Eigen::CompleteOrthogonalDecomposition<CMatrix> cod(analog);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      digital[t] = cod.solve(targets[t]);
      residual[t] = targets[t] - analog * digital[t];
    }
  }
  return {std::move(analog), std::move(digital)};
}

/// Rescales `digital` so that ||analog * digital||_F equals target_norm.
inline void match_norm(const CMatrix& analog, CMatrix& digital, double target_norm) {
  const double current = (analog * digital).norm();
  if (current > 0.0) digital *= target_norm / current;
}

}  // namespace detail

/// Fully-connected hybrid precoder by OMP, scaled afterwards so that
/// ||F_RF F_BB||_F = ||target||_F.
inline HybridFactorization omp_hybrid(const CMatrix& target, const CMatrix& dictionary, int n_rf) {
  const CMatrix targets[] = {target};
  auto [analog, digital] = detail::omp_core(targets, dictionary, n_rf);
  HybridFactorization out;
  out.target_norm = target.norm();
  out.analog = std::move(analog);
  out.digital = std::move(digital.front());
  detail::match_norm(out.analog, out.digital, out.target_norm);
  out.residual = (target - out.analog * out.digital).norm();
  return out;
}

/// OMP for a receive combiner; no norm constraint is imposed.
inline HybridFactorization omp_hybrid_combiner(const CMatrix& target, const CMatrix& dictionary, int n_rf) {
  const CMatrix targets[] = {target};
  auto [analog, digital] = detail::omp_core(targets, dictionary, n_rf);
  HybridFactorization out;
  out.target_norm = target.norm();
  out.analog = std::move(analog);
  out.digital = std::move(digital.front());
  out.residual = (target - out.analog * out.digital).norm();
  return out;
}

/// Partially-connected hybrid precoder: RF chain b drives antennas
/// [b*M, (b+1)*M) with the phases of the dominant left singular vector of
/// that row block; its digital row is the least-squares fit a_b^H T_b / M.
inline HybridFactorization sic_hybrid(const CMatrix& target, int n_rf) {
  const auto nt = target.rows();
  if (n_rf < 1) throw Error("n_rf must be positive");
  if (nt % n_rf != 0) throw Error("subarray mismatch: N_t must be divisible by n_rf");
  const auto block = nt / n_rf;
  HybridFactorization out;
  out.target_norm = target.norm();
  out.analog = CMatrix::Zero(nt, n_rf);
  out.digital = CMatrix::Zero(n_rf, target.cols());
  for (int b = 0; b < n_rf; ++b) {
    const CMatrix tb = target.middleRows(b * block, block);
    Eigen::JacobiSVD<CMatrix> svd(tb, Eigen::ComputeThinU);
    const CVector u = svd.matrixU().col(0);
    CVector a(block);
    for (Eigen::Index i = 0; i < block; ++i) a(i) = std::polar(1.0, std::arg(u(i)));
    out.analog.block(b * block, b, block, 1) = a;
    out.digital.row(b) = (a.adjoint() * tb) / static_cast<double>(block);
  }
  detail::match_norm(out.analog, out.digital, out.target_norm);
  out.residual = (target - out.analog * out.digital).norm();
  return out;
}

/// One analog matrix for all carriers; per-carrier digital parts, each scaled
/// to its own target norm.
inline SharedAnalogFactorization ofdm_shared_analog(std::span<const CMatrix> targets, const CMatrix& dictionary,
                                                    int n_rf) {
  auto [analog, digital] = detail::omp_core(targets, dictionary, n_rf);
  SharedAnalogFactorization out;
  out.analog = std::move(analog);
  out.digital = std::move(digital);
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const double norm = targets[k].norm();
    detail::match_norm(out.analog, out.digital[k], norm);
    out.target_norms.push_back(norm);
    out.residuals.push_back((targets[k] - out.analog * out.digital[k]).norm());
  }
  return out;
}

/// W = the m_hat strongest left singular vectors; m_hat > m is truncated.
inline CombinerDesign design_combiner(const ChannelDecomposition& decomposition, int m_hat) {
  if (m_hat < 1) throw Error("combiner needs at least one column");
  CombinerDesign out;
  out.truncated = m_hat > decomposition.rank;
  out.matrix = decomposition.left_vectors.leftCols(std::min(m_hat, decomposition.rank));
  return out;
}

/// H_tilde = W^H H with its numerical rank.
inline EffectiveChannel effective_channel(const CMatrix& combiner, const CMatrix& channel,
                                          double rank_tolerance = kDefaultRankTolerance) {
  if (combiner.rows() != channel.rows()) throw Error("combiner rows must equal N_r");
  EffectiveChannel out;
  out.matrix = combiner.adjoint() * channel;
  const Eigen::JacobiSVD<CMatrix> svd(out.matrix);
  const RVector& s = svd.singularValues();
  if (s.size() > 0 && s(0) > 0.0)
    while (out.rank < s.size() && s(out.rank) > rank_tolerance * s(0)) ++out.rank;
  return out;
}

/// (W^H W)^{-1/2} W^H H: the channel seen after a non-orthonormal combiner,
/// with the combined noise whitened back to unit covariance.
inline CMatrix whitened_effective_channel(const CMatrix& combiner, const CMatrix& channel) {
  if (combiner.rows() != channel.rows()) throw Error("combiner rows must equal N_r");
  const CMatrix gram = combiner.adjoint() * combiner;
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(gram);
  const RVector& ev = eig.eigenvalues();
  if (ev.size() == 0 || !(ev(0) > 1e-12 * ev(ev.size() - 1))) throw Error("combiner columns are linearly dependent");
  const CMatrix inv_sqrt = eig.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
                           eig.eigenvectors().adjoint();
  return inv_sqrt * combiner.adjoint() * channel;
}

}  // namespace gbmm
