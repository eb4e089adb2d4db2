#pragma once

// Spectral-efficiency quantities for single precoders and Gaussian-mixture
// receive signals: fixed-precoder SE, water-filling capacity, upper and lower
// bounds on the mixture SE, and a Monte-Carlo estimate of the exact SE.
//
// All log-determinants are natural logs internally; reported values are bits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "gbmm/parallel.hpp"
#include "gbmm/precoder_family.hpp"
#include "gbmm/random.hpp"
#include "gbmm/types.hpp"
#include "gbmm/upper_bound_optimizer.hpp"

namespace gbmm {

enum class SeKind { exact_mc, upper_bound, lower_bound, lower_bound_plus_gap, baseline_wf, fixed_precoder };

inline const char* to_string(SeKind kind) {
  switch (kind) {
    case SeKind::exact_mc: return "exact_mc";
    case SeKind::upper_bound: return "upper_bound";
    case SeKind::lower_bound: return "lower_bound";
    case SeKind::lower_bound_plus_gap: return "lower_bound_plus_gap";
    case SeKind::baseline_wf: return "baseline_wf";
    case SeKind::fixed_precoder: return "fixed_precoder";
  }
  return "unknown";
}

struct SeEstimate {
  double value = 0.0;
  SeKind kind = SeKind::fixed_precoder;
  double std_error = 0.0;
  std::uint64_t n_samples = 0;
};

namespace detail {

inline double log_sum_exp(std::span<const double> xs) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : xs) top = std::max(top, x);
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - top);
  return top + std::log(acc);
}

inline double log_det_hpd(const CMatrix& a) {
  Eigen::LLT<CMatrix> llt(a);
  if (llt.info() != Eigen::Success) throw Error("matrix is not positive definite");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) acc += std::log(llt.matrixLLT()(i, i).real());
  return 2.0 * acc;
}

}  // namespace detail

/// log2 det(I + (rho/N_s) H F F^H H^H) via the N_s x N_s Gram form.
inline SeEstimate se_fixed_precoder(const CMatrix& h, const CMatrix& precoder, double snr) {
  const auto ns = precoder.cols();
  if (ns == 0) throw Error("precoder has no columns");
  const double power = precoder.squaredNorm();
  if (power > ns * (1.0 + 1e-9) + 1e-9) throw Error("precoder power exceeds N_s");
  const CMatrix hf = h * precoder;
  const CMatrix gram = CMatrix::Identity(ns, ns) + (snr / static_cast<double>(ns)) * hf.adjoint() * hf;
  return {detail::log_det_hpd(gram) * kLog2E, SeKind::fixed_precoder, 0.0, 0};
}

/// Power allocation of the strongest N_s beams under water-filling.
inline RVector wf_allocation(const ChannelDecomposition& decomposition, double snr, int n_streams) {
  if (decomposition.rank < n_streams) throw Error("channel rank below the number of streams");
  if (snr <= 0.0) return RVector::Ones(n_streams);
  const RVector gains = decomposition.singular_values.head(n_streams).array().square().matrix();
  return water_fill(gains, snr / n_streams, n_streams).lambdas;
}

/// Best-beamspace precoder V_1 D_WF.
inline CMatrix bbs_precoder(const ChannelDecomposition& decomposition, double snr, int n_streams) {
  Selection first(static_cast<std::size_t>(n_streams));
  for (int j = 0; j < n_streams; ++j) first[static_cast<std::size_t>(j)] = j;
  return build_precoder(decomposition, first, wf_allocation(decomposition, snr, n_streams));
}

inline SeEstimate wf_capacity(const ChannelDecomposition& decomposition, double snr, int n_streams) {
  const RVector lambdas = wf_allocation(decomposition, snr, n_streams);
  const double rho_eff = snr / n_streams;
  double c = 0.0;
  for (int j = 0; j < n_streams; ++j) {
    const double s = decomposition.singular_values(j);
    c += std::log2(1.0 + rho_eff * s * s * lambdas(j));
  }
  return {c, SeKind::baseline_wf, 0.0, 0};
}

/// Entry (i, j) is ln z_ij = -ln det(Sigma_i + Sigma_j).
struct PairwiseLogZ {
  RMatrix log_z;
};

/// For a beamspace family every Sigma_i is diagonal in the U basis, so
/// Sigma_i + Sigma_j has eigenvalue 2 + a_il + a_jl along u_l and 2 elsewhere.
inline PairwiseLogZ pairwise_log_z(const PrecoderFamily& family) {
  const auto n = family.size();
  const int m = family.rank();
  std::vector<RVector> gains;
  gains.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) gains.push_back(family.direction_gains(i));
  const double outside = (family.n_rx() - m) * kLn2;
  PairwiseLogZ out{RMatrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double ld =
          (2.0 + gains[static_cast<std::size_t>(i)].array() + gains[static_cast<std::size_t>(j)].array()).log().sum();
      out.log_z(i, j) = out.log_z(j, i) = -(ld + outside);
    }
  }
  return out;
}

/// R^U = sum_i p_i (c_i - log2 p_i); c in bits.
inline SeEstimate upper_bound_from(const RVector& p, const RVector& capacities_bits) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) > 0.0) acc += p(i) * (capacities_bits(i) - std::log2(p(i)));
  return {acc, SeKind::upper_bound, 0.0, 0};
}

/// R^L = -sum_i p_i log2(sum_j p_j z_ij) - N_r log2 e, by log-sum-exp.
inline SeEstimate lower_bound_from(const RVector& p, const PairwiseLogZ& z, int n_rx) {
  const auto n = p.size();
  std::vector<double> terms;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(p(i) > 0.0)) continue;
    terms.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (p(j) > 0.0) terms.push_back(std::log(p(j)) + z.log_z(i, j));
    acc -= p(i) * detail::log_sum_exp(terms) * kLog2E;
  }
  return {acc - n_rx * kLog2E, SeKind::lower_bound, 0.0, 0};
}

/// R^L + N_r (log2 e - 1).
inline SeEstimate plus_gap(SeEstimate lower, int n_rx) {
  lower.value += n_rx * (kLog2E - 1.0);
  lower.kind = SeKind::lower_bound_plus_gap;
  return lower;
}

inline SeEstimate upper_bound(const PrecoderFamily& family) {
  return upper_bound_from(family.probabilities(), per_precoder_capacities(family));
}

inline SeEstimate lower_bound(const PrecoderFamily& family) {
  return lower_bound_from(family.probabilities(), pairwise_log_z(family), family.n_rx());
}

inline SeEstimate lower_bound_plus_gap(const PrecoderFamily& family) {
  return plus_gap(lower_bound(family), family.n_rx());
}

/// Zero-mean complex Gaussian mixture y ~ sum_i p_i CN(0, Sigma_i) with
/// Sigma_i = I + B_i B_i^H. Components are stored in an r-dimensional basis Q
/// spanning every B_i; on the complement all Sigma_i equal the identity.
class GaussianMixture {
 public:
  /// Beamspace family: Q = U and every reduced covariance is diagonal.
  static GaussianMixture from_family(const PrecoderFamily& family) {
    GaussianMixture g;
    g.ambient_dim_ = family.n_rx();
    g.reduced_dim_ = family.rank();
    g.weights_ = family.probabilities();
    g.diagonal_ = true;
    for (Eigen::Index i = 0; i < family.size(); ++i) {
      RVector var = 1.0 + family.direction_gains(i).array();
      g.log_dets_.push_back(var.array().log().sum());
      g.variances_.push_back(std::move(var));
    }
    return g;
  }

  /// Arbitrary precoders F_i (same column count) over channel H:
  /// B_i = sqrt(rho/N_s) H F_i.
  static GaussianMixture from_precoders(const CMatrix& h, std::span<const CMatrix> precoders, const RVector& weights,
                                        double snr) {
    if (precoders.empty()) throw Error("mixture needs at least one precoder");
    if (static_cast<Eigen::Index>(precoders.size()) != weights.size())
      throw Error("one weight per precoder required");
    const auto ns = precoders.front().cols();
    const double scale = std::sqrt(snr / static_cast<double>(ns));
    CMatrix stacked(h.rows(), ns * static_cast<Eigen::Index>(precoders.size()));
    for (std::size_t i = 0; i < precoders.size(); ++i) {
      if (precoders[i].cols() != ns) throw Error("precoders must share the stream count");
      stacked.middleCols(static_cast<Eigen::Index>(i) * ns, ns) = scale * (h * precoders[i]);
    }
    GaussianMixture g;
    g.ambient_dim_ = static_cast<int>(h.rows());
    g.weights_ = weights;
    g.diagonal_ = false;

    Eigen::JacobiSVD<CMatrix> svd(stacked, Eigen::ComputeThinU);
    const RVector& s = svd.singularValues();
    int r = 0;
    if (s.size() > 0 && s(0) > 0.0)
      while (r < s.size() && s(r) > 1e-12 * s(0)) ++r;
    CMatrix basis;
    if (r == 0) {
      r = 1;
      basis = CMatrix::Identity(h.rows(), 1);
    } else {
      basis = svd.matrixU().leftCols(r);
    }
    g.reduced_dim_ = r;
    for (std::size_t i = 0; i < precoders.size(); ++i) {
      const CMatrix c = basis.adjoint() * stacked.middleCols(static_cast<Eigen::Index>(i) * ns, ns);
      CMatrix cov = CMatrix::Identity(r, r) + c * c.adjoint();
      Eigen::LLT<CMatrix> llt(cov);
      CMatrix l = llt.matrixL();
      double ld = 0.0;
      for (int k = 0; k < r; ++k) ld += 2.0 * std::log(l(k, k).real());
      g.log_dets_.push_back(ld);
      g.covariances_.push_back(std::move(cov));
      g.cholesky_.push_back(std::move(l));
    }
    return g;
  }

  Eigen::Index size() const { return weights_.size(); }
  int ambient_dim() const { return ambient_dim_; }
  int reduced_dim() const { return reduced_dim_; }
  bool diagonal() const { return diagonal_; }
  const RVector& weights() const { return weights_; }

  GaussianMixture with_weights(RVector weights) const {
    if (weights.size() != size()) throw Error("one weight per component required");
    GaussianMixture g = *this;
    g.weights_ = std::move(weights);
    return g;
  }

  /// log2 det Sigma_i per component, in bits.
  RVector capacities() const {
    RVector c(size());
    for (Eigen::Index i = 0; i < size(); ++i) c(i) = log_dets_[static_cast<std::size_t>(i)] * kLog2E;
    return c;
  }

  PairwiseLogZ pairwise_log_z() const {
    const auto n = size();
    const double outside = (ambient_dim_ - reduced_dim_) * kLn2;
    PairwiseLogZ out{RMatrix(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i; j < n; ++j) {
        double ld;
        if (diagonal_) {
          ld = (variances_[static_cast<std::size_t>(i)].array() + variances_[static_cast<std::size_t>(j)].array())
                   .log()
                   .sum();
        } else {
          ld = detail::log_det_hpd(covariances_[static_cast<std::size_t>(i)] +
                                   covariances_[static_cast<std::size_t>(j)]);
        }
        out.log_z(i, j) = out.log_z(j, i) = -(ld + outside);
      }
    }
    return out;
  }

  SeEstimate upper_bound() const { return upper_bound_from(weights_, capacities()); }
  SeEstimate lower_bound() const { return lower_bound_from(weights_, pairwise_log_z(), ambient_dim_); }
  SeEstimate lower_bound_plus_gap() const { return plus_gap(lower_bound(), ambient_dim_); }

  /// Draws one reduced-space sample of component `i` into `z` (length r).
  void sample(Eigen::Index i, Rng& rng, std::vector<Complex>& w, std::vector<Complex>& z) const {
    const int r = reduced_dim_;
    for (int k = 0; k < r; ++k) w[static_cast<std::size_t>(k)] = complex_normal(rng);
    if (diagonal_) {
      const RVector& var = variances_[static_cast<std::size_t>(i)];
      for (int k = 0; k < r; ++k) z[static_cast<std::size_t>(k)] = std::sqrt(var(k)) * w[static_cast<std::size_t>(k)];
    } else {
      const CMatrix& l = cholesky_[static_cast<std::size_t>(i)];
      for (int row = 0; row < r; ++row) {
        Complex acc = 0.0;
        for (int col = 0; col <= row; ++col) acc += l(row, col) * w[static_cast<std::size_t>(col)];
        z[static_cast<std::size_t>(row)] = acc;
      }
    }
  }

  /// z^H Sigma_i^{-1} z in the reduced basis.
  double quadratic_form(Eigen::Index i, const std::vector<Complex>& z, std::vector<Complex>& scratch) const {
    const int r = reduced_dim_;
    double acc = 0.0;
    if (diagonal_) {
      const RVector& var = variances_[static_cast<std::size_t>(i)];
      for (int k = 0; k < r; ++k) acc += std::norm(z[static_cast<std::size_t>(k)]) / var(k);
      return acc;
    }
    const CMatrix& l = cholesky_[static_cast<std::size_t>(i)];
    for (int row = 0; row < r; ++row) {
      Complex v = z[static_cast<std::size_t>(row)];
      for (int col = 0; col < row; ++col) v -= l(row, col) * scratch[static_cast<std::size_t>(col)];
      v /= l(row, row).real();
      scratch[static_cast<std::size_t>(row)] = v;
      acc += std::norm(v);
    }
    return acc;
  }

  double log_det(Eigen::Index i) const { return log_dets_[static_cast<std::size_t>(i)]; }

 private:
  int ambient_dim_ = 0;
  int reduced_dim_ = 0;
  RVector weights_;
  bool diagonal_ = true;
  std::vector<double> log_dets_;
  std::vector<RVector> variances_;
  std::vector<CMatrix> covariances_;
  std::vector<CMatrix> cholesky_;
};

struct MonteCarloOptions {
  std::uint64_t n_samples = 200000;
  std::uint64_t seed = 1;
  int threads = 1;
  std::uint64_t block_size = 4096;  // samples per independently seeded block
};

inline constexpr std::uint64_t kMinMonteCarloSamples = 1000;

/// R = E[-log2 f(y)] - N_r log2(pi e). Sample blocks are seeded from
/// (seed, block index) and reduced in block order, so the result does not
/// depend on the thread count.
inline SeEstimate exact_se_monte_carlo(const GaussianMixture& mixture, const MonteCarloOptions& options) {
  if (options.n_samples < kMinMonteCarloSamples)
    throw Error("Monte-Carlo SE needs at least " + std::to_string(kMinMonteCarloSamples) + " samples");
  const auto n_comp = mixture.size();
  const int r = mixture.reduced_dim();
  std::vector<Eigen::Index> active;
  std::vector<double> cumulative;
  std::vector<double> log_norm;  // ln p_k - r ln pi - ln det Sigma_k
  double total = 0.0;
  for (Eigen::Index k = 0; k < n_comp; ++k) {
    const double w = mixture.weights()(k);
    if (!(w > 0.0)) continue;
    active.push_back(k);
    total += w;
    cumulative.push_back(total);
    log_norm.push_back(std::log(w) - r * std::log(kPi) - mixture.log_det(k));
  }
  if (active.empty()) throw Error("mixture has no component with positive weight");

  struct BlockStats {
    double count = 0.0, mean = 0.0, m2 = 0.0;
  };
  const std::uint64_t block = std::max<std::uint64_t>(1, options.block_size);
  const std::uint64_t n_blocks = (options.n_samples + block - 1) / block;
  std::vector<BlockStats> stats(static_cast<std::size_t>(n_blocks));

  parallel_for(static_cast<std::size_t>(n_blocks), options.threads, [&](std::size_t b) {
    Rng rng(derive_seed(options.seed, b, 0x4d43));
    const std::uint64_t begin = b * block;
    const std::uint64_t end = std::min(options.n_samples, begin + block);
    std::vector<Complex> w(static_cast<std::size_t>(r)), z(static_cast<std::size_t>(r)),
        scratch(static_cast<std::size_t>(r));
    std::vector<double> terms(active.size());
    BlockStats s;
    for (std::uint64_t t = begin; t < end; ++t) {
      const double u = uniform01(rng) * total;
      auto pos = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                                          cumulative.begin());
      pos = std::min(pos, active.size() - 1);
      mixture.sample(active[pos], rng, w, z);
      for (std::size_t k = 0; k < active.size(); ++k)
        terms[k] = log_norm[k] - mixture.quadratic_form(active[k], z, scratch);
      const double value = -detail::log_sum_exp(terms) * kLog2E;
      s.count += 1.0;
      const double delta = value - s.mean;
      s.mean += delta / s.count;
      s.m2 += delta * (value - s.mean);
    }
    stats[b] = s;
  });

  BlockStats acc;
  for (const auto& s : stats) {
    if (s.count == 0.0) continue;
    const double n = acc.count + s.count;
    const double delta = s.mean - acc.mean;
    acc.mean += delta * s.count / n;
    acc.m2 += s.m2 + delta * delta * acc.count * s.count / n;
    acc.count = n;
  }
  const double variance = acc.count > 1.0 ? acc.m2 / (acc.count - 1.0) : 0.0;
  SeEstimate out;
  out.kind = SeKind::exact_mc;
  out.value = acc.mean - r * std::log2(kPi * std::exp(1.0));
  out.std_error = std::sqrt(variance / acc.count);
  out.n_samples = options.n_samples;
  return out;
}

inline SeEstimate exact_se_monte_carlo(const PrecoderFamily& family, const MonteCarloOptions& options) {
  return exact_se_monte_carlo(GaussianMixture::from_family(family), options);
}

}  // namespace gbmm
