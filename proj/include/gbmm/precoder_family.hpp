#pragma once

// Beamspace precoder families F_i = V E_i D_i: a set of N_s-column selections
// of the channel's right singular vectors, a diagonal power allocation per
// selection, and the probability with which each precoder is activated.
//
// Selection indices are 0-based throughout the library.

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "gbmm/channel_model.hpp"
#include "gbmm/types.hpp"

namespace gbmm {

using Selection = std::vector<int>;
using LambdaMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Identifies the channel a family was optimized for, so a run can be replayed.
struct ChannelFingerprint {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

/// All C(m, n_streams) selections in lexicographic order; the first one is
/// the strongest-beamspace selection {0, ..., n_streams-1}.
inline std::vector<Selection> enumerate_selections(int m, int n_streams) {
  if (n_streams < 1) throw Error("need at least one data stream");
  if (n_streams >= m)
    throw Error("index modulation impossible: n_streams (" + std::to_string(n_streams) +
                ") must be smaller than the channel rank (" + std::to_string(m) + ")");
  std::vector<Selection> out;
  out.reserve(binomial(m, n_streams));
  Selection s(static_cast<std::size_t>(n_streams));
  std::iota(s.begin(), s.end(), 0);
  while (true) {
    out.push_back(s);
    int pos = n_streams - 1;
    while (pos >= 0 && s[static_cast<std::size_t>(pos)] == m - n_streams + pos) --pos;
    if (pos < 0) break;
    ++s[static_cast<std::size_t>(pos)];
    for (int j = pos + 1; j < n_streams; ++j) s[static_cast<std::size_t>(j)] = s[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

/// Column j is v_{selection[j]} * sqrt(lambda_j).
inline CMatrix build_precoder(const ChannelDecomposition& decomposition, const Selection& selection,
                              const RVector& lambdas) {
  if (static_cast<Eigen::Index>(selection.size()) != lambdas.size())
    throw Error("allocation length must equal the number of selected columns");
  CMatrix f(decomposition.n_tx(), static_cast<Eigen::Index>(selection.size()));
  for (std::size_t j = 0; j < selection.size(); ++j) {
    const int col = selection[j];
    if (col < 0 || col >= decomposition.rank) throw Error("selection index outside channel rank");
    f.col(static_cast<Eigen::Index>(j)) =
        decomposition.right_vectors.col(col) * std::sqrt(lambdas(static_cast<Eigen::Index>(j)));
  }
  return f;
}

/// Sigma_i = I + (rho/N_s) H F_i F_i^H H^H kept in eigen form: along u_j the
/// eigenvalue is 1 + (rho/N_s) sigma_j^2 lambda_ij, elsewhere 1.
struct ReceiveCovariance {
  CMatrix directions;   // N_r x N_s, orthonormal columns u_j
  RVector eigenvalues;  // N_s, all >= 1
  int dimension = 0;    // N_r

  double log_det() const { return eigenvalues.array().log().sum(); }

  CMatrix dense() const {
    CMatrix out = CMatrix::Identity(dimension, dimension);
    for (Eigen::Index j = 0; j < eigenvalues.size(); ++j)
      out.noalias() += (eigenvalues(j) - 1.0) * directions.col(j) * directions.col(j).adjoint();
    return out;
  }
};

struct FamilyCheck {
  bool ok = true;
  std::string reason;
};

class PrecoderFamily {
 public:
  PrecoderFamily(std::shared_ptr<const ChannelDecomposition> decomposition, std::vector<Selection> selections,
                 LambdaMatrix lambdas, RVector probabilities, double snr, ChannelFingerprint fingerprint = {})
      : decomposition_(std::move(decomposition)),
        selections_(std::move(selections)),
        lambdas_(std::move(lambdas)),
        probabilities_(std::move(probabilities)),
        snr_(snr),
        fingerprint_(fingerprint) {
    if (!decomposition_) throw Error("family requires a channel decomposition");
    if (selections_.empty()) throw Error("family must contain at least one precoder");
    n_streams_ = static_cast<int>(selections_.front().size());
    if (n_streams_ < 1) throw Error("selections must choose at least one column");
    if (lambdas_.rows() != size() || lambdas_.cols() != n_streams_)
      throw Error("power allocation matrix must be |F| x N_s");
    if (probabilities_.size() != size()) throw Error("probability vector must have |F| entries");
    if (!(snr_ >= 0.0)) throw Error("snr must be nonnegative");
    for (const auto& s : selections_) {
      if (static_cast<int>(s.size()) != n_streams_) throw Error("all selections must have N_s entries");
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (s[j] < 0 || s[j] >= decomposition_->rank) throw Error("selection index outside channel rank");
        if (j > 0 && s[j] <= s[j - 1]) throw Error("selection indices must be strictly increasing");
      }
    }
    if ((lambdas_.array() < 0.0).any()) throw Error("power allocations must be nonnegative");
    if ((probabilities_.array() < 0.0).any()) throw Error("probabilities must be nonnegative");
  }

  /// Exhaustive family with uniform p and unit power per stream.
  static PrecoderFamily uniform(std::shared_ptr<const ChannelDecomposition> decomposition, int n_streams,
                                double snr, ChannelFingerprint fingerprint = {}) {
    auto selections = enumerate_selections(decomposition->rank, n_streams);
    const auto count = static_cast<Eigen::Index>(selections.size());
    return PrecoderFamily(std::move(decomposition), std::move(selections), LambdaMatrix::Ones(count, n_streams),
                          RVector::Constant(count, 1.0 / static_cast<double>(count)), snr, fingerprint);
  }

  Eigen::Index size() const { return static_cast<Eigen::Index>(selections_.size()); }
  int n_streams() const { return n_streams_; }
  int n_rx() const { return decomposition_->n_rx(); }
  int rank() const { return decomposition_->rank; }
  double snr() const { return snr_; }
  double snr_per_stream() const { return snr_ / n_streams_; }
  const ChannelDecomposition& decomposition() const { return *decomposition_; }
  const std::shared_ptr<const ChannelDecomposition>& decomposition_ptr() const { return decomposition_; }
  const std::vector<Selection>& selections() const { return selections_; }
  const LambdaMatrix& lambdas() const { return lambdas_; }
  const RVector& probabilities() const { return probabilities_; }
  const ChannelFingerprint& fingerprint() const { return fingerprint_; }

  PrecoderFamily with(LambdaMatrix lambdas, RVector probabilities) const {
    return PrecoderFamily(decomposition_, selections_, std::move(lambdas), std::move(probabilities), snr_,
                          fingerprint_);
  }

  /// sum_i p_i sum_j lambda_ij; must equal N_s for a feasible family.
  double average_power() const { return probabilities_.dot(lambdas_.rowwise().sum()); }

  CMatrix precoder(Eigen::Index i) const {
    return build_precoder(*decomposition_, selections_[static_cast<std::size_t>(i)], lambdas_.row(i).transpose());
  }

  /// (rho/N_s) sigma^2 lambda over all m singular directions; zero for
  /// directions component i does not use.
  RVector direction_gains(Eigen::Index i) const {
    RVector a = RVector::Zero(rank());
    const auto& s = selections_[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < s.size(); ++j) {
      const double sigma = decomposition_->singular_values(s[j]);
      a(s[j]) = snr_per_stream() * sigma * sigma * lambdas_(i, static_cast<Eigen::Index>(j));
    }
    return a;
  }

 private:
  std::shared_ptr<const ChannelDecomposition> decomposition_;
  std::vector<Selection> selections_;
  LambdaMatrix lambdas_;
  RVector probabilities_;
  double snr_ = 0.0;
  ChannelFingerprint fingerprint_;
  int n_streams_ = 0;
};

inline ReceiveCovariance receive_covariance(const PrecoderFamily& family, Eigen::Index i) {
  if (i < 0 || i >= family.size()) throw Error("precoder index out of range");
  const auto& s = family.selections()[static_cast<std::size_t>(i)];
  const auto& dec = family.decomposition();
  ReceiveCovariance out;
  out.dimension = family.n_rx();
  out.directions.resize(out.dimension, family.n_streams());
  out.eigenvalues.resize(family.n_streams());
  for (std::size_t j = 0; j < s.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    const double sigma = dec.singular_values(s[j]);
    out.directions.col(col) = dec.left_vectors.col(s[j]);
    out.eigenvalues(col) = 1.0 + family.snr_per_stream() * sigma * sigma * family.lambdas()(i, col);
  }
  return out;
}

/// c_i = log2 det Sigma_i in bits, from the eigenvalues.
inline double per_precoder_capacity(const PrecoderFamily& family, Eigen::Index i) {
  return receive_covariance(family, i).log_det() * kLog2E;
}

inline RVector per_precoder_capacities(const PrecoderFamily& family) {
  RVector c(family.size());
  for (Eigen::Index i = 0; i < family.size(); ++i) c(i) = per_precoder_capacity(family, i);
  return c;
}

/// Checks 1^T p = 1 and sum_i p_i tr(D_i D_i^H) = N_s.
inline FamilyCheck validate_family(const PrecoderFamily& family, double tolerance = 1e-9) {
  const double psum = family.probabilities().sum();
  if (std::abs(psum - 1.0) > tolerance)
    return {false, "probabilities sum to " + std::to_string(psum) + ", not 1"};
  const double power = family.average_power();
  if (std::abs(power - family.n_streams()) > tolerance * family.n_streams())
    return {false, "average power " + std::to_string(power) + " differs from N_s"};
  return {};
}

/// Scales every lambda by one common factor so the average power equals N_s.
inline PrecoderFamily normalize_family_power(const PrecoderFamily& family) {
  const double power = family.average_power();
  if (!(power > 0.0)) throw Error("cannot normalize a family with zero average power");
  LambdaMatrix scaled = family.lambdas() * (family.n_streams() / power);
  return family.with(std::move(scaled), family.probabilities());
}

/// Drops precoders activated with probability below `threshold`, then
/// renormalizes p and the average power.
inline PrecoderFamily prune_family(const PrecoderFamily& family, double threshold) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < family.size(); ++i)
    if (family.probabilities()(i) >= threshold) keep.push_back(i);
  if (keep.empty()) throw Error("pruning threshold removes every precoder");
  std::vector<Selection> selections;
  LambdaMatrix lambdas(static_cast<Eigen::Index>(keep.size()), family.n_streams());
  RVector p(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    selections.push_back(family.selections()[static_cast<std::size_t>(keep[k])]);
    lambdas.row(row) = family.lambdas().row(keep[k]);
    p(row) = family.probabilities()(keep[k]);
  }
  p /= p.sum();
  PrecoderFamily pruned(family.decomposition_ptr(), std::move(selections), std::move(lambdas), std::move(p),
                        family.snr(), family.fingerprint());
  return normalize_family_power(pruned);
}

}  // namespace gbmm
