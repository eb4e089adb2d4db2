#pragma once

// Maps uniformly distributed n_b-bit codewords onto precoder indices so the
// index frequencies approximate a target activation distribution.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "gbmm/types.hpp"

namespace gbmm {

inline double entropy_bits(const RVector& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) > 0.0) h -= p(i) * std::log2(p(i));
  return h;
}

struct CodecReport {
  RVector achieved_p;
  double entropy_bits = 0.0;
  double tv_distance = 0.0;
  double rate = 0.0;  // entropy_bits / n_b
};

class CodebookPartition {
 public:
  /// Largest-remainder apportionment of 2^{n_bits} codewords; ties in the
  /// remainder go to the lower index. Every index with positive target
  /// probability gets at least one codeword, taken from the largest group.
  CodebookPartition(RVector target_p, int n_bits) : n_bits_(n_bits), target_p_(std::move(target_p)) {
    if (n_bits < 1 || n_bits > 62) throw Error("n_bits must lie in [1, 62]");
    if (target_p_.size() == 0) throw Error("target distribution is empty");
    if ((target_p_.array() < 0.0).any() || !target_p_.allFinite())
      throw Error("target probabilities must be finite and nonnegative");
    const double total = target_p_.sum();
    if (!(total > 0.0)) throw Error("target distribution has no mass");
    target_p_ /= total;

    const std::uint64_t words = std::uint64_t{1} << n_bits;
    const auto n = static_cast<std::size_t>(target_p_.size());
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < n; ++i) nonzero += target_p_(static_cast<Eigen::Index>(i)) > 0.0 ? 1 : 0;
    if (words < nonzero)
      throw Error("insufficient codewords: 2^n_bits must be at least the number of nonzero probabilities");

    sizes_.assign(n, 0);
    std::vector<double> remainder(n, 0.0);
    std::uint64_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double quota = target_p_(static_cast<Eigen::Index>(i)) * static_cast<double>(words);
      sizes_[i] = static_cast<std::uint64_t>(std::floor(quota));
      remainder[i] = quota - std::floor(quota);
      assigned += sizes_[i];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < words; k = (k + 1) % n) {
      const std::size_t i = order[k];
      if (target_p_(static_cast<Eigen::Index>(i)) > 0.0) {
        ++sizes_[i];
        ++assigned;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (target_p_(static_cast<Eigen::Index>(i)) > 0.0 && sizes_[i] == 0) {
        const auto largest = static_cast<std::size_t>(std::max_element(sizes_.begin(), sizes_.end()) - sizes_.begin());
        --sizes_[largest];
        sizes_[i] = 1;
      }
    }
    boundaries_.resize(n);
    std::partial_sum(sizes_.begin(), sizes_.end(), boundaries_.begin());
  }

  int n_bits() const { return n_bits_; }
  std::uint64_t n_words() const { return std::uint64_t{1} << n_bits_; }
  const std::vector<std::uint64_t>& group_sizes() const { return sizes_; }
  /// boundaries()[i] is one past the last codeword of group i.
  const std::vector<std::uint64_t>& boundaries() const { return boundaries_; }
  const RVector& target_p() const { return target_p_; }

  /// Group (precoder) index of a codeword, 0-based.
  std::size_t encode(std::uint64_t word) const {
    if (word >= n_words()) throw Error("codeword out of range");
    return static_cast<std::size_t>(std::upper_bound(boundaries_.begin(), boundaries_.end(), word) -
                                    boundaries_.begin());
  }

  RVector achieved_p() const {
    RVector out(static_cast<Eigen::Index>(sizes_.size()));
    for (std::size_t i = 0; i < sizes_.size(); ++i)
      out(static_cast<Eigen::Index>(i)) = static_cast<double>(sizes_[i]) / static_cast<double>(n_words());
    return out;
  }

 private:
  int n_bits_;
  RVector target_p_;
  std::vector<std::uint64_t> sizes_;
  std::vector<std::uint64_t> boundaries_;
};

inline CodebookPartition build_partition(const RVector& p, int n_bits) { return CodebookPartition(p, n_bits); }

inline CodecReport codec_report(const CodebookPartition& partition) {
  CodecReport out;
  out.achieved_p = partition.achieved_p();
  out.entropy_bits = entropy_bits(out.achieved_p);
  out.tv_distance = 0.5 * (out.achieved_p - partition.target_p()).cwiseAbs().sum();
  out.rate = out.entropy_bits / partition.n_bits();
  return out;
}

}  // namespace gbmm
