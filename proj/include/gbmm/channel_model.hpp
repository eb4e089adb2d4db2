#pragma once

// Clustered (Saleh-Valenzuela) narrowband mmWave channels between two uniform
// square planar arrays, and the truncated SVD used by the precoder designs.

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/SVD>

#include "gbmm/random.hpp"
#include "gbmm/types.hpp"

namespace gbmm {

struct ArrayGeometry {
  int n_antennas = 16;
  double spacing_over_wavelength = 0.5;

  int side() const { return static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_antennas)))); }

  void validate() const {
    if (n_antennas <= 0 || side() * side() != n_antennas)
      throw Error("array size must be a positive perfect square");
    if (!(spacing_over_wavelength > 0.0)) throw Error("antenna spacing must be positive");
  }
};

struct PathParameter {
  Complex gain;
  double aoa_azimuth = 0.0;
  double aoa_elevation = 0.0;
  double aod_azimuth = 0.0;
  double aod_elevation = 0.0;
  int cluster_index = 1;  // 1-based
};

struct ChannelConfig {
  int n_clusters = 3;
  int n_rays_per_cluster = 2;
  std::vector<double> cluster_powers = {1.0, 1.0, 1.0};
  double angular_spread_deg = 10.0;
  ArrayGeometry tx_geometry{16, 0.5};
  ArrayGeometry rx_geometry{9, 0.5};

  int n_paths() const { return n_clusters * n_rays_per_cluster; }

  void validate() const {
    if (n_clusters <= 0 || n_rays_per_cluster <= 0) throw Error("cluster and ray counts must be positive");
    if (static_cast<int>(cluster_powers.size()) != n_clusters)
      throw Error("cluster_powers must have one entry per cluster");
    for (double p : cluster_powers)
      if (!(p > 0.0)) throw Error("cluster powers must be positive");
    if (!(angular_spread_deg >= 0.0)) throw Error("angular spread must be nonnegative");
    tx_geometry.validate();
    rx_geometry.validate();
  }

  /// Per-cluster gain variances rescaled so they sum to n_clusters, which
  /// together with the sqrt(Nt*Nr/(Ncl*Nray)) prefactor gives E||H||_F^2 = Nt*Nr.
  std::vector<double> normalized_cluster_variances() const {
    double total = 0.0;
    for (double p : cluster_powers) total += p;
    std::vector<double> out(cluster_powers.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cluster_powers[i] * n_clusters / total;
    return out;
  }
};

struct ChannelRealization {
  CMatrix matrix;  // N_r x N_t
  std::vector<PathParameter> paths;
};

struct ChannelDecomposition {
  CMatrix left_vectors;   // N_r x m
  RVector singular_values;  // m, strictly descending
  CMatrix right_vectors;  // N_t x m
  int rank = 0;

  int n_rx() const { return static_cast<int>(left_vectors.rows()); }
  int n_tx() const { return static_cast<int>(right_vectors.rows()); }
};

inline constexpr double kDefaultRankTolerance = 1e-10;

/// Array response of a USPA. Antenna (n1, n2) sits at position n1 * side + n2.
inline CVector steering_vector(const ArrayGeometry& geometry, double azimuth, double elevation) {
  const int side = geometry.side();
  const int n = geometry.n_antennas;
  const double k = 2.0 * kPi * geometry.spacing_over_wavelength;
  const double u = std::sin(azimuth) * std::sin(elevation);
  const double v = std::cos(elevation);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  CVector out(n);
  for (int n1 = 0; n1 < side; ++n1)
    for (int n2 = 0; n2 < side; ++n2)
      out(n1 * side + n2) = scale * std::polar(1.0, k * (n1 * u + n2 * v));
  return out;
}

/// Draws cluster means uniformly on [0, 2pi) per angle dimension and ray
/// offsets from a Laplacian whose standard deviation is the angular spread.
inline std::vector<PathParameter> sample_paths(const ChannelConfig& config, Rng& rng) {
  config.validate();
  const double scale = (config.angular_spread_deg * kPi / 180.0) / std::sqrt(2.0);
  const auto variances = config.normalized_cluster_variances();
  std::vector<PathParameter> paths;
  paths.reserve(static_cast<std::size_t>(config.n_paths()));
  for (int c = 0; c < config.n_clusters; ++c) {
    const double mean_aoa_az = 2.0 * kPi * uniform01(rng);
    const double mean_aoa_el = 2.0 * kPi * uniform01(rng);
    const double mean_aod_az = 2.0 * kPi * uniform01(rng);
    const double mean_aod_el = 2.0 * kPi * uniform01(rng);
    const double amplitude = std::sqrt(variances[static_cast<std::size_t>(c)]);
    for (int r = 0; r < config.n_rays_per_cluster; ++r) {
      PathParameter path;
      path.gain = amplitude * complex_normal(rng);
      path.aoa_azimuth = mean_aoa_az + laplace(rng, scale);
      path.aoa_elevation = mean_aoa_el + laplace(rng, scale);
      path.aod_azimuth = mean_aod_az + laplace(rng, scale);
      path.aod_elevation = mean_aod_el + laplace(rng, scale);
      path.cluster_index = c + 1;
      paths.push_back(path);
    }
  }
  return paths;
}

inline ChannelRealization assemble_channel(std::vector<PathParameter> paths, const ChannelConfig& config) {
  config.validate();
  const int nt = config.tx_geometry.n_antennas;
  const int nr = config.rx_geometry.n_antennas;
  const double scale = std::sqrt(static_cast<double>(nt) * nr / config.n_paths());
  CMatrix h = CMatrix::Zero(nr, nt);
  for (const auto& path : paths) {
    if (path.cluster_index < 1 || path.cluster_index > config.n_clusters)
      throw Error("path cluster index outside [1, n_clusters]");
    const CVector br = steering_vector(config.rx_geometry, path.aoa_azimuth, path.aoa_elevation);
    const CVector bt = steering_vector(config.tx_geometry, path.aod_azimuth, path.aod_elevation);
    h.noalias() += (scale * path.gain) * br * bt.adjoint();
  }
  return {std::move(h), std::move(paths)};
}

inline ChannelRealization generate_channel(const ChannelConfig& config, Rng& rng) {
  return assemble_channel(sample_paths(config, rng), config);
}

/// Thin SVD truncated to singular values above rank_tolerance * sigma_max.
inline ChannelDecomposition decompose(const CMatrix& h, double rank_tolerance = kDefaultRankTolerance) {
  if (!(rank_tolerance > 0.0 && rank_tolerance < 1.0)) throw Error("rank tolerance must lie in (0, 1)");
  Eigen::JacobiSVD<CMatrix> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RVector& s = svd.singularValues();
  if (s.size() == 0 || !(s(0) > 0.0)) throw Error("rank-zero channel");
  int m = 0;
  while (m < s.size() && s(m) > rank_tolerance * s(0)) ++m;
  ChannelDecomposition out;
  out.left_vectors = svd.matrixU().leftCols(m);
  out.singular_values = s.head(m);
  out.right_vectors = svd.matrixV().leftCols(m);
  out.rank = m;
  return out;
}

inline ChannelDecomposition decompose(const ChannelRealization& channel,
                                      double rank_tolerance = kDefaultRankTolerance) {
  return decompose(channel.matrix, rank_tolerance);
}

}  // namespace gbmm
