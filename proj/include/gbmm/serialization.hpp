#pragma once

// JSON records for channels, families, factorizations, SE estimates and codec
// reports. Complex matrices are stored row-major as flat [re, im, re, im, ...]
// arrays with explicit row and column counts.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gbmm/channel_model.hpp"
#include "gbmm/hybrid_design.hpp"
#include "gbmm/index_codec.hpp"
#include "gbmm/precoder_family.hpp"
#include "gbmm/se_metrics.hpp"

namespace gbmm {

using Json = nlohmann::json;

inline Json complex_matrix_to_json(const CMatrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(2 * m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      data.push_back(m(i, j).real());
      data.push_back(m(i, j).imag());
    }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline CMatrix complex_matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != 2 * rows * cols)
    throw Error("complex matrix record has inconsistent size");
  CMatrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c, k += 2) m(i, c) = Complex(data[k], data[k + 1]);
  return m;
}

inline Json real_vector_to_json(const RVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline RVector real_vector_from_json(const Json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const RVector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

inline void to_json(Json& j, const PathParameter& p) {
  j = {{"gain", {p.gain.real(), p.gain.imag()}},
       {"aoa_azimuth", p.aoa_azimuth},
       {"aoa_elevation", p.aoa_elevation},
       {"aod_azimuth", p.aod_azimuth},
       {"aod_elevation", p.aod_elevation},
       {"cluster_index", p.cluster_index}};
}

inline void from_json(const Json& j, PathParameter& p) {
  const auto g = j.at("gain").get<std::vector<double>>();
  if (g.size() != 2) throw Error("path gain must be a [re, im] pair");
  p.gain = Complex(g[0], g[1]);
  p.aoa_azimuth = j.at("aoa_azimuth").get<double>();
  p.aoa_elevation = j.at("aoa_elevation").get<double>();
  p.aod_azimuth = j.at("aod_azimuth").get<double>();
  p.aod_elevation = j.at("aod_elevation").get<double>();
  p.cluster_index = j.at("cluster_index").get<int>();
}

inline void to_json(Json& j, const ChannelRealization& c) {
  j = {{"matrix", complex_matrix_to_json(c.matrix)}, {"paths", c.paths}};
}

inline void from_json(const Json& j, ChannelRealization& c) {
  c.matrix = complex_matrix_from_json(j.at("matrix"));
  c.paths = j.at("paths").get<std::vector<PathParameter>>();
}

inline void to_json(Json& j, const ChannelFingerprint& f) {
  j = {{"seed", f.seed}, {"config_hash", f.config_hash}};
}

inline void from_json(const Json& j, ChannelFingerprint& f) {
  f.seed = j.at("seed").get<std::uint64_t>();
  f.config_hash = j.at("config_hash").get<std::uint64_t>();
}

inline Json family_to_json(const PrecoderFamily& family) {
  std::vector<std::vector<double>> lambdas;
  for (Eigen::Index i = 0; i < family.size(); ++i) {
    const RVector row = family.lambdas().row(i).transpose();
    lambdas.emplace_back(row.data(), row.data() + row.size());
  }
  return {{"n_streams", family.n_streams()},
          {"snr", family.snr()},
          {"selections", family.selections()},
          {"lambdas", std::move(lambdas)},
          {"p", real_vector_to_json(family.probabilities())},
          {"fingerprint", family.fingerprint()}};
}

/// The decomposition is not stored; regenerate it from the fingerprint.
inline PrecoderFamily family_from_json(const Json& j, std::shared_ptr<const ChannelDecomposition> decomposition) {
  auto selections = j.at("selections").get<std::vector<Selection>>();
  const auto rows = j.at("lambdas").get<std::vector<std::vector<double>>>();
  const int ns = j.at("n_streams").get<int>();
  LambdaMatrix lambdas(static_cast<Eigen::Index>(rows.size()), ns);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i].size()) != ns) throw Error("lambda row length must equal n_streams");
    for (int c = 0; c < ns; ++c) lambdas(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
  }
  return PrecoderFamily(std::move(decomposition), std::move(selections), std::move(lambdas),
                        real_vector_from_json(j.at("p")), j.at("snr").get<double>(),
                        j.at("fingerprint").get<ChannelFingerprint>());
}

/// Analog entries are stored as phases in radians; structural zeros of a
/// partially-connected analog matrix are null.
inline Json factorization_to_json(const HybridFactorization& f) {
  Json phases = Json::array();
  for (Eigen::Index i = 0; i < f.analog.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < f.analog.cols(); ++c) {
      if (f.analog(i, c) == Complex(0.0, 0.0))
        row.push_back(nullptr);
      else
        row.push_back(std::arg(f.analog(i, c)));
    }
    phases.push_back(std::move(row));
  }
  return {{"analog_phases", std::move(phases)},
          {"digital", complex_matrix_to_json(f.digital)},
          {"target_norm", f.target_norm},
          {"residual", f.residual}};
}

inline HybridFactorization factorization_from_json(const Json& j) {
  HybridFactorization f;
  const auto& phases = j.at("analog_phases");
  const auto rows = static_cast<Eigen::Index>(phases.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(phases.at(0).size()) : 0;
  f.analog = CMatrix::Zero(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = phases.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw Error("analog phase rows must share one length");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = row.at(static_cast<std::size_t>(c));
      if (!v.is_null()) f.analog(i, c) = std::polar(1.0, v.get<double>());
    }
  }
  f.digital = complex_matrix_from_json(j.at("digital"));
  f.target_norm = j.at("target_norm").get<double>();
  f.residual = j.at("residual").get<double>();
  return f;
}

inline void to_json(Json& j, const SeEstimate& e) {
  j = {{"kind", to_string(e.kind)}, {"value", e.value}, {"std_error", e.std_error}, {"n_samples", e.n_samples}};
}

inline Json partition_to_json(const CodebookPartition& partition) {
  return {{"n_bits", partition.n_bits()}, {"sizes", partition.group_sizes()}};
}

inline Json codec_report_to_json(const CodecReport& r) {
  return {{"achieved_p", real_vector_to_json(r.achieved_p)},
          {"entropy_bits", r.entropy_bits},
          {"tv_distance", r.tv_distance},
          {"rate", r.rate}};
}

}  // namespace gbmm
