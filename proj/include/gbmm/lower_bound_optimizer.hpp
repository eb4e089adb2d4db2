#pragma once

// Barrier-augmented projected gradient ascent over (p, lambda) maximizing the
// SE lower bound R^L, with alternating p and lambda steps, backtracking line
// search, and optional freezing of coordinates that fall below a threshold.
//
// lambda is the |F| * N_s vector of per-stream powers, precoder-major, and
// q = p (x) 1_{N_s}, so the power constraint reads q^T lambda = N_s.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gbmm/precoder_family.hpp"
#include "gbmm/se_metrics.hpp"
#include "gbmm/types.hpp"

namespace gbmm {

struct BarrierConfig {
  std::vector<double> t_schedule = {1e2, 1e3, 1e4, 1e5};
  double halting_epsilon = 1e-3;
  double prune_threshold = 2e-3;  // tau
  bool gradient_modification = true;
  double line_search_shrink = 0.7;
  double line_search_slope = 0.3;
  int max_iterations = 20000;
  // With gradient modification, probabilities still frozen below tau at
  // the end are reported as exactly zero.
  bool zero_frozen_output = true;

  void validate() const {
    if (t_schedule.empty()) throw Error("barrier schedule must not be empty");
    for (std::size_t i = 0; i < t_schedule.size(); ++i) {
      if (!(t_schedule[i] > 0.0)) throw Error("barrier parameters must be positive");
      if (i > 0 && !(t_schedule[i] > t_schedule[i - 1])) throw Error("barrier schedule must be increasing");
    }
    if (!(halting_epsilon > 0.0)) throw Error("halting epsilon must be positive");
    if (!(prune_threshold > 0.0)) throw Error("gradient modification threshold must be positive");
    if (!(line_search_shrink > 0.0 && line_search_shrink < 1.0)) throw Error("line search shrink must lie in (0, 1)");
    if (!(line_search_slope > 0.0 && line_search_slope < 0.5)) throw Error("line search slope must lie in (0, 0.5)");
    if (max_iterations < 1) throw Error("max_iterations must be positive");
  }
};

struct OptimizerState {
  RVector p;
  RVector lambda;
  int iteration = 0;
  std::vector<double> objective_trace;
  std::vector<bool> active_p;
  std::vector<bool> active_lambda;

  RVector q(int n_streams) const {
    RVector out(lambda.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) out.segment(i * n_streams, n_streams).setConstant(p(i));
    return out;
  }
};

/// Precomputed channel quantities of a family, independent of (p, lambda).
class LowerBoundProblem {
 public:
  explicit LowerBoundProblem(const PrecoderFamily& family)
      : n_precoders_(family.size()),
        n_streams_(family.n_streams()),
        n_rx_(family.n_rx()),
        rank_(family.rank()),
        selections_(family.selections()),
        slot_gain_(family.size(), family.n_streams()) {
    const auto& sigma = family.decomposition().singular_values;
    for (Eigen::Index i = 0; i < n_precoders_; ++i)
      for (int j = 0; j < n_streams_; ++j) {
        const double s = sigma(selections_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        slot_gain_(i, j) = family.snr_per_stream() * s * s;
      }
  }

  Eigen::Index n_precoders() const { return n_precoders_; }
  int n_streams() const { return n_streams_; }
  int n_rx() const { return n_rx_; }

  /// Per-precoder gains a_il over the m singular directions.
  std::vector<RVector> direction_gains(const RVector& lambda) const {
    std::vector<RVector> a(static_cast<std::size_t>(n_precoders_), RVector::Zero(rank_));
    for (Eigen::Index i = 0; i < n_precoders_; ++i)
      for (int j = 0; j < n_streams_; ++j)
        a[static_cast<std::size_t>(i)](selections_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) =
            slot_gain_(i, j) * lambda(i * n_streams_ + j);
    return a;
  }

  RMatrix log_z(const std::vector<RVector>& a) const {
    const double outside = (n_rx_ - rank_) * kLn2;
    RMatrix lz(n_precoders_, n_precoders_);
    for (Eigen::Index i = 0; i < n_precoders_; ++i)
      for (Eigen::Index k = i; k < n_precoders_; ++k)
        lz(i, k) = lz(k, i) =
            -((2.0 + a[static_cast<std::size_t>(i)].array() + a[static_cast<std::size_t>(k)].array()).log().sum() +
              outside);
    return lz;
  }

  /// ln S_i = ln sum_j p_j z_ij.
  RVector log_mixture(const RVector& p, const RMatrix& lz) const {
    RVector out(n_precoders_);
    std::vector<double> terms(static_cast<std::size_t>(n_precoders_));
    for (Eigen::Index i = 0; i < n_precoders_; ++i) {
      for (Eigen::Index j = 0; j < n_precoders_; ++j) terms[static_cast<std::size_t>(j)] = std::log(p(j)) + lz(i, j);
      out(i) = detail::log_sum_exp(terms);
    }
    return out;
  }

  /// R^L in bits; requires p > 0.
  double lower_bound_bits(const RVector& p, const RVector& lambda) const {
    const RMatrix lz = log_z(direction_gains(lambda));
    const RVector ls = log_mixture(p, lz);
    return -p.dot(ls) * kLog2E - n_rx_ * kLog2E;
  }

  const Selection& selection(Eigen::Index i) const { return selections_[static_cast<std::size_t>(i)]; }
  double slot_gain(Eigen::Index i, int j) const { return slot_gain_(i, j); }

 private:
  Eigen::Index n_precoders_;
  int n_streams_;
  int n_rx_;
  int rank_;
  std::vector<Selection> selections_;
  RMatrix slot_gain_;
};

/// f = R^L + (1/t) (sum ln p_i + sum ln lambda_ij); -inf outside the open orthant.
inline double barrier_objective(const LowerBoundProblem& problem, const RVector& p, const RVector& lambda,
                                double t_barrier) {
  if ((p.array() <= 0.0).any() || (lambda.array() <= 0.0).any()) return -std::numeric_limits<double>::infinity();
  const double barrier = p.array().log().sum() + lambda.array().log().sum();
  return problem.lower_bound_bits(p, lambda) + barrier / t_barrier;
}

inline double barrier_objective(const LowerBoundProblem& problem, const OptimizerState& state, double t_barrier) {
  return barrier_objective(problem, state.p, state.lambda, t_barrier);
}

namespace detail {

inline bool is_active(const std::vector<bool>& mask, Eigen::Index i) {
  return mask.empty() || mask[static_cast<std::size_t>(i)];
}

}  // namespace detail

/// grad_p f. Entries outside the active set are left at zero.
inline RVector grad_p(const LowerBoundProblem& problem, const OptimizerState& state, double t_barrier) {
  const auto n = problem.n_precoders();
  const RMatrix lz = problem.log_z(problem.direction_gains(state.lambda));
  const RVector ls = problem.log_mixture(state.p, lz);
  const RVector log_p = state.p.array().log().matrix();
  RVector g = RVector::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!detail::is_active(state.active_p, k)) continue;
    double cross = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) cross += std::exp(log_p(i) + lz(i, k) - ls(i));
    g(k) = -(ls(k) + cross) * kLog2E + 1.0 / (t_barrier * state.p(k));
  }
  return g;
}

/// grad_lambda f. d ln z_ij / d lambda_kl only involves the shared direction
/// s = sel_k[l], so (Sigma_i + Sigma_j)^{-1} reduces to 1 / (2 + a_is + a_js).
inline RVector grad_lambda(const LowerBoundProblem& problem, const OptimizerState& state, double t_barrier,
                           bool respect_mask = true) {
  const auto n = problem.n_precoders();
  const int ns = problem.n_streams();
  const auto a = problem.direction_gains(state.lambda);
  const RMatrix lz = problem.log_z(a);
  const RVector ls = problem.log_mixture(state.p, lz);
  const RVector log_p = state.p.array().log().matrix();
  RVector g = RVector::Zero(n * ns);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (int l = 0; l < ns; ++l) {
      const Eigen::Index idx = k * ns + l;
      if (respect_mask && !detail::is_active(state.active_lambda, idx)) continue;
      const int s = problem.selection(k)[static_cast<std::size_t>(l)];
      const double aks = a[static_cast<std::size_t>(k)](s);
      double acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double base = log_p(k) + log_p(j) + lz(k, j);
        const double weight = std::exp(base - ls(k)) + std::exp(base - ls(j));
        acc += weight / (2.0 + aks + a[static_cast<std::size_t>(j)](s));
      }
      g(idx) = problem.slot_gain(k, l) * acc * kLog2E + 1.0 / (t_barrier * state.lambda(idx));
    }
  }
  return g;
}

/// Mean-centres the gradient over the active set; inactive entries get 0.
inline RVector project_p(const RVector& gradient, const std::vector<bool>& active = {}) {
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < gradient.size(); ++i)
    if (detail::is_active(active, i)) {
      sum += gradient(i);
      ++count;
    }
  RVector out = RVector::Zero(gradient.size());
  if (count == 0) return out;
  const double mean = sum / count;
  for (Eigen::Index i = 0; i < gradient.size(); ++i)
    if (detail::is_active(active, i)) out(i) = gradient(i) - mean;
  return out;
}

/// (I - 1 q^T / (q^T 1)) restricted to the active set, so q^T delta = 0.
/// With every entry active q^T 1 = N_s.
inline RVector project_lambda(const RVector& gradient, const RVector& q, const std::vector<bool>& active = {}) {
  double qg = 0.0, q1 = 0.0;
  for (Eigen::Index i = 0; i < gradient.size(); ++i)
    if (detail::is_active(active, i)) {
      qg += q(i) * gradient(i);
      q1 += q(i);
    }
  RVector out = RVector::Zero(gradient.size());
  if (!(q1 > 0.0)) return out;
  for (Eigen::Index i = 0; i < gradient.size(); ++i)
    if (detail::is_active(active, i)) out(i) = gradient(i) - qg / q1;
  return out;
}

/// Orthogonal projection onto {q^T delta = 0} over the active set; always an
/// ascent direction for `gradient`.
inline RVector project_lambda_orthogonal(const RVector& gradient, const RVector& q,
                                         const std::vector<bool>& active = {}) {
  double qg = 0.0, qq = 0.0;
  for (Eigen::Index i = 0; i < gradient.size(); ++i)
    if (detail::is_active(active, i)) {
      qg += q(i) * gradient(i);
      qq += q(i) * q(i);
    }
  RVector out = RVector::Zero(gradient.size());
  if (!(qq > 0.0)) return out;
  for (Eigen::Index i = 0; i < gradient.size(); ++i)
    if (detail::is_active(active, i)) out(i) = gradient(i) - q(i) * qg / qq;
  return out;
}

/// lambda <- N_s lambda / (q^T lambda).
inline RVector rescale_lambda(const RVector& lambda, const RVector& p, int n_streams) {
  double power = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) power += p(i) * lambda.segment(i * n_streams, n_streams).sum();
  if (!(power > 0.0)) throw Error("cannot rescale a zero power allocation");
  return lambda * (n_streams / power);
}

inline OptimizerState rescale_lambda(OptimizerState state, int n_streams) {
  state.lambda = rescale_lambda(state.lambda, state.p, n_streams);
  return state;
}

struct LineSearchOptions {
  double shrink = 0.7;
  double slope = 0.3;
  double min_step = 1e-16;
};

/// Armijo backtracking on phi(eta) from eta = 1: accepts the first eta with
/// phi(eta) >= phi(0) + slope * eta * derivative. Returns 0 when the
/// derivative is not positive or the step underflows.
template <typename Phi>
double backtracking_line_search(Phi&& phi, double phi0, double derivative, const LineSearchOptions& options) {
  if (!(derivative > 0.0) || !std::isfinite(phi0)) return 0.0;
  for (double eta = 1.0; eta >= options.min_step; eta *= options.shrink) {
    const double value = phi(eta);
    if (std::isfinite(value) && value >= phi0 + options.slope * eta * derivative) return eta;
  }
  return 0.0;
}

enum class StepVariable { p, lambda };

/// Line search along `direction` for one block. For p the trial point is
/// made power-feasible by rescale_lambda, and `derivative` must be the slope
/// of that composed path.
inline double line_search(const LowerBoundProblem& problem, const OptimizerState& state, const RVector& direction,
                          StepVariable which, double derivative, double t_barrier, const LineSearchOptions& options) {
  const double f0 = barrier_objective(problem, state, t_barrier);
  if (which == StepVariable::p) {
    return backtracking_line_search(
        [&](double eta) {
          const RVector p = state.p + eta * direction;
          if ((p.array() <= 0.0).any()) return -std::numeric_limits<double>::infinity();
          return barrier_objective(problem, p, rescale_lambda(state.lambda, p, problem.n_streams()), t_barrier);
        },
        f0, derivative, options);
  }
  return backtracking_line_search(
      [&](double eta) { return barrier_objective(problem, state.p, state.lambda + eta * direction, t_barrier); }, f0,
      derivative, options);
}

struct TraceRow {
  int iteration = 0;
  double t_barrier = 0.0;
  double objective = 0.0;
  double lower_bound = 0.0;  // R^L, bits
  double eta_p = 0.0;
  double eta_lambda = 0.0;
  int active_p = 0;
  int active_lambda = 0;
};

struct LowerBoundResult {
  PrecoderFamily family;
  std::vector<TraceRow> trace;
  bool reached_max_iterations = false;
};

namespace detail {

inline std::vector<bool> threshold_mask(const RVector& v, double tau, bool enabled) {
  std::vector<bool> mask(static_cast<std::size_t>(v.size()), true);
  if (enabled)
    for (Eigen::Index i = 0; i < v.size(); ++i) mask[static_cast<std::size_t>(i)] = v(i) >= tau;
  return mask;
}

inline int count_true(const std::vector<bool>& mask) {
  int c = 0;
  for (bool b : mask) c += b ? 1 : 0;
  return c;
}

}  // namespace detail

/// Runs the alternating projected ascent from uniform p and unit lambda
/// through every barrier stage, warm-starting each stage from the last.
inline LowerBoundResult optimize_lower_bound(const PrecoderFamily& family, const BarrierConfig& config = {},
                                             bool warm_start = false) {
  config.validate();
  const LowerBoundProblem problem(family);
  const auto n = problem.n_precoders();
  const int ns = problem.n_streams();
  const LineSearchOptions ls_options{config.line_search_shrink, config.line_search_slope, 1e-16};

  OptimizerState state;
  state.p = RVector::Constant(n, 1.0 / static_cast<double>(n));
  state.lambda = RVector::Ones(n * ns);
  if (warm_start) {
    state.p = family.probabilities();
    for (Eigen::Index i = 0; i < n; ++i) state.lambda.segment(i * ns, ns) = family.lambdas().row(i).transpose();
  }

  std::vector<TraceRow> trace;
  bool exhausted = false;
  for (double t : config.t_schedule) {
    while (true) {
      if (state.iteration >= config.max_iterations) {
        exhausted = true;
        break;
      }
      state.active_p = detail::threshold_mask(state.p, config.prune_threshold, config.gradient_modification);
      state.active_lambda = detail::threshold_mask(state.lambda, config.prune_threshold, config.gradient_modification);

      // p block. The slope of the power-feasible path p + eta dp is
      // g_p^T dp - (g_lambda^T lambda)(b^T dp) / N_s with b_i = sum_j lambda_ij.
      const RVector gp = grad_p(problem, state, t);
      const RVector gl_full = grad_lambda(problem, state, t, false);
      const double gl_dot_lambda = gl_full.dot(state.lambda);
      RVector b(n);
      for (Eigen::Index i = 0; i < n; ++i) b(i) = state.lambda.segment(i * ns, ns).sum();
      RVector dp = project_p(gp, state.active_p);
      double slope_p = gp.dot(dp) - gl_dot_lambda * b.dot(dp) / ns;
      if (!(slope_p > 0.0)) {
        RVector reduced = gp - b * (gl_dot_lambda / ns);
        for (Eigen::Index i = 0; i < n; ++i)
          if (!detail::is_active(state.active_p, i)) reduced(i) = 0.0;
        dp = project_p(reduced, state.active_p);
        slope_p = dp.squaredNorm();
      }
      const double eta_p = line_search(problem, state, dp, StepVariable::p, slope_p, t, ls_options);
      const double step_p = eta_p * dp.norm();
      if (eta_p > 0.0) {
        state.p += eta_p * dp;
        state.lambda = rescale_lambda(state.lambda, state.p, ns);
      }

      // lambda block.
      state.active_lambda = detail::threshold_mask(state.lambda, config.prune_threshold, config.gradient_modification);
      const RVector gl = grad_lambda(problem, state, t);
      const RVector q = state.q(ns);
      RVector dl = project_lambda(gl, q, state.active_lambda);
      double slope_l = gl.dot(dl);
      if (!(slope_l > 0.0)) {
        dl = project_lambda_orthogonal(gl, q, state.active_lambda);
        slope_l = gl.dot(dl);
      }
      const double eta_l = line_search(problem, state, dl, StepVariable::lambda, slope_l, t, ls_options);
      const double step_l = eta_l * dl.norm();
      if (eta_l > 0.0) state.lambda += eta_l * dl;

      ++state.iteration;
      TraceRow row;
      row.iteration = state.iteration;
      row.t_barrier = t;
      row.objective = barrier_objective(problem, state, t);
      row.lower_bound = problem.lower_bound_bits(state.p, state.lambda);
      row.eta_p = eta_p;
      row.eta_lambda = eta_l;
      row.active_p = detail::count_true(state.active_p);
      row.active_lambda = detail::count_true(state.active_lambda);
      state.objective_trace.push_back(row.objective);
      trace.push_back(row);

      const bool halted = step_p <= config.halting_epsilon * state.p.norm() &&
                          step_l <= config.halting_epsilon * state.lambda.norm();
      if (halted || (eta_p == 0.0 && eta_l == 0.0)) break;
    }
    if (exhausted) break;
  }

  LambdaMatrix lambdas(n, ns);
  for (Eigen::Index i = 0; i < n; ++i) lambdas.row(i) = state.lambda.segment(i * ns, ns).transpose();
  RVector p = state.p;
  if (config.gradient_modification && config.zero_frozen_output && (p.array() >= config.prune_threshold).any())
    for (Eigen::Index i = 0; i < n; ++i)
      if (p(i) < config.prune_threshold) p(i) = 0.0;
  p /= p.sum();
  PrecoderFamily out = normalize_family_power(family.with(std::move(lambdas), std::move(p)));
  return {std::move(out), std::move(trace), exhausted};
}

}  // namespace gbmm
