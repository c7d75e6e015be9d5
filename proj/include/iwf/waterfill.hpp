#pragma once

// Masked single-user waterfilling and rate evaluation.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "iwf/channel.hpp"
#include "iwf/error.hpp"

namespace iwf {

// Q x N matrix of normalized per-carrier powers p_q(k) = pbar_q(k) / P_q.
using PowerProfile = Eigen::MatrixXd;

// Clamp of x onto [lo, hi]. hi may be kUnbounded.
inline double project_interval(double x, double lo, double hi) {
  if (lo > hi) throw ParameterError("project_interval: lo > hi");
  if (x <= lo) return lo;
  if (x >= hi) return hi;
  return x;
}

// insr_q(k) = (sigma_q^2(k) + sum_{r != q} |H_qr(k)|^2 p_r(k)) / |H_qq(k)|^2,
// +infinity where the direct gain vanishes. Row q of `p` is ignored.
inline Eigen::VectorXd insr_profile(const NormalizedChannel& ch, int q, const PowerProfile& p) {
  Eigen::VectorXd insr(ch.n_carriers);
  for (int k = 0; k < ch.n_carriers; ++k) {
    double interference = ch.noise_psd(q, k);
    for (int r = 0; r < ch.q_count; ++r)
      if (r != q) interference += ch.gain(q, r, k) * p(r, k);
    const double direct = ch.gain(q, q, k);
    insr(k) = direct > 0 ? interference / direct : std::numeric_limits<double>::infinity();
  }
  return insr;
}

struct WaterfillSolution {
  Eigen::VectorXd power;
  double level = 0;  // water level mu
};

namespace detail {

inline double filled_sum(const Eigen::VectorXd& insr, const Eigen::VectorXd& p_max, double level) {
  double s = 0;
  for (Eigen::Index k = 0; k < insr.size(); ++k)
    if (std::isfinite(insr(k))) s += project_interval(level - insr(k), 0.0, p_max(k));
  return s;
}

inline Eigen::VectorXd fill(const Eigen::VectorXd& insr, const Eigen::VectorXd& p_max, double level) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(insr.size());
  for (Eigen::Index k = 0; k < insr.size(); ++k)
    if (std::isfinite(insr(k))) p(k) = project_interval(level - insr(k), 0.0, p_max(k));
  return p;
}

// Bisection on the water level; used when the breakpoint solve misses the
// power target by more than the tolerance.
inline double level_by_bisection(const Eigen::VectorXd& insr, const Eigen::VectorXd& p_max, double target) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  bool any_unbounded = false;
  for (Eigen::Index k = 0; k < insr.size(); ++k) {
    if (!std::isfinite(insr(k))) continue;
    lo = std::min(lo, insr(k));
    if (is_unbounded(p_max(k)))
      any_unbounded = true;
    else
      hi = std::max(hi, insr(k) + p_max(k));
  }
  if (any_unbounded) hi = std::max(hi, lo) + target;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double s = filled_sum(insr, p_max, mid);
    if (std::abs(s - target) <= 1e-12) return mid;
    (s < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Solves p(k) = [mu - insr(k)]_0^{p_max(k)} with sum_k p(k) = target.
//
// Exact breakpoint method: the filled volume is piecewise linear in mu with
// breakpoints insr(k) (carrier k starts filling) and insr(k) + p_max(k)
// (carrier k saturates). Carriers with infinite insr never receive power and
// contribute no breakpoints; unbounded masks contribute no saturation point.
inline WaterfillSolution waterfill_solve(const Eigen::VectorXd& insr, const Eigen::VectorXd& p_max,
                                         double target) {
  const Eigen::Index n = insr.size();
  if (p_max.size() != n) throw ParameterError("waterfill: insr and p_max sizes differ");
  if (!(target > 0)) throw ParameterError("waterfill: target must be positive");
  double mask_total = 0;
  double usable_total = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!(insr(k) >= 0)) throw ParameterError("waterfill: insr entries must be nonnegative");
    if (!(p_max(k) >= 0)) throw ParameterError("waterfill: p_max entries must be nonnegative");
    mask_total += p_max(k);
    if (std::isfinite(insr(k))) usable_total += p_max(k);
  }
  if (!(mask_total > target)) throw InfeasibleError("waterfill: sum of masks does not exceed the power target");
  if (usable_total < target)
    throw InfeasibleError("waterfill: carriers with nonzero direct gain cannot carry the power target");

  std::vector<std::pair<double, int>> events;
  events.reserve(static_cast<std::size_t>(2 * n));
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!std::isfinite(insr(k))) continue;
    events.emplace_back(insr(k), +1);
    if (!is_unbounded(p_max(k))) events.emplace_back(insr(k) + p_max(k), -1);
  }
  std::sort(events.begin(), events.end());

  double prev = events.front().first;
  double volume = 0;
  int slope = 0;
  double level = prev;
  bool found = false;
  for (const auto& [x, delta] : events) {
    const double at_x = volume + slope * (x - prev);
    if (slope > 0 && at_x >= target) {
      level = prev + (target - volume) / slope;
      found = true;
      break;
    }
    volume = at_x;
    prev = x;
    slope += delta;
  }
  if (!found) level = slope > 0 ? prev + (target - volume) / slope : prev;

  WaterfillSolution sol{detail::fill(insr, p_max, level), level};
  if (std::abs(sol.power.sum() - target) > 1e-10) {
    sol.level = detail::level_by_bisection(insr, p_max, target);
    sol.power = detail::fill(insr, p_max, sol.level);
  }
  return sol;
}

inline Eigen::VectorXd waterfill(const Eigen::VectorXd& insr, const Eigen::VectorXd& p_max, double target) {
  return waterfill_solve(insr, p_max, target).power;
}

// sinr_q(k) for every user and carrier.
inline Eigen::MatrixXd sinr(const NormalizedChannel& ch, const PowerProfile& p) {
  Eigen::MatrixXd out(ch.q_count, ch.n_carriers);
  for (int q = 0; q < ch.q_count; ++q)
    for (int k = 0; k < ch.n_carriers; ++k) {
      double den = ch.noise_psd(q, k);
      for (int r = 0; r < ch.q_count; ++r)
        if (r != q) den += ch.gain(q, r, k) * p(r, k);
      out(q, k) = ch.gain(q, q, k) * p(q, k) / den;
    }
  return out;
}

// R_q = (1/N) sum_k log_b(1 + sinr_q(k)). Natural log by default.
inline Eigen::VectorXd rate(const NormalizedChannel& ch, const PowerProfile& p,
                            double log_base = std::numbers::e) {
  if (!(log_base > 0) || log_base == 1.0) throw ParameterError("rate: invalid logarithm base");
  const Eigen::MatrixXd s = sinr(ch, p);
  const double scale = 1.0 / (ch.n_carriers * std::log(log_base));
  Eigen::VectorXd out(ch.q_count);
  for (int q = 0; q < ch.q_count; ++q) {
    double acc = 0;
    for (int k = 0; k < ch.n_carriers; ++k) acc += std::log1p(s(q, k));
    out(q) = acc * scale;
  }
  return out;
}

// Gaussian tail Q(x) = P(Z > x).
inline double gaussian_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

// Inverse of the Gaussian tail for 0 < y < 1 (safeguarded Newton).
inline double gaussian_tail_inverse(double y) {
  if (!(y > 0 && y < 1)) throw ParameterError("gaussian_tail_inverse: argument must lie in (0, 1)");
  double lo = -40.0;
  double hi = 40.0;
  double x = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double f = gaussian_tail(x) - y;
    if (f > 0)
      lo = x;
    else
      hi = x;
    const double density = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    double next = density > 0 ? x + f / density : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x))) return next;
    x = next;
  }
  return x;
}

// SNR gap of uncoded M-QAM at symbol error probability pe:
// Gamma = (Qinv(pe / 4))^2 / 3.
inline double gap_from_ser(double pe) {
  if (!(pe > 0 && pe < 1)) throw ParameterError("gap_from_ser: pe must lie in (0, 1)");
  const double x = gaussian_tail_inverse(pe / 4.0);
  const double gamma = x * x / 3.0;
  if (gamma < 1.0 - 1e-12 || x < 0) throw ParameterError("gap_from_ser: pe too large, gap would fall below 1");
  return std::max(gamma, 1.0);
}

}  // namespace iwf
