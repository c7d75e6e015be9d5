#pragma once

// Interference matrices and the uniqueness / convergence certificates C1-C6.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "iwf/channel.hpp"
#include "iwf/error.hpp"
#include "iwf/game.hpp"
#include "iwf/norms.hpp"
#include "iwf/waterfill.hpp"

namespace iwf {

// ---------------------------------------------------------------------------
// Carrier support sets
// ---------------------------------------------------------------------------

namespace detail {

// max sum_j a(j) x(j) subject to sum_j x(j) <= budget, 0 <= x(j) <= cap(j),
// over the indices in `items` (fractional knapsack, greedy by a).
inline double knapsack_max(std::vector<std::pair<double, double>>& items, double budget) {
  std::sort(items.begin(), items.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  double value = 0;
  for (const auto& [a, cap] : items) {
    if (budget <= 0 || a <= 0) break;
    const double take = std::min(cap, budget);
    value += a * take;
    budget -= take;
  }
  return value;
}

// Upper bound on the unmasked water level of user q over every opponent
// profile with per-user total N and per-carrier caps `bound`. For any carrier
// set S, sum_{j in S} (mu - floor_j) <= N, hence
//   mu <= (N + sum_{j in S} floor_j) / |S|,
// and the opponents' share of sum_{j in S} floor_j is a knapsack per
// opponent. Minimized over prefixes of carriers sorted by noise floor.
inline double level_upper_bound(const NormalizedChannel& ch, int q, const Eigen::MatrixXd& bound) {
  const int n = ch.n_carriers;
  std::vector<std::pair<double, int>> order;
  for (int j = 0; j < n; ++j)
    if (ch.gain(q, q, j) > 0) order.emplace_back(ch.noise_psd(q, j) / ch.gain(q, q, j), j);
  std::sort(order.begin(), order.end());
  double best = std::numeric_limits<double>::infinity();
  double noise_sum = 0;
  std::vector<std::pair<double, double>> items;
  for (std::size_t s = 0; s < order.size(); ++s) {
    noise_sum += order[s].first;
    double interference = 0;
    for (int r = 0; r < ch.q_count; ++r) {
      if (r == q) continue;
      items.clear();
      for (std::size_t i = 0; i <= s; ++i) {
        const int j = order[i].second;
        if (bound(r, j) > 0) items.emplace_back(ch.gain(q, r, j) / ch.gain(q, q, j), bound(r, j));
      }
      interference += knapsack_max(items, n);
    }
    best = std::min(best, (n + noise_sum + interference) / static_cast<double>(s + 1));
  }
  return best;
}

}  // namespace detail

// Sound over-approximation of the carriers each user can activate in a best
// response to any opponent profile supported on the current sets.
//
// Start from the carriers with nonzero direct gain and prune to a fixed
// point. Opponent r may put up to min(mask, N) on each carrier of D_r and N in
// total. Carrier k leaves D_q when, even with no interference on k, user q's
// water level cannot exceed insr_min(k) = sigma^2(k) / |H_qq(k)|^2. Two
// upper bounds on the level are used:
//  - the waterfill level with every other carrier at its worst-case floor
//    (the level is nondecreasing in every floor);
//  - without masks, detail::level_upper_bound, which also accounts for each
//    opponent's total power.
// Consequently WF maps profiles supported on the sets to profiles supported
// on the sets, and every equilibrium is supported on them.
inline CarrierSupport carrier_support_sets(const NormalizedChannel& ch) {
  const int q_count = ch.q_count;
  const int n = ch.n_carriers;
  CarrierSupport support = CarrierSupport::full(q_count, n);
  Eigen::MatrixXd cap(q_count, n);
  for (int q = 0; q < q_count; ++q)
    for (int k = 0; k < n; ++k) {
      if (ch.gain(q, q, k) > 0) {
        cap(q, k) = std::min(ch.mask_norm(q, k), static_cast<double>(n));
      } else {
        support.member[static_cast<std::size_t>(q)][static_cast<std::size_t>(k)] = false;
        cap(q, k) = 0;
      }
    }

  Eigen::VectorXd worst(n);
  for (bool changed = true; changed;) {
    changed = false;
    for (int q = 0; q < q_count; ++q) {
      for (int j = 0; j < n; ++j) {
        double interference = ch.noise_psd(q, j);
        for (int r = 0; r < q_count; ++r)
          if (r != q) interference += ch.gain(q, r, j) * cap(r, j);
        const double direct = ch.gain(q, q, j);
        worst(j) = direct > 0 ? interference / direct : std::numeric_limits<double>::infinity();
      }
      const Eigen::VectorXd mask = ch.mask_norm.row(q).transpose();
      const bool unmasked = std::all_of(mask.begin(), mask.end(), [](double m) { return is_unbounded(m); });
      const double mu_max = unmasked ? detail::level_upper_bound(ch, q, cap) : kUnbounded;
      for (int k = 0; k < n; ++k) {
        if (!support.contains(q, k)) continue;
        const double floor_k = ch.noise_psd(q, k) / ch.gain(q, q, k);
        double level = mu_max;
        Eigen::VectorXd floor = worst;
        floor(k) = floor_k;
        try {
          level = std::min(level, waterfill_solve(floor, mask, n).level);
        } catch (const InfeasibleError&) {
          // this bound is unavailable; keep the other one
        }
        // Relative margin so that rounding never removes a usable carrier.
        if (level < floor_k * (1.0 - 1e-9)) {
          support.member[static_cast<std::size_t>(q)][static_cast<std::size_t>(k)] = false;
          cap(q, k) = 0;
          changed = true;
        }
      }
    }
  }
  return support;
}

// ---------------------------------------------------------------------------
// Interference matrices
// ---------------------------------------------------------------------------

// [S]_qr = max_{k in D_q cap D_r} |Hbar_qr(k)|^2 / |Hbar_qq(k)|^2
//          * (d_qq / d_qr)^gamma * (P_r / P_q) * Gamma_q,   r != q,
// zero on the diagonal and when the intersection is empty.
inline Eigen::MatrixXd build_interference_matrix(const InterferenceChannel& ch, const CarrierSupport& support) {
  ch.validate();
  const int q_count = ch.q_count;
  if (support.q_count() != q_count) throw ParameterError("build_interference_matrix: support has wrong size");
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(q_count, q_count);
  for (int q = 0; q < q_count; ++q) {
    for (int r = 0; r < q_count; ++r) {
      if (r == q) continue;
      const double scale = std::pow(ch.distance(q, q) / ch.distance(q, r), ch.pathloss_exp) * ch.budget(r) /
                           ch.budget(q) * ch.gap(q);
      double best = 0;
      for (int k = 0; k < ch.n_carriers; ++k) {
        if (!support.contains(q, k) || !support.contains(r, k)) continue;
        const double cross = std::norm(ch.raw(q, r, k));
        const double direct = std::norm(ch.raw(q, q, k));
        double ratio = 0;
        if (direct > 0)
          ratio = cross / direct;
        else if (cross > 0)
          ratio = std::numeric_limits<double>::infinity();
        best = std::max(best, ratio * scale);
      }
      s(q, r) = best;
    }
  }
  return s;
}

// Maximum over all carriers (the "S bar" matrix).
inline Eigen::MatrixXd build_interference_matrix(const InterferenceChannel& ch) {
  return build_interference_matrix(ch, CarrierSupport::full(ch.q_count, ch.n_carriers));
}

// D_alpha + (I - D_alpha) S
inline Eigen::MatrixXd smax_alpha(const Eigen::MatrixXd& s, const Eigen::VectorXd& alpha) {
  if (s.rows() != s.cols() || alpha.size() != s.rows()) throw ParameterError("smax_alpha: shape mismatch");
  for (Eigen::Index q = 0; q < alpha.size(); ++q)
    if (!(alpha(q) >= 0.0 && alpha(q) < 1.0)) throw ParameterError("smax_alpha: alpha must lie in [0, 1)");
  Eigen::MatrixXd out = (Eigen::VectorXd::Ones(alpha.size()) - alpha).asDiagonal() * s;
  out.diagonal() += alpha;
  return out;
}

// ---------------------------------------------------------------------------
// Perron-Frobenius machinery
// ---------------------------------------------------------------------------

namespace detail {

inline void require_nonnegative_square(const Eigen::MatrixXd& a, const char* what) {
  if (a.rows() != a.cols()) throw ParameterError(std::string(what) + ": matrix must be square");
  if (!a.allFinite()) throw ParameterError(std::string(what) + ": matrix must be finite");
  if ((a.array() < 0).any()) throw ParameterError(std::string(what) + ": matrix must be nonnegative");
}

// reach[i][j]: j reachable from i along nonzero entries (paths of length >= 0).
inline std::vector<std::vector<bool>> reachability(const Eigen::MatrixXd& a) {
  const auto n = static_cast<std::size_t>(a.rows());
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    reach[i][i] = true;
    for (std::size_t j = 0; j < n; ++j)
      if (a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0) reach[i][j] = true;
  }
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t i = 0; i < n; ++i)
      if (reach[i][m])
        for (std::size_t j = 0; j < n; ++j)
          if (reach[m][j]) reach[i][j] = true;
  return reach;
}

// Strongly connected components of the nonzero pattern.
inline std::vector<std::vector<Eigen::Index>> strong_components(const Eigen::MatrixXd& a) {
  const auto reach = reachability(a);
  const auto n = reach.size();
  std::vector<bool> seen(n, false);
  std::vector<std::vector<Eigen::Index>> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (seen[i]) continue;
    std::vector<Eigen::Index> comp;
    for (std::size_t j = i; j < n; ++j)
      if (!seen[j] && reach[i][j] && reach[j][i]) {
        seen[j] = true;
        comp.push_back(static_cast<Eigen::Index>(j));
      }
    out.push_back(std::move(comp));
  }
  return out;
}

struct PerronIterate {
  Eigen::VectorXd vector;  // positive, max entry 1
  double lower = 0;        // Collatz-Wielandt bounds on rho(b)
  double upper = 0;
  bool converged = false;
};

// Power iteration on b + shift I for a matrix b whose Perron vector is
// positive. Stops when the Collatz-Wielandt bracket
//   min_i (b x)_i / x_i <= rho(b) <= max_i (b x)_i / x_i
// is relatively tighter than rel_tol.
inline PerronIterate perron_iteration(const Eigen::MatrixXd& b, double rel_tol, int max_iterations) {
  const Eigen::Index n = b.rows();
  const double shift = 0.5 * b.rowwise().sum().maxCoeff() + std::numeric_limits<double>::min();
  PerronIterate it;
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < max_iterations; ++i) {
    const Eigen::VectorXd y = b * x;
    const Eigen::ArrayXd ratio = y.array() / x.array();
    it.lower = ratio.minCoeff();
    it.upper = ratio.maxCoeff();
    if (it.upper - it.lower <= rel_tol * it.upper) {
      it.converged = true;
      break;
    }
    x = y + shift * x;
    x /= x.maxCoeff();
  }
  it.vector = x / x.maxCoeff();
  return it;
}

}  // namespace detail

inline constexpr int kPowerIterationCap = 100000;

// Spectral radius of a nonnegative matrix.
//
// The radius of a reducible matrix is the largest radius over its strongly
// connected diagonal blocks; each irreducible block is handled by shifted
// power iteration with a Collatz-Wielandt stopping rule, so no perturbation
// of the input is needed.
inline double spectral_radius(const Eigen::MatrixXd& a) {
  detail::require_nonnegative_square(a, "spectral_radius");
  double rho = 0;
  for (const auto& comp : detail::strong_components(a)) {
    const auto m = static_cast<Eigen::Index>(comp.size());
    if (m == 1) {
      rho = std::max(rho, a(comp[0], comp[0]));
      continue;
    }
    Eigen::MatrixXd block(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) block(i, j) = a(comp[static_cast<std::size_t>(i)], comp[static_cast<std::size_t>(j)]);
    const auto it = detail::perron_iteration(block, 1e-12, kPowerIterationCap);
    if (!it.converged) throw NumericError("spectral_radius: power iteration did not converge");
    rho = std::max(rho, 0.5 * (it.lower + it.upper));
  }
  return rho;
}

// Positive w with ||a||_inf^w < 1, taken as the Perron vector of a + eps J
// (max entry 1). Exists iff rho(a) < 1.
inline Eigen::VectorXd perron_weight(const Eigen::MatrixXd& a) {
  detail::require_nonnegative_square(a, "perron_weight");
  const Eigen::Index n = a.rows();
  if (n == 0) return Eigen::VectorXd();
  if (spectral_radius(a) >= 1.0) throw CertificateError("perron_weight: spectral radius is not below 1");
  constexpr double kEps = 1e-12;
  const Eigen::MatrixXd perturbed = a + Eigen::MatrixXd::Constant(n, n, kEps);
  const auto it = detail::perron_iteration(perturbed, 1e-12, kPowerIterationCap);
  if (!(it.vector.array() > 0).all() || !(weighted_matrix_norm(a, it.vector) < 1.0))
    throw CertificateError("perron_weight: iteration did not produce a certifying weight");
  return it.vector;
}

// (I - S_low)^{-1} S_upp with S_low / S_upp the strictly lower / upper parts.
inline Eigen::MatrixXd build_upsilon(const Eigen::MatrixXd& sbar) {
  detail::require_nonnegative_square(sbar, "build_upsilon");
  const Eigen::Index n = sbar.rows();
  const Eigen::MatrixXd lower = sbar.triangularView<Eigen::StrictlyLower>();
  const Eigen::MatrixXd upper = sbar.triangularView<Eigen::StrictlyUpper>();
  const Eigen::MatrixXd unit_lower = Eigen::MatrixXd::Identity(n, n) - lower;
  return unit_lower.triangularView<Eigen::UnitLower>().solve(upper);
}

inline constexpr int kMaxKMatrixDimension = 8;

// Z-matrix (off-diagonal <= 0) whose principal minors are all positive.
inline bool is_K_matrix(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw ParameterError("is_K_matrix: matrix must be square");
  const Eigen::Index n = a.rows();
  if (n > kMaxKMatrixDimension) throw UnsupportedError("is_K_matrix: dimension above 8 is not supported");
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && a(i, j) > 0) return false;
  for (unsigned subset = 1; subset < (1u << n); ++subset) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i)
      if (subset & (1u << i)) idx.push_back(i);
    const auto m = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd minor(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) minor(i, j) = a(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    if (!(minor.fullPivLu().determinant() > 0)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Condition report
// ---------------------------------------------------------------------------

enum class Condition { C1 = 0, C2, C3, C4, C5, C6 };
inline constexpr std::array<Condition, 6> kAllConditions{Condition::C1, Condition::C2, Condition::C3,
                                                        Condition::C4, Condition::C5, Condition::C6};
inline constexpr double kMarginalBand = 1e-9;

inline std::string to_string(Condition c) { return "C" + std::to_string(static_cast<int>(c) + 1); }

struct AutoWeight {};
struct OnesWeight {};
using WeightChoice = std::variant<AutoWeight, OnesWeight, Eigen::VectorXd>;

struct ConditionOptions {
  WeightChoice weight = AutoWeight{};
  bool prune_support = true;
};

struct ConditionReport {
  int q_count = 0;
  Eigen::MatrixXd smax;  // over the support sets
  Eigen::MatrixXd sbar;  // over all carriers
  CarrierSupport support;
  double rho_smax = 0;
  double rho_sbar = 0;
  double rho_upsilon = 0;
  Eigen::VectorXd weight_used;
  Eigen::VectorXd c2_margin;  // weighted row sums of S, per user
  Eigen::VectorXd c3_margin;  // weighted column sums of S, per user
  double max_pair_ratio = 0;  // largest off-diagonal entry of S bar
  double c4_threshold = 0;    // 1 / (Q - 1)
  double c5_threshold = 0;    // 1 / (2Q - 3)
  double c4_margin = 0;       // threshold minus max_pair_ratio; > 0 iff C4 holds
  double c5_margin = 0;
  std::array<bool, 6> flags{};
  std::array<bool, 6> marginal{};

  bool holds(Condition c) const { return flags[static_cast<std::size_t>(c)]; }
  bool is_marginal(Condition c) const { return marginal[static_cast<std::size_t>(c)]; }
  bool any_marginal() const { return std::any_of(marginal.begin(), marginal.end(), [](bool b) { return b; }); }
};

inline ConditionReport check_conditions(const InterferenceChannel& ch, const ConditionOptions& opts = {}) {
  ch.validate();
  ConditionReport rep;
  const int q_count = ch.q_count;
  rep.q_count = q_count;
  rep.support = opts.prune_support ? carrier_support_sets(normalize(ch))
                                   : CarrierSupport::full(q_count, ch.n_carriers);
  rep.smax = build_interference_matrix(ch, rep.support);
  rep.sbar = build_interference_matrix(ch);

  if (std::holds_alternative<Eigen::VectorXd>(opts.weight)) {
    rep.weight_used = std::get<Eigen::VectorXd>(opts.weight);
    if (rep.weight_used.size() != q_count) throw ParameterError("check_conditions: weight has wrong size");
    detail::require_positive(rep.weight_used, "check_conditions");
  } else {
    rep.weight_used = Eigen::VectorXd::Ones(q_count);
  }

  if (q_count == 1) {
    rep.c2_margin = rep.c3_margin = Eigen::VectorXd::Zero(1);
    rep.c4_threshold = rep.c5_threshold = std::numeric_limits<double>::infinity();
    rep.c4_margin = rep.c5_margin = std::numeric_limits<double>::infinity();
    rep.flags.fill(true);
    return rep;
  }

  auto radius_or_inf = [](const Eigen::MatrixXd& m) {
    return m.allFinite() ? spectral_radius(m) : std::numeric_limits<double>::infinity();
  };
  rep.rho_smax = radius_or_inf(rep.smax);
  rep.rho_sbar = radius_or_inf(rep.sbar);
  rep.rho_upsilon = rep.sbar.allFinite() ? spectral_radius(build_upsilon(rep.sbar))
                                         : std::numeric_limits<double>::infinity();

  if (std::holds_alternative<AutoWeight>(opts.weight) && rep.rho_smax < 1.0) {
    try {
      rep.weight_used = perron_weight(rep.smax);
    } catch (const CertificateError&) {
      rep.weight_used = Eigen::VectorXd::Ones(q_count);
    }
  }

  const Eigen::VectorXd& w = rep.weight_used;
  rep.c2_margin.resize(q_count);
  rep.c3_margin.resize(q_count);
  for (int q = 0; q < q_count; ++q) {
    rep.c2_margin(q) = (rep.smax.row(q) * w).value() / w(q);
    rep.c3_margin(q) = (rep.smax.col(q).transpose() * w).value() / w(q);
  }

  rep.max_pair_ratio = 0;
  for (int q = 0; q < q_count; ++q)
    for (int r = 0; r < q_count; ++r)
      if (q != r) rep.max_pair_ratio = std::max(rep.max_pair_ratio, rep.sbar(q, r));
  rep.c4_threshold = 1.0 / (q_count - 1);
  rep.c5_threshold = 1.0 / (2 * q_count - 3);
  rep.c4_margin = rep.c4_threshold - rep.max_pair_ratio;
  rep.c5_margin = rep.c5_threshold - rep.max_pair_ratio;

  const double c2 = rep.c2_margin.maxCoeff();
  const double c3 = rep.c3_margin.maxCoeff();
  const std::array<std::pair<double, double>, 6> tests{{{rep.rho_smax, 1.0},
                                                        {c2, 1.0},
                                                        {c3, 1.0},
                                                        {rep.max_pair_ratio, rep.c4_threshold},
                                                        {rep.max_pair_ratio, rep.c5_threshold},
                                                        {rep.rho_upsilon, 1.0}}};
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const auto [value, threshold] = tests[i];
    rep.flags[i] = value < threshold;
    rep.marginal[i] = std::abs(value - threshold) <= kMarginalBand;
  }
  return rep;
}

namespace detail {
inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
inline nlohmann::json vector_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(finite_or_null(v(i)));
  return out;
}
}  // namespace detail

inline nlohmann::json to_json(const ConditionReport& rep) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["q_count"] = rep.q_count;
  j["rho_smax"] = detail::finite_or_null(rep.rho_smax);
  j["rho_sbar"] = detail::finite_or_null(rep.rho_sbar);
  j["rho_upsilon"] = detail::finite_or_null(rep.rho_upsilon);
  j["weight_used"] = detail::vector_json(rep.weight_used);
  j["c2_margin"] = detail::vector_json(rep.c2_margin);
  j["c3_margin"] = detail::vector_json(rep.c3_margin);
  j["max_pair_ratio"] = detail::finite_or_null(rep.max_pair_ratio);
  j["c4_threshold"] = detail::finite_or_null(rep.c4_threshold);
  j["c5_threshold"] = detail::finite_or_null(rep.c5_threshold);
  j["c4_margin"] = detail::finite_or_null(rep.c4_margin);
  j["c5_margin"] = detail::finite_or_null(rep.c5_margin);
  nlohmann::json flags, marginal;
  for (auto c : kAllConditions) {
    flags[to_string(c)] = rep.holds(c);
    marginal[to_string(c)] = rep.is_marginal(c);
  }
  j["flags"] = flags;
  j["marginal"] = marginal;
  nlohmann::json support = nlohmann::json::array();
  for (const auto& row : rep.support.member) {
    nlohmann::json ks = nlohmann::json::array();
    for (std::size_t k = 0; k < row.size(); ++k)
      if (row[k]) ks.push_back(k);
    support.push_back(std::move(ks));
  }
  j["support"] = std::move(support);
  return j;
}

}  // namespace iwf
