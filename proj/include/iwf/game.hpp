#pragma once

// The rate-maximization game: feasibility, the multiuser waterfilling
// best-response map, equilibrium residuals, and a brute-force equilibrium
// oracle for small instances.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iwf/channel.hpp"
#include "iwf/error.hpp"
#include "iwf/norms.hpp"
#include "iwf/waterfill.hpp"

namespace iwf {

inline constexpr double kSumTolerance = 1e-10;

class GameInstance {
 public:
  explicit GameInstance(NormalizedChannel channel) : channel_(std::move(channel)) {
    for (int q = 0; q < channel_.q_count; ++q) {
      double total = 0;
      for (int k = 0; k < channel_.n_carriers; ++k) total += channel_.mask_norm(q, k);
      if (!(total > channel_.n_carriers))
        throw InfeasibleError("player " + std::to_string(q) + ": normalized masks must sum to more than N");
    }
  }

  explicit GameInstance(const InterferenceChannel& channel) : GameInstance(normalize(channel)) {}

  const NormalizedChannel& channel() const noexcept { return channel_; }
  int q_count() const noexcept { return channel_.q_count; }
  int n_carriers() const noexcept { return channel_.n_carriers; }
  Eigen::VectorXd mask(int q) const { return channel_.mask_norm.row(q).transpose(); }

 private:
  NormalizedChannel channel_;
};

// Carrier support sets D_q: carriers user q may use in some best response.
struct CarrierSupport {
  std::vector<std::vector<bool>> member;  // [q][k]

  static CarrierSupport full(int q_count, int n_carriers) {
    return {std::vector<std::vector<bool>>(static_cast<std::size_t>(q_count),
                                           std::vector<bool>(static_cast<std::size_t>(n_carriers), true))};
  }

  bool contains(int q, int k) const { return member[static_cast<std::size_t>(q)][static_cast<std::size_t>(k)]; }
  int q_count() const { return static_cast<int>(member.size()); }
  int size(int q) const {
    const auto& row = member[static_cast<std::size_t>(q)];
    return static_cast<int>(std::count(row.begin(), row.end(), true));
  }
  bool operator==(const CarrierSupport&) const = default;
};

// True iff p lies in the product of strategy sets: 0 <= p_q(k) <= p_q^max(k)
// and |(1/N) sum_k p_q(k) - 1| <= 1e-10 for every q.
inline bool is_feasible(const GameInstance& game, const PowerProfile& p) {
  const auto& ch = game.channel();
  if (p.rows() != ch.q_count || p.cols() != ch.n_carriers) return false;
  for (int q = 0; q < ch.q_count; ++q) {
    double sum = 0;
    for (int k = 0; k < ch.n_carriers; ++k) {
      const double v = p(q, k);
      if (!(v >= 0.0) || !(v <= ch.mask_norm(q, k))) return false;
      sum += v;
    }
    if (!(std::abs(sum / ch.n_carriers - 1.0) <= kSumTolerance)) return false;
  }
  return true;
}

// True iff every row of p vanishes outside its support set.
inline bool is_supported_on(const CarrierSupport& support, const PowerProfile& p) {
  for (Eigen::Index q = 0; q < p.rows(); ++q)
    for (Eigen::Index k = 0; k < p.cols(); ++k)
      if (!support.contains(static_cast<int>(q), static_cast<int>(k)) && p(q, k) != 0.0) return false;
  return true;
}

// WF_q(p_{-q}); only rows r != q of `p` are read.
inline Eigen::VectorXd best_response(const GameInstance& game, int q, const PowerProfile& p) {
  return waterfill(insr_profile(game.channel(), q, p), game.mask(q), game.n_carriers());
}

// WF(p): every row computed against the same input profile.
inline PowerProfile best_response_map(const GameInstance& game, const PowerProfile& p) {
  if (!is_feasible(game, p)) throw InfeasibleError("best_response_map: input profile is infeasible");
  PowerProfile out(game.q_count(), game.n_carriers());
  for (int q = 0; q < game.q_count(); ++q) out.row(q) = best_response(game, q, p).transpose();
  return out;
}

// ||p - WF(p)|| in the w-weighted block-maximum norm.
inline double ne_residual(const GameInstance& game, const PowerProfile& p, const Eigen::VectorXd& w) {
  detail::require_positive(w, "ne_residual");
  return block_max_norm(p - best_response_map(game, p), w);
}

inline double ne_residual(const GameInstance& game, const PowerProfile& p) {
  return ne_residual(game, p, Eigen::VectorXd::Ones(game.q_count()));
}

// Uniform allocation clipped into the masks: the best response to a flat floor.
inline PowerProfile uniform_profile(const GameInstance& game) {
  PowerProfile p(game.q_count(), game.n_carriers());
  const Eigen::VectorXd flat = Eigen::VectorXd::Zero(game.n_carriers());
  for (int q = 0; q < game.q_count(); ++q) p.row(q) = waterfill(flat, game.mask(q), game.n_carriers()).transpose();
  return p;
}

// ---------------------------------------------------------------------------
// Brute-force equilibrium oracle (small instances only)
// ---------------------------------------------------------------------------

namespace detail {

// Best rate user q can reach on the grid {0, step, 2 step, ...} per carrier
// with total exactly N, against fixed opponents. Exact over the grid
// (dynamic program over carriers), so equivalent to exhaustive enumeration.
inline double best_grid_rate(const GameInstance& game, int q, const PowerProfile& p, double step) {
  const auto& ch = game.channel();
  const int n = ch.n_carriers;
  const int units = static_cast<int>(std::lround(n / step));
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> best(static_cast<std::size_t>(units + 1), kNegInf);
  best[0] = 0.0;
  for (int k = 0; k < n; ++k) {
    double interference = ch.noise_psd(q, k);
    for (int r = 0; r < ch.q_count; ++r)
      if (r != q) interference += ch.gain(q, r, k) * p(r, k);
    const double cap = ch.mask_norm(q, k);
    const int max_units =
        is_unbounded(cap) ? units : std::min(units, static_cast<int>(std::floor(cap / step + 1e-9)));
    std::vector<double> next(static_cast<std::size_t>(units + 1), kNegInf);
    for (int used = 0; used <= units; ++used) {
      if (best[static_cast<std::size_t>(used)] == kNegInf) continue;
      for (int u = 0; u <= max_units && used + u <= units; ++u) {
        const double v = best[static_cast<std::size_t>(used)] + std::log1p(ch.gain(q, q, k) * u * step / interference);
        auto& slot = next[static_cast<std::size_t>(used + u)];
        slot = std::max(slot, v);
      }
    }
    best = std::move(next);
  }
  return best[static_cast<std::size_t>(units)] / n;
}

}  // namespace detail

// Computes the equilibrium of a small game by Jacobi best-response iteration
// from several deterministic starts, then certifies it: all starts must
// converge to the same profile, and no user may gain more than 1e-6 in rate
// by a unilateral deviation on a 1e-2 power grid.
//
// Throws OracleError when the iteration fails to converge, the starts
// disagree (multiple equilibria), or a profitable deviation is found.
inline PowerProfile brute_force_ne(const GameInstance& game, double tol) {
  if (game.q_count() > 3 || game.n_carriers() > 4)
    throw ParameterError("brute_force_ne: supports Q <= 3 and N <= 4 only");
  if (!(tol > 0)) throw ParameterError("brute_force_ne: tol must be positive");
  const int q_count = game.q_count();
  const int n = game.n_carriers();

  // Identical starting rows for every user: symmetric starts expose
  // ping-pong dynamics in games with several equilibria.
  std::array<Eigen::VectorXd, 3> floors{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd::Zero(n)};
  for (int k = 0; k < n; ++k) {
    floors[0](k) = k;
    floors[1](k) = n - 1 - k;
  }

  constexpr int kMaxIterations = 20000;
  std::vector<PowerProfile> limits;
  for (const auto& floor : floors) {
    PowerProfile p(q_count, n);
    for (int q = 0; q < q_count; ++q) p.row(q) = waterfill(floor, game.mask(q), n).transpose();
    bool converged = false;
    for (int it = 0; it < kMaxIterations; ++it) {
      const PowerProfile next = best_response_map(game, p);
      const double residual = block_max_norm(next - p, Eigen::VectorXd::Ones(q_count));
      p = next;
      if (residual <= tol) {
        converged = true;
        break;
      }
    }
    if (!converged) throw OracleError("brute_force_ne: best-response iteration did not converge");
    limits.push_back(p);
  }
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(q_count);
  for (std::size_t i = 1; i < limits.size(); ++i)
    if (block_max_norm(limits[i] - limits[0], ones) > std::max(1e-6, 100 * tol))
      throw OracleError("brute_force_ne: starts reached different equilibria");

  const PowerProfile& p_star = limits[0];
  const Eigen::VectorXd rates = rate(game.channel(), p_star);
  for (int q = 0; q < q_count; ++q) {
    const double grid = detail::best_grid_rate(game, q, p_star, 1e-2);
    if (grid - rates(q) > 1e-6)
      throw OracleError("brute_force_ne: user " + std::to_string(q) + " has a profitable deviation");
  }
  return p_star;
}

}  // namespace iwf
