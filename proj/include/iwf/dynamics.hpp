#pragma once

// Iterative waterfilling dynamics under arbitrary update schedules:
// sequential (Gauss-Seidel), simultaneous (Jacobi), smoothed, and totally
// asynchronous updates with bounded delays.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iwf/conditions.hpp"
#include "iwf/error.hpp"
#include "iwf/game.hpp"
#include "iwf/norms.hpp"
#include "iwf/rng.hpp"
#include "iwf/waterfill.hpp"

namespace iwf {

enum class ScheduleKind { Sequential, Simultaneous, RandomAsync, Custom };

// Update times T_q and interference snapshot indices tau_r^q(n) over a
// finite horizon. Delays are bounded by max_delay (B) and every user updates
// at least once in every max_gap (W) consecutive iterations.
class Schedule {
 public:
  using ActiveFn = std::function<bool(int n, int q)>;
  using DelayFn = std::function<int(int q, int r, int n)>;

  // Explicit schedule; `delay` returns tau_r^q(n). Not validated here, see
  // validate_schedule().
  static Schedule custom(int q_count, int horizon, const ActiveFn& active, const DelayFn& delay, int max_delay,
                         int max_gap, std::string id = "custom") {
    Schedule s(q_count, horizon, ScheduleKind::Custom, max_delay, max_gap, std::move(id));
    s.lag_.assign(static_cast<std::size_t>(horizon) * q_count * q_count, 0);
    for (int n = 0; n < horizon; ++n)
      for (int q = 0; q < q_count; ++q) {
        s.active_[s.slot(n, q)] = active(n, q) ? 1 : 0;
        for (int r = 0; r < q_count; ++r) {
          const int lag = n - delay(q, r, n);
          s.lag_[s.slot(n, q) * static_cast<std::size_t>(q_count) + static_cast<std::size_t>(r)] = lag;
        }
      }
    return s;
  }

  int q_count() const noexcept { return q_count_; }
  int horizon() const noexcept { return horizon_; }
  ScheduleKind kind() const noexcept { return kind_; }
  int max_delay() const noexcept { return max_delay_; }
  int max_gap() const noexcept { return max_gap_; }
  const std::string& id() const noexcept { return id_; }

  bool active(int n, int q) const { return active_[slot(n, q)] != 0; }

  // tau_r^q(n)
  int delay(int q, int r, int n) const {
    if (lag_.empty()) return n;
    return n - lag_[slot(n, q) * static_cast<std::size_t>(q_count_) + static_cast<std::size_t>(r)];
  }

  std::vector<int> active_set(int n) const {
    std::vector<int> out;
    for (int q = 0; q < q_count_; ++q)
      if (active(n, q)) out.push_back(q);
    return out;
  }

  bool operator==(const Schedule& o) const {
    if (q_count_ != o.q_count_ || horizon_ != o.horizon_ || active_ != o.active_) return false;
    for (int n = 0; n < horizon_; ++n)
      for (int q = 0; q < q_count_; ++q)
        for (int r = 0; r < q_count_; ++r)
          if (delay(q, r, n) != o.delay(q, r, n)) return false;
    return true;
  }

 private:
  friend Schedule sequential_schedule(int, int);
  friend Schedule simultaneous_schedule(int, int);
  friend Schedule random_async_schedule(int, int, int, int, double, std::uint64_t);

  Schedule(int q_count, int horizon, ScheduleKind kind, int max_delay, int max_gap, std::string id)
      : q_count_(q_count),
        horizon_(horizon),
        kind_(kind),
        max_delay_(max_delay),
        max_gap_(max_gap),
        id_(std::move(id)),
        active_(static_cast<std::size_t>(horizon) * q_count, 0) {
    if (q_count < 1) throw ParameterError("schedule: q_count must be >= 1");
    if (horizon < 0) throw ParameterError("schedule: horizon must be >= 0");
  }

  std::size_t slot(int n, int q) const { return static_cast<std::size_t>(n) * q_count_ + static_cast<std::size_t>(q); }

  int q_count_;
  int horizon_;
  ScheduleKind kind_;
  int max_delay_;
  int max_gap_;
  std::string id_;
  std::vector<std::uint8_t> active_;
  std::vector<int> lag_;  // n - tau, indexed (n, q, r); empty means tau = n
};

// User q (0-based) updates at n with n mod Q == q, i.e. (n + 1) mod Q equals
// the 1-based index of the user. No delays.
inline Schedule sequential_schedule(int q_count, int horizon) {
  Schedule s(q_count, horizon, ScheduleKind::Sequential, 0, q_count, "sequential");
  for (int n = 0; n < horizon; ++n) s.active_[s.slot(n, n % q_count)] = 1;
  return s;
}

inline Schedule simultaneous_schedule(int q_count, int horizon) {
  Schedule s(q_count, horizon, ScheduleKind::Simultaneous, 0, 1, "simultaneous");
  std::fill(s.active_.begin(), s.active_.end(), std::uint8_t{1});
  return s;
}

struct ScheduleCheck {
  bool causal = true;         // A1: 0 <= tau <= n
  bool bounded_delay = true;  // A2: n - tau <= B
  bool bounded_gap = true;    // A3: an update in every W consecutive iterations
  std::string message;
  bool ok() const { return causal && bounded_delay && bounded_gap; }
};

// Exhaustive scan of A1-A3 (finite-horizon form) over the whole schedule.
inline ScheduleCheck validate_schedule(const Schedule& s) {
  ScheduleCheck c;
  const int Q = s.q_count();
  const int B = s.max_delay();
  const int W = s.max_gap();
  for (int n = 0; n < s.horizon(); ++n)
    for (int q = 0; q < Q; ++q)
      for (int r = 0; r < Q; ++r) {
        const int tau = s.delay(q, r, n);
        if (tau < 0 || tau > n) {
          c.causal = false;
          c.message = "A1 violated at n=" + std::to_string(n);
        }
        if (n - tau > B) {
          c.bounded_delay = false;
          c.message = "A2 violated at n=" + std::to_string(n);
        }
      }
  if (W < 1) {
    c.bounded_gap = false;
    c.message = "A3: window must be >= 1";
    return c;
  }
  for (int q = 0; q < Q; ++q) {
    int last = -1;
    for (int n = 0; n < s.horizon(); ++n) {
      if (s.active(n, q)) last = n;
      if (n - last >= W) {
        c.bounded_gap = false;
        c.message = "A3 violated for user " + std::to_string(q) + " at n=" + std::to_string(n);
        break;
      }
    }
  }
  return c;
}

// Each user updates with probability `activation_prob`, forced whenever its
// gap would reach W. Snapshot indices are uniform in [max(0, n - B), n] and
// nondecreasing per (q, r).
inline Schedule random_async_schedule(int q_count, int horizon, int max_delay, int max_gap,
                                      double activation_prob, std::uint64_t seed) {
  if (max_delay < 0) throw ParameterError("random_async_schedule: B must be >= 0");
  if (max_gap < 1) throw ParameterError("random_async_schedule: W must be >= 1");
  if (!(activation_prob > 0 && activation_prob <= 1))
    throw ParameterError("random_async_schedule: activation probability must lie in (0, 1]");
  std::ostringstream id;
  id << "async(B=" << max_delay << ",W=" << max_gap << ",p=" << activation_prob << ",seed=" << seed << ")";
  Schedule s(q_count, horizon, ScheduleKind::RandomAsync, max_delay, max_gap, id.str());
  s.lag_.assign(static_cast<std::size_t>(horizon) * q_count * q_count, 0);
  Rng rng(derive_seed(seed, {0x5343484544ULL}));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<int> last_update(static_cast<std::size_t>(q_count), -1);
  std::vector<int> last_tau(static_cast<std::size_t>(q_count) * q_count, 0);
  for (int n = 0; n < horizon; ++n) {
    for (int q = 0; q < q_count; ++q) {
      const bool forced = n - last_update[static_cast<std::size_t>(q)] >= max_gap;
      const bool on = coin(rng) < activation_prob || forced;
      if (!on) continue;
      s.active_[s.slot(n, q)] = 1;
      last_update[static_cast<std::size_t>(q)] = n;
      for (int r = 0; r < q_count; ++r) {
        if (r == q) continue;
        auto& prev = last_tau[static_cast<std::size_t>(q) * q_count + static_cast<std::size_t>(r)];
        const int lo = std::max({0, n - max_delay, prev});
        std::uniform_int_distribution<int> pick(lo, n);
        const int tau = pick(rng);
        prev = tau;
        s.lag_[s.slot(n, q) * static_cast<std::size_t>(q_count) + static_cast<std::size_t>(r)] = n - tau;
      }
    }
  }
  const auto check = validate_schedule(s);
  if (!check.ok()) throw std::logic_error("random_async_schedule produced an invalid schedule: " + check.message);
  return s;
}

// Iterations spanned by one full activation window.
inline int activation_window(const Schedule& s) { return std::max(1, s.max_gap()); }

inline constexpr double kDefaultTolerance = 1e-8;
inline constexpr int kDefaultHorizonWindows = 10000;

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct TrajectoryLog {
  std::vector<PowerProfile> iterates;    // iterates[n] = p^(n); iterates[0] = p0
  std::vector<double> residuals;         // exact ||p^(n) - WF(p^(n))|| in the chosen norm
  std::vector<std::vector<int>> active;  // active[n]: users that produced p^(n) (empty for n = 0)
  std::vector<Eigen::VectorXd> rates;    // rates[n]: R_q(p^(n))
  bool converged = false;
  int iterations_used = 0;
  int iterations_to_tol = -1;  // first n of the final run of residuals <= tol; -1 if not converged
  std::string schedule_id;
  ScheduleKind schedule_kind = ScheduleKind::Custom;
  int window = 1;
  Eigen::VectorXd weight;

  const PowerProfile& final_profile() const { return iterates.back(); }
  double final_residual() const { return residuals.back(); }
  // Full activation windows needed to reach tol (iterations run if not
  // converged), rounded up; at least one.
  int windows_used() const {
    const int n = converged ? iterations_to_tol : iterations_used;
    return std::max(1, (n + window - 1) / window);
  }
};

// Smoothed asynchronous IWFA. Active users set
//   p_q <- alpha_q p_q + (1 - alpha_q) WF_q(p_{-q} at snapshot times tau^q(n)),
// inactive users keep p_q. Stops once the exact residual stays <= tol for one
// full activation window; running out of horizon yields converged = false.
inline TrajectoryLog run_iwfa(const GameInstance& game, const Schedule& schedule, const Eigen::VectorXd& alpha,
                              const PowerProfile& p0, double tol, const Eigen::VectorXd& w) {
  const int Q = game.q_count();
  const int N = game.n_carriers();
  if (schedule.q_count() != Q) throw ParameterError("run_iwfa: schedule has wrong number of users");
  if (alpha.size() != Q) throw ParameterError("run_iwfa: alpha has wrong size");
  for (int q = 0; q < Q; ++q)
    if (!(alpha(q) >= 0 && alpha(q) < 1)) throw ParameterError("run_iwfa: alpha must lie in [0, 1)");
  if (!(tol > 0)) throw ParameterError("run_iwfa: tol must be positive");
  if (w.size() != Q) throw ParameterError("run_iwfa: weight has wrong size");
  detail::require_positive(w, "run_iwfa");
  if (!is_feasible(game, p0)) throw InfeasibleError("run_iwfa: initial profile is infeasible");

  TrajectoryLog log;
  log.schedule_id = schedule.id();
  log.schedule_kind = schedule.kind();
  log.window = activation_window(schedule);
  log.weight = w;

  const int depth = schedule.max_delay() + 1;
  std::vector<PowerProfile> history(static_cast<std::size_t>(depth), p0);
  PowerProfile p = p0;

  log.iterates.push_back(p);
  log.residuals.push_back(ne_residual(game, p, w));
  log.active.emplace_back();
  log.rates.push_back(rate(game.channel(), p));

  int streak = 0;                                // updates in a row ending at residual <= tol
  int run_start = log.residuals[0] <= tol ? 0 : -1;  // first iterate of that run
  PowerProfile view(Q, N);
  for (int n = 0; n < schedule.horizon(); ++n) {
    PowerProfile next = p;
    std::vector<int> updated;
    for (int q = 0; q < Q; ++q) {
      if (!schedule.active(n, q)) continue;
      updated.push_back(q);
      for (int r = 0; r < Q; ++r) {
        if (r == q) continue;
        const int tau = schedule.delay(q, r, n);
        view.row(r) = history[static_cast<std::size_t>(tau % depth)].row(r);
      }
      const Eigen::VectorXd wf = best_response(game, q, view);
      if (alpha(q) == 0) {
        next.row(q) = wf.transpose();
      } else {
        for (int k = 0; k < N; ++k)
          next(q, k) = project_interval(alpha(q) * p(q, k) + (1 - alpha(q)) * wf(k), 0.0,
                                        game.channel().mask_norm(q, k));
      }
    }
    p = std::move(next);
    history[static_cast<std::size_t>((n + 1) % depth)] = p;

    const double residual = ne_residual(game, p, w);
    log.iterates.push_back(p);
    log.residuals.push_back(residual);
    log.active.push_back(std::move(updated));
    log.rates.push_back(rate(game.channel(), p));
    log.iterations_used = n + 1;

    if (residual <= tol) {
      ++streak;
      if (run_start < 0) run_start = n + 1;
    } else {
      streak = 0;
      run_start = -1;
    }
    if (streak >= log.window) {
      log.converged = true;
      log.iterations_to_tol = run_start;
      break;
    }
  }
  return log;
}

inline TrajectoryLog run_iwfa(const GameInstance& game, const Schedule& schedule, const PowerProfile& p0,
                              double tol = kDefaultTolerance) {
  return run_iwfa(game, schedule, Eigen::VectorXd::Zero(game.q_count()), p0, tol,
                  Eigen::VectorXd::Ones(game.q_count()));
}

// Columns: n, residual, active_set (1-based users joined by ';'), rate_1..rate_Q.
inline void write_trajectory_table(std::ostream& out, const TrajectoryLog& log) {
  const auto q_count = log.rates.empty() ? 0 : log.rates.front().size();
  out << "n,residual,active_set";
  for (Eigen::Index q = 0; q < q_count; ++q) out << ",rate_" << (q + 1);
  out << '\n';
  char buf[64];
  for (std::size_t n = 0; n < log.residuals.size(); ++n) {
    std::snprintf(buf, sizeof buf, "%.17g", log.residuals[n]);
    out << n << ',' << buf << ',';
    for (std::size_t i = 0; i < log.active[n].size(); ++i) out << (i ? ";" : "") << (log.active[n][i] + 1);
    for (Eigen::Index q = 0; q < q_count; ++q) {
      std::snprintf(buf, sizeof buf, "%.17g", log.rates[n](q));
      out << ',' << buf;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Contraction
// ---------------------------------------------------------------------------

// beta = ||D_alpha + (I - D_alpha) S^max||_inf^w
inline double contraction_modulus(const InterferenceChannel& ch, const CarrierSupport& support,
                                  const Eigen::VectorXd& w, const Eigen::VectorXd& alpha) {
  return weighted_matrix_norm(smax_alpha(build_interference_matrix(ch, support), alpha), w);
}

// True iff ||p^(n+1) - p*|| <= (beta + 1e-6) ||p^(n) - p*|| for every
// consecutive pair of recorded iterates (w-weighted block-maximum norm).
inline bool check_geometric_decay(const TrajectoryLog& log, const PowerProfile& p_star, double beta,
                                  const Eigen::VectorXd& w) {
  if (log.schedule_kind != ScheduleKind::Simultaneous)
    throw ContractError("check_geometric_decay: the per-step bound holds for simultaneous updates only");
  if (!(beta < 1)) throw ParameterError("check_geometric_decay: beta must be below 1");
  for (std::size_t n = 0; n + 1 < log.iterates.size(); ++n) {
    const double before = block_max_norm(log.iterates[n] - p_star, w);
    const double after = block_max_norm(log.iterates[n + 1] - p_star, w);
    if (after > (beta + 1e-6) * before) return false;
  }
  return true;
}

}  // namespace iwf
