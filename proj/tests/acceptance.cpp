// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Every tolerance and sample size is pinned below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "iwf/harness.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace iwf;
using Eigen::VectorXd;

namespace {

// 1: waterfilling
constexpr int kWaterfillInstances = 1000;
constexpr int kWaterfillMaxCarriers = 8;
constexpr double kOracleTol = 1e-6;
constexpr double kKktTol = 1e-12;
constexpr double kWaterfillSeconds = 10;
// 2: feasibility
constexpr double kSumTol = 1e-10;
// 3: scheduler agreement
constexpr int kAgreementGames = 100;
constexpr double kAgreementRho = 0.9;
constexpr double kResidualTol = 1e-8;
constexpr double kNeDistanceTol = 1e-5;
constexpr double kAgreementSeconds = 120;
// 4: contraction inequality
constexpr int kContractionPairs = 1000;
constexpr double kContractionSlack = 1e-10;
// 5: geometric decay
constexpr int kDecayGames = 50;
// 6: condition implications
constexpr int kImplicationChannels = 2000;
constexpr double kRadiusBand = 1e-9;
constexpr double kImplicationSeconds = 60;
// 7: condition-probability sweep
constexpr double kSweepSeconds = 300;
constexpr double kInversionSigmas = 2;
constexpr int kMaxInversions = 1;
// 8: smoothing invariance
constexpr int kSmoothingGames = 20;
constexpr double kSmoothingTol = 1e-5;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& what) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

int threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// Box constraints exactly, budget within kSumTol.
struct FeasibilityTally {
  long profiles = 0;
  long violations = 0;

  void check(const VectorXd& p, const VectorXd& cap, double target) {
    ++profiles;
    bool ok = std::abs(p.sum() - target) <= kSumTol;
    for (Eigen::Index k = 0; k < p.size(); ++k) ok = ok && p(k) >= 0 && p(k) <= cap(k);
    if (!ok) ++violations;
  }
  void check(const GameInstance& g, const PowerProfile& p) {
    for (int q = 0; q < g.q_count(); ++q) check(p.row(q).transpose(), g.mask(q), g.n_carriers());
  }
} feasibility;

// Contractive random games with Q in [2, 4] and N in [2, 8].
std::vector<InterferenceChannel> contractive_games(int count, double rho_cap, std::uint64_t salt) {
  std::vector<InterferenceChannel> out;
  for (std::uint64_t i = 0; static_cast<int>(out.size()) < count; ++i) {
    const auto seed = derive_seed(salt, {i});
    const int q = 2 + static_cast<int>(seed % 3);
    const int n = 2 + static_cast<int>((seed >> 8) % 7);
    if (auto ch = test::random_contractive(q, n, rho_cap, seed)) out.push_back(std::move(*ch));
  }
  return out;
}

PowerProfile fixed_point(const GameInstance& g) {
  PowerProfile p = uniform_profile(g);
  for (int it = 0; it < 100000 && ne_residual(g, p) > 1e-14; ++it) p = best_response_map(g, p);
  return p;
}

// ---------------------------------------------------------------------------

void criterion1() {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> size(1, kWaterfillMaxCarriers);
  std::uniform_real_distribution<double> floor(0.05, 3.0);
  std::uniform_real_distribution<double> cap(0.2, 3.0);
  std::uniform_real_distribution<double> fill(0.1, 0.95);
  std::bernoulli_distribution unbounded(0.3);
  double max_dev = 0, max_kkt = 0, solver_seconds = 0;
  for (int i = 0; i < kWaterfillInstances; ++i) {
    const int n = size(rng);
    VectorXd insr(n), p_max(n);
    for (int k = 0; k < n; ++k) {
      insr(k) = floor(rng);
      p_max(k) = unbounded(rng) ? kUnbounded : cap(rng);
    }
    double finite_total = 0;
    bool any_unbounded = false;
    for (int k = 0; k < n; ++k) {
      if (is_unbounded(p_max(k)))
        any_unbounded = true;
      else
        finite_total += p_max(k);
    }
    const double target = any_unbounded ? 0.5 * n : fill(rng) * finite_total;

    const auto t0 = Clock::now();
    const auto sol = waterfill_solve(insr, p_max, target);
    solver_seconds += seconds_since(t0);
    feasibility.check(sol.power, p_max, target);

    for (int k = 0; k < n; ++k) {
      const double p = sol.power(k);
      double v;
      if (p <= 0)
        v = std::max(0.0, sol.level - insr(k));
      else if (p >= p_max(k))
        v = std::max(0.0, insr(k) + p_max(k) - sol.level);
      else
        v = std::abs(sol.level - insr(k) - p);
      max_kkt = std::max(max_kkt, v);
    }
    VectorXd finite_cap = p_max;
    for (int k = 0; k < n; ++k)
      if (is_unbounded(finite_cap(k))) finite_cap(k) = target;
    const VectorXd ref = oracle::projected_gradient_waterfill(insr, finite_cap, target);
    max_dev = std::max(max_dev, (sol.power - ref).lpNorm<Eigen::Infinity>());
  }
  report(1, max_dev <= kOracleTol && max_kkt <= kKktTol && solver_seconds < kWaterfillSeconds,
         fmt("waterfill vs projected-gradient oracle, max dev %.2e (<= 1e-6), max KKT residual %.2e (<= 1e-12), "
             "solver time %.3f s (< 10 s)",
             max_dev, max_kkt, solver_seconds));
}

// Runs the scheduler comparison on two random-network configurations that
// together cover 100 games with Q <= 4, N <= 8; the first one is small
// enough for the brute-force oracle.
std::vector<ExperimentConfig> agreement_configs() {
  std::vector<ExperimentConfig> out;
  for (auto [q, n, seed] : {std::tuple{3, 4, 7ULL}, std::tuple{4, 8, 8ULL}}) {
    ExperimentConfig c = default_config();
    c.network = NetworkKind::Random;
    c.q_count = q;
    c.n_carriers = n;
    c.taps = 2;
    c.random_network.cross_distance_min = 1.5;
    c.random_network.cross_distance_max = 4.0;
    c.trials_per_point = kAgreementGames / 2;
    c.master_seed = seed;
    c.max_spectral_radius = kAgreementRho;
    c.tol = kResidualTol;
    out.push_back(c);
  }
  return out;
}

std::vector<std::string> criterion3(int thread_count, bool print) {
  const auto t0 = Clock::now();
  std::vector<std::string> csvs;
  bool ok = true;
  double max_dist = 0, max_bf = 0;
  int bf_checked = 0, games = 0, bf_expected = 0;
  for (const auto& c : agreement_configs()) {
    const auto rep = scheduler_comparison(c, thread_count);
    csvs.push_back(scheduler_csv(rep, false));
    ok = ok && rep.all_converged();
    max_dist = std::max(max_dist, rep.max_ne_distance());
    for (const auto& t : rep.trials) {
      ++games;
      ok = ok && t.rho_smax < kAgreementRho;
      if (c.q_count <= 3 && c.n_carriers <= 4) {
        ++bf_expected;
        if (t.brute_force_distance) {
          ++bf_checked;
          max_bf = std::max(max_bf, *t.brute_force_distance);
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  ok = ok && games == kAgreementGames && max_dist <= kNeDistanceTol && max_bf <= kNeDistanceTol &&
       bf_checked == bf_expected && secs < kAgreementSeconds;
  if (print)
    report(3, ok,
           fmt("%g games x 8 schedulers converged to residual <= 1e-8; max pairwise NE distance %.2e, "
               "max brute-force distance %.2e (<= 1e-5); time %.1f s (< 120 s)",
               games, max_dist, max_bf, secs) +
               " [brute-force certified " + std::to_string(bf_checked) + "/" + std::to_string(bf_expected) + "]");
  return csvs;
}

// Feasibility of every profile the library emits: waterfill (criterion 1 tallies),
// best responses, brute-force equilibria and every logged iterate.
void criterion2() {
  const auto games = contractive_games(20, kAgreementRho, 2002);
  std::mt19937_64 rng(2002);
  for (std::size_t i = 0; i < games.size(); ++i) {
    const GameInstance g(games[i]);
    const int Q = g.q_count();
    for (int t = 0; t < 10; ++t) feasibility.check(g, best_response_map(g, test::random_feasible(g, rng)));
    const std::vector<Schedule> schedules{sequential_schedule(Q, 2000), simultaneous_schedule(Q, 2000),
                                          random_async_schedule(Q, 4000, 3, 5, 0.5, i)};
    for (const auto& s : schedules)
      for (double a : {0.0, 0.3}) {
        const auto log = run_iwfa(g, s, VectorXd::Constant(Q, a), test::random_feasible(g, rng), kResidualTol,
                                  VectorXd::Ones(Q));
        for (const auto& p : log.iterates) feasibility.check(g, p);
      }
    if (Q <= 3 && g.n_carriers() <= 4) {
      try {
        feasibility.check(g, brute_force_ne(g, 1e-12));
      } catch (const OracleError&) {
      }
    }
  }
  report(2, feasibility.violations == 0,
         fmt("%g profiles checked: box constraints exact, budget within 1e-10; %g violations",
             static_cast<double>(feasibility.profiles), static_cast<double>(feasibility.violations)));
}

void criterion4() {
  const auto games = contractive_games(kContractionPairs / 20, 0.95, 4004);
  std::mt19937_64 rng(4004);
  int violations = 0, pairs = 0;
  double worst = 0;
  for (const auto& ch : games) {
    const GameInstance g(ch);
    const auto support = carrier_support_sets(g.channel());
    const VectorXd w = perron_weight(build_interference_matrix(ch, support));
    const double beta = contraction_modulus(ch, support, w, VectorXd::Zero(g.q_count()));
    for (int t = 0; t < 20; ++t, ++pairs) {
      const PowerProfile p1 = test::random_feasible(g, rng, &support);
      const PowerProfile p2 = test::random_feasible(g, rng, &support);
      const double lhs = block_max_norm(best_response_map(g, p1) - best_response_map(g, p2), w);
      const double rhs = beta * block_max_norm(p1 - p2, w);
      if (lhs > rhs + kContractionSlack) ++violations;
      if (rhs > 0) worst = std::max(worst, lhs / rhs);
    }
  }
  report(4, violations == 0 && pairs == kContractionPairs,
         fmt("%g pairs on %g contractive games, Perron-weighted: %g violations of ||WF(p1)-WF(p2)|| <= beta||p1-p2|| "
             "(slack 1e-10), worst ratio to bound %.3f",
             pairs, static_cast<double>(games.size()), violations, worst));
}

void criterion5() {
  const auto games = contractive_games(kDecayGames, 0.95, 5005);
  std::mt19937_64 rng(5005);
  int passed = 0;
  long steps = 0;
  for (const auto& ch : games) {
    const GameInstance g(ch);
    const int Q = g.q_count();
    const auto support = carrier_support_sets(g.channel());
    const VectorXd w = perron_weight(build_interference_matrix(ch, support));
    const double beta = contraction_modulus(ch, support, w, VectorXd::Zero(Q));
    const PowerProfile p_star = fixed_point(g);
    const auto log = run_iwfa(g, simultaneous_schedule(Q, 5000), VectorXd::Zero(Q),
                              test::random_feasible(g, rng, &support), 1e-10, w);
    steps += log.iterations_used;
    if (log.converged && check_geometric_decay(log, p_star, beta, w)) ++passed;
  }
  report(5, passed == kDecayGames,
         fmt("%g/%g simultaneous trajectories decay by <= beta + 1e-6 per step toward the fixed point (%g steps)",
             passed, kDecayGames, static_cast<double>(steps)));
}

void criterion6() {
  const auto t0 = Clock::now();
  int implication_violations = 0, equivalence_violations = 0, compared = 0;
  int c1 = 0, c4 = 0, c6 = 0;
  for (int i = 0; i < kImplicationChannels; ++i) {
    const auto seed = derive_seed(6006, {static_cast<std::uint64_t>(i)});
    RandomChannelParams p;
    p.q_count = 2 + i % 6;
    p.n_carriers = 8;
    p.taps = 3;
    p.cross_distance_min = 0.8 + 0.2 * static_cast<double>(seed % 5);
    p.cross_distance_max = p.cross_distance_min + 4.0;
    p.seed = seed;
    const auto rep = check_conditions(random_channel(p), {OnesWeight{}, true});
    const bool f1 = rep.holds(Condition::C1), f4 = rep.holds(Condition::C4), f5 = rep.holds(Condition::C5),
               f6 = rep.holds(Condition::C6);
    c1 += f1;
    c4 += f4;
    c6 += f6;
    if ((f4 && !f1) || (f5 && !f4) || (f6 && !f1)) ++implication_violations;
    if (std::abs(rep.rho_sbar - 1) > kRadiusBand) {
      ++compared;
      if ((rep.rho_upsilon < 1) != (rep.rho_sbar < 1)) ++equivalence_violations;
    }
  }
  const double secs = seconds_since(t0);
  report(6, implication_violations == 0 && equivalence_violations == 0 && secs < kImplicationSeconds,
         fmt("2000 channels: %g implication violations, %g rho(Upsilon)<1 vs rho(Sbar)<1 mismatches over %g "
             "compared; time %.1f s (< 60 s)",
             implication_violations, equivalence_violations, compared, secs) +
             " [C1/C4/C6 held " + std::to_string(c1) + "/" + std::to_string(c4) + "/" + std::to_string(c6) + "]");
}

ExperimentConfig sweep_config() {
  ExperimentConfig c = default_config();  // Q=7, N=16, L=6, gamma=2.5, 7 dB, gap 1, 19 r values
  c.trials_per_point = 500;
  c.master_seed = 20080101;
  c.weight = WeightSpec::Ones;
  return c;
}

std::string criterion7(int thread_count, bool print) {
  const auto c = sweep_config();
  const auto t0 = Clock::now();
  const auto res = condition_probability_sweep(c, thread_count);
  const double secs = seconds_since(t0);
  if (!print) return sweep_csv(res);

  bool ordering = true;
  int exceptions = 0;
  for (const auto& pt : res.points) {
    exceptions += pt.implication_violations;
    ordering = ordering && pt.frequency(Condition::C1) >= pt.frequency(Condition::C4) &&
               pt.frequency(Condition::C1) >= pt.frequency(Condition::C6);
  }
  bool trend = true;
  int worst_inversions = 0;
  for (Condition cond : {Condition::C1, Condition::C4, Condition::C6}) {
    trend = trend && res.points.back().frequency(cond) >= res.points.front().frequency(cond);
    int inversions = 0;
    for (std::size_t i = 0; i + 1 < res.points.size(); ++i) {
      const double a = res.points[i].frequency(cond), b = res.points[i + 1].frequency(cond);
      const double se = std::sqrt(a * (1 - a) / res.points[i].trials + b * (1 - b) / res.points[i + 1].trials);
      if (b < a && a - b > kInversionSigmas * se) ++inversions;
    }
    worst_inversions = std::max(worst_inversions, inversions);
  }
  const auto& last = res.points.back();
  report(7, ordering && exceptions == 0 && trend && worst_inversions <= kMaxInversions && secs <= kSweepSeconds,
         fmt("19 r values x 500 trials: freq(C1) >= freq(C4), freq(C6) pointwise, %g per-trial exceptions; "
             "r=0.95 >= r=0.05 for C1/C4/C6; max 2-SE inversions per curve %g (<= 1); time %.1f s (<= 300 s)",
             exceptions, worst_inversions, secs) +
             fmt(" [at r=0.95: C1 %.3f, C4 %.3f, C6 %.3f]", last.frequency(Condition::C1),
                 last.frequency(Condition::C4), last.frequency(Condition::C6)));
  return sweep_csv(res);
}

void criterion8() {
  const auto games = contractive_games(kSmoothingGames, kAgreementRho, 8008);
  double worst = 0;
  bool converged = true;
  for (const auto& ch : games) {
    const GameInstance g(ch);
    const int Q = g.q_count();
    std::vector<PowerProfile> limits;
    for (double a : {0.0, 0.3, 0.7, 0.9}) {
      const auto log = run_iwfa(g, simultaneous_schedule(Q, 50000), VectorXd::Constant(Q, a), uniform_profile(g),
                                1e-10, VectorXd::Ones(Q));
      converged = converged && log.converged;
      limits.push_back(log.final_profile());
    }
    for (std::size_t i = 1; i < limits.size(); ++i)
      worst = std::max(worst, block_max_norm(limits[i] - limits[0], VectorXd::Ones(Q)));
  }
  report(8, converged && worst <= kSmoothingTol,
         fmt("%g contractive games, alpha in {0, 0.3, 0.7, 0.9}: max limit distance %.2e (<= 1e-5)",
             static_cast<double>(games.size()), worst));
}

void criterion9(const std::vector<std::string>& agreement_csv, const std::string& sweep) {
  const int other = threads() == 1 ? 3 : 1;
  const bool same3 = criterion3(other, false) == agreement_csv && criterion3(threads(), false) == agreement_csv;
  const bool same7 = criterion7(other, false) == sweep;
  report(9, same3 && same7,
         std::string("criteria 3 and 7 rerun with thread counts ") + std::to_string(threads()) + " and " +
             std::to_string(other) + ": scheduler CSV " + (same3 ? "identical" : "DIFFERS") + ", sweep CSV " +
             (same7 ? "identical" : "DIFFERS"));
}

}  // namespace

int main() {
  try {
    criterion1();
    criterion2();
    const auto agreement = criterion3(threads(), true);
    criterion4();
    criterion5();
    criterion6();
    const auto sweep = criterion7(threads(), true);
    criterion8();
    criterion9(agreement, sweep);
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
