#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "iwf/harness.hpp"

using namespace iwf;
namespace fs = std::filesystem;

namespace {

nlohmann::json minimal_json() { return {{"schema_version", 1}}; }

// A sweep small enough for unit tests: 3 r values, 20 trials.
ExperimentConfig small_sweep() {
  ExperimentConfig c = default_config();
  c.r_grid = {0.2, 0.6, 0.9};
  c.trials_per_point = 20;
  c.master_seed = 42;
  return c;
}

ExperimentConfig small_random_schedulers() {
  ExperimentConfig c = default_config();
  c.network = NetworkKind::Random;
  c.q_count = 3;
  c.n_carriers = 4;
  c.taps = 2;
  c.random_network.cross_distance_min = 1.5;
  c.random_network.cross_distance_max = 4.0;
  c.trials_per_point = 6;
  c.master_seed = 3;
  c.max_spectral_radius = 0.9;
  return c;
}

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("iwf_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_error(const nlohmann::json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

// ----- configuration ------------------------------------------------------------

TEST(Config, DefaultsMatchTheHexSweepSetup) {
  const auto c = config_from_json(minimal_json());
  EXPECT_EQ(c.q_count, 7);
  EXPECT_EQ(c.n_carriers, 16);
  EXPECT_EQ(c.taps, 6);
  EXPECT_DOUBLE_EQ(c.gamma, 2.5);
  EXPECT_DOUBLE_EQ(c.snr_db, 7.0);
  EXPECT_EQ(c.r_grid.size(), 19u);
  EXPECT_NEAR(c.r_grid.back(), 0.95, 1e-12);
  EXPECT_EQ(c.trials_per_point, 500);
  EXPECT_EQ(c.weight, WeightSpec::Ones);
  EXPECT_EQ(expand_schedulers(c.schedulers).size(), 8u);
}

TEST(Config, UnknownFieldIsNamed) {
  auto j = minimal_json();
  j["qcount"] = 7;
  const auto msg = config_error(j);
  EXPECT_NE(msg.find("qcount"), std::string::npos) << msg;

  j = minimal_json();
  j["output"] = {{"csv", "x.csv"}, {"plot", "x.dat"}};
  EXPECT_NE(config_error(j).find("/output/plot"), std::string::npos);
}

TEST(Config, RGridIsHalfOpen) {
  auto j = minimal_json();
  j["r_grid"] = {0.0, 0.5, 1.0};
  const auto msg = config_error(j);
  EXPECT_NE(msg.find("/r_grid/2"), std::string::npos) << msg;
  j["r_grid"] = {0.0, 0.5};
  EXPECT_NO_THROW(config_from_json(j));
}

TEST(Config, RejectsMalformedDocuments) {
  EXPECT_NE(config_error(nlohmann::json::object()).find("schema_version"), std::string::npos);
  auto j = minimal_json();
  j["schema_version"] = 2;
  EXPECT_FALSE(config_error(j).empty());
  j = minimal_json();
  j["trials_per_point"] = 0;
  EXPECT_NE(config_error(j).find("trials_per_point"), std::string::npos);
  j = minimal_json();
  j["trials_per_point"] = "many";
  EXPECT_NE(config_error(j).find("/trials_per_point: expected an integer"), std::string::npos);
  j = minimal_json();
  j["q_count"] = 5;  // hex network is fixed at 7 cells
  EXPECT_NE(config_error(j).find("/q_count"), std::string::npos);
  j = minimal_json();
  j["schedulers"] = {{{"type", "async"}, {"max_gap", 0}}};
  EXPECT_NE(config_error(j).find("/schedulers/0/max_gap"), std::string::npos);
  j = minimal_json();
  j["schedulers"] = {{{"type", "sequential"}}, {{"type", "sequential"}}};
  EXPECT_NE(config_error(j).find("duplicate"), std::string::npos);
  j = minimal_json();
  j["conditions"] = {"C7"};
  EXPECT_NE(config_error(j).find("/conditions/0"), std::string::npos);
}

TEST(Config, LoadFromFile) {
  const auto dir = temp_dir("load");
  std::ofstream(dir / "good.json") << R"({"schema_version": 1, "trials_per_point": 3, "weight": "perron"})";
  std::ofstream(dir / "bad.json") << R"({"schema_version": 1,)";
  const auto c = load_config((dir / "good.json").string());
  EXPECT_EQ(c.trials_per_point, 3);
  EXPECT_EQ(c.weight, WeightSpec::Perron);
  EXPECT_THROW(load_config((dir / "bad.json").string()), ConfigError);
  EXPECT_THROW(load_config((dir / "missing.json").string()), ConfigError);
}

TEST(Config, JsonRoundTripPreservesHash) {
  auto c = small_random_schedulers();
  c.mask_factor = 3.0;
  c.cross_links = false;
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  auto moved = c;
  moved.output.csv = "elsewhere.csv";
  EXPECT_EQ(config_hash(moved), config_hash(c));
  moved.master_seed += 1;
  EXPECT_NE(config_hash(moved), config_hash(c));
}

TEST(Config, FnvKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

// ----- sweep ------------------------------------------------------------------

TEST(Sweep, NoCrossLinksMeansEveryConditionHolds) {
  auto c = small_sweep();
  c.trials_per_point = 1;
  c.cross_links = false;
  const auto res = condition_probability_sweep(c);
  for (const auto& pt : res.points)
    for (Condition cond : kAllConditions) EXPECT_EQ(pt.frequency(cond), 1.0);
}

TEST(Sweep, CountsRespectImplications) {
  const auto res = condition_probability_sweep(small_sweep());
  ASSERT_EQ(res.points.size(), 3u);
  for (const auto& pt : res.points) {
    EXPECT_EQ(pt.trials, 20);
    EXPECT_EQ(pt.implication_violations, 0);
    const auto n = [&](Condition cond) { return pt.counts[static_cast<std::size_t>(cond)]; };
    EXPECT_LE(n(Condition::C4), n(Condition::C1));
    EXPECT_LE(n(Condition::C6), n(Condition::C1));
    EXPECT_LE(n(Condition::C5), n(Condition::C4));
    for (Condition cond : kAllConditions) EXPECT_LE(n(cond), pt.trials);
  }
}

TEST(Sweep, CsvHeaderAndUnevaluatedColumns) {
  auto c = small_sweep();
  c.conditions = {Condition::C1, Condition::C6};
  c.trials_per_point = 2;
  const auto csv = sweep_csv(condition_probability_sweep(c));
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "r,trials,freq_C1,freq_C2,freq_C3,freq_C4,freq_C5,freq_C6,marginal_count");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 6), "0.2,2,");
  EXPECT_NE(line.find(",,,,"), std::string::npos);  // C2..C5 left empty
}

TEST(Sweep, DeterministicAcrossThreadCounts) {
  const auto c = small_sweep();
  const auto one = sweep_csv(condition_probability_sweep(c, 1));
  EXPECT_EQ(sweep_csv(condition_probability_sweep(c, 1)), one);
  EXPECT_EQ(sweep_csv(condition_probability_sweep(c, 3)), one);
}

TEST(Sweep, TrialSeedsAreIndividuallyReproducible) {
  const auto c = small_sweep();
  const auto ch = make_channel(c, 0.6, trial_seed(c.master_seed, 1, 7));
  const auto again = make_channel(c, 0.6, trial_seed(c.master_seed, 1, 7));
  EXPECT_EQ(ch.raw_gain, again.raw_gain);
  EXPECT_NE(trial_seed(1, 0, 1), trial_seed(1, 1, 0));
}

TEST(Sweep, EmitWritesCsvMetadataAndPlotData) {
  const auto dir = temp_dir("emit");
  auto c = small_sweep();
  c.trials_per_point = 2;
  c.output.csv = (dir / "sweep.csv").string();
  c.output.plot_data = (dir / "sweep.dat").string();
  const auto res = condition_probability_sweep(c);
  emit_results(res, c);
  EXPECT_EQ(slurp(dir / "sweep.csv"), sweep_csv(res));
  const auto meta = read_metadata(metadata_path(c));
  EXPECT_EQ(meta.at("config_hash"), config_hash(c));
  EXPECT_EQ(meta.at("master_seed"), 42u);
  EXPECT_EQ(config_hash(config_from_json(meta.at("config"))), config_hash(c));
  const auto dat = slurp(dir / "sweep.dat");
  EXPECT_EQ(dat.rfind("# r trials freq_C1", 0), 0u);
}

// ----- scheduler comparison -----------------------------------------------------

TEST(Schedulers, ExpansionAndWindows) {
  const auto specs = default_schedulers();
  const auto runs = expand_schedulers(specs);
  ASSERT_EQ(runs.size(), 8u);
  EXPECT_EQ(runs[0].name, "sequential");
  EXPECT_EQ(runs[3].name, "async1");
  EXPECT_EQ(runs[7].name, "async5");
  EXPECT_EQ(schedule_window(*runs[0].spec, 7), 7);
  EXPECT_EQ(schedule_window(*runs[1].spec, 7), 1);
  EXPECT_EQ(schedule_window(*runs[3].spec, 7), 5);
}

TEST(Schedulers, ContractiveTrialsAgree) {
  const auto rep = scheduler_comparison(small_random_schedulers());
  ASSERT_EQ(rep.trials.size(), 6u);
  EXPECT_TRUE(rep.all_converged());
  EXPECT_LE(rep.max_ne_distance(), 1e-5);
  for (const auto& t : rep.trials) {
    EXPECT_LT(t.rho_smax, 0.9);
    if (t.brute_force_distance) {
      EXPECT_LE(*t.brute_force_distance, 1e-5);
    }
  }
  const auto csv = scheduler_csv(rep, false);
  EXPECT_EQ(csv.rfind("r,trial,resamples,rho_smax,sequential_iterations,sequential_windows", 0), 0u);
}

// Smoothing shrinks the distance to the fixed point only by alpha per update,
// so the smoothed scheduler is left out.
TEST(Schedulers, ZeroInterferenceConvergesInOneWindow) {
  auto c = small_random_schedulers();
  c.cross_links = false;
  c.trials_per_point = 2;
  const auto rep = scheduler_comparison(c);
  for (const auto& t : rep.trials)
    for (std::size_t s = 0; s < rep.names.size(); ++s) {
      EXPECT_TRUE(t.converged[s]);
      if (rep.names[s] != "smoothed") {
        EXPECT_EQ(t.windows[s], 1) << rep.names[s];
      }
    }
}

TEST(Schedulers, ResampleCapIsAConfigError) {
  auto c = small_random_schedulers();
  c.random_network.cross_distance_min = 0.2;
  c.random_network.cross_distance_max = 0.3;
  c.max_spectral_radius = 0.01;
  c.trials_per_point = 1;
  EXPECT_THROW(scheduler_comparison(c), ConfigError);
}

TEST(Schedulers, DeterministicAcrossThreadCounts) {
  const auto c = small_random_schedulers();
  const auto one = scheduler_csv(scheduler_comparison(c, 1), false);
  EXPECT_EQ(scheduler_csv(scheduler_comparison(c, 4), false), one);
}

// ----- single instance ----------------------------------------------------------

TEST(Single, WritesTrajectories) {
  const auto dir = temp_dir("single");
  auto c = small_random_schedulers();
  c.schedulers = {{"seq", ScheduleType::Sequential, 0.0, 0, 0, 1.0, 1}};
  c.output.csv = (dir / "single.csv").string();
  c.output.trajectories = true;
  const auto res = single_experiment(c);
  ASSERT_EQ(res.logs.size(), 1u);
  EXPECT_TRUE(res.logs[0].converged);
  emit_results(res, c);
  EXPECT_EQ(slurp(dir / "single.csv").rfind("scheduler,converged,iterations,windows,final_residual,rate_1", 0), 0u);
  EXPECT_EQ(slurp(dir / "single.csv.seq.trajectory.csv").rfind("n,residual,active_set,rate_1,rate_2,rate_3", 0), 0u);
}

TEST(ParallelFor, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(10, 3, [](int i) {
                 if (i == 7) throw NumericError("boom");
               }),
               NumericError);
  std::vector<int> hit(50, 0);
  parallel_for(50, 4, [&](int i) { hit[static_cast<std::size_t>(i)] += 1; });
  EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 50);
}
