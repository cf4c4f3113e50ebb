#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "doptlab/environments.hpp"
#include "doptlab/estimators.hpp"
#include "doptlab/io.hpp"

using namespace doptlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / fs::path("doptlab_io_test")) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("mdp round-trips bit exactly") {
  TempDir dir;
  const RandomInstance instance = random_mdp(RandomMdpDims{4, 3, 3}, 501);
  const fs::path file = dir.path / "mdp.txt";
  save_mdp(instance.mdp, file);
  const FiniteMdp loaded = load_mdp(file);
  CHECK(loaded == instance.mdp);

  // Saving the loaded copy reproduces the identical bytes.
  const fs::path file2 = dir.path / "mdp2.txt";
  save_mdp(loaded, file2);
  std::ifstream a(file), b(file2);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
}

TEST_CASE("policy round-trips bit exactly") {
  TempDir dir;
  const TimedPolicy policy = random_policy(3, 4, 2, RngSpec{503, 0});
  const fs::path file = dir.path / "policy.txt";
  save_policy(policy, file);
  CHECK(load_policy(file) == policy);
}

TEST_CASE("loader re-validates simplex invariants") {
  TempDir dir;
  const fs::path file = dir.path / "bad_policy.txt";
  {
    std::ofstream out(file);
    out << "dopt-policy 1\nhorizon 1\nnum_states 1\nnum_actions 2\nprobs\n0.6 0.6\n";
  }
  CHECK_THROWS_AS(load_policy(file), ValidationError);

  const fs::path mdp_file = dir.path / "bad_mdp.txt";
  {
    std::ofstream out(mdp_file);
    out << "dopt-mdp 1\nnum_states 1\nnum_actions 1\nhorizon 1\n"
        << "transition\n0.5\nreward\n1.0\ninitial_dist\n1.0\n";
  }
  CHECK_THROWS_AS(load_mdp(mdp_file), ValidationError);
}

TEST_CASE("truncated documents and trailing junk are rejected") {
  TempDir dir;
  const fs::path file = dir.path / "truncated.txt";
  {
    std::ofstream out(file);
    out << "dopt-policy 1\nhorizon 1\nnum_states 1\nnum_actions 2\nprobs\n0.5\n";
  }
  CHECK_THROWS_AS(load_policy(file), ValidationError);

  const fs::path file2 = dir.path / "trailing.txt";
  {
    std::ofstream out(file2);
    out << "dopt-policy 1\nhorizon 1\nnum_states 1\nnum_actions 2\nprobs\n0.5 0.5\nextra\n";
  }
  CHECK_THROWS_AS(load_policy(file2), ValidationError);
}

TEST_CASE("value tables and baselines round-trip") {
  TempDir dir;
  const RandomInstance instance = random_mdp(RandomMdpDims{3, 2, 4}, 505);
  const QvTables qv = compute_q_v(instance.mdp, instance.target);
  const TsaTable nu = compute_nu(instance.mdp, instance.target, qv.v);
  const TsaTable u = compute_u_bstar_recursive(instance.mdp, instance.target);

  const ValueTables tables{qv.q, qv.v, nu, u};
  const fs::path tables_file = dir.path / "tables.txt";
  save_value_tables(tables, tables_file);
  CHECK(load_value_tables(tables_file) == tables);

  const Baseline baseline = derive_b_star(qv);
  const fs::path baseline_file = dir.path / "baseline.txt";
  save_baseline(baseline, baseline_file);
  CHECK(load_baseline(baseline_file) == baseline);
}

TEST_CASE("datasets round-trip through JSON lines") {
  TempDir dir;
  const RandomInstance instance = random_mdp(RandomMdpDims{3, 2, 3}, 507);
  const TimedPolicy uniform = TimedPolicy::uniform(3, 3, 2);
  const TupleDataset dataset = generate_offline_log(instance.mdp, {uniform}, 50, 508);
  const fs::path file = dir.path / "log.jsonl";
  save_dataset_jsonl(dataset, file);
  const ModelDims dims{3, 3, 2};
  CHECK(load_dataset_jsonl(file, &dims) == dataset);
}

TEST_CASE("malformed dataset lines carry their line number") {
  TempDir dir;
  const fs::path file = dir.path / "bad.jsonl";
  {
    std::ofstream out(file);
    out << R"({"t":0,"s":0,"a":0,"r":1.0,"s_next":0})" << "\n";
    out << "not json\n";
  }
  try {
    load_dataset_jsonl(file);
    FAIL("expected rejection");
  } catch (const ValidationError& error) {
    CHECK(std::string(error.what()).find(":2:") != std::string::npos);
  }

  const fs::path range_file = dir.path / "range.jsonl";
  {
    std::ofstream out(range_file);
    out << R"({"t":0,"s":0,"a":0,"r":1.0,"s_next":0})" << "\n";
    out << R"({"t":9,"s":0,"a":0,"r":1.0,"s_next":0})" << "\n";
  }
  const ModelDims dims{2, 1, 1};
  try {
    load_dataset_jsonl(range_file, &dims);
    FAIL("expected rejection");
  } catch (const ValidationError& error) {
    CHECK(std::string(error.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("eval run CSV has the documented columns") {
  EvalRun run;
  run.add(2.0);
  run.add(4.0);
  std::ostringstream out;
  write_eval_run_csv(run, 3.0, out);
  const std::string expected =
      "episode_index,estimate,running_mean,running_abs_error_vs_truth\n"
      "1,2,2,1\n"
      "2,4,3,0\n";
  CHECK(out.str() == expected);
}

TEST_CASE("format_double round-trips doubles exactly") {
  CounterRng gen(RngSpec{509, 0});
  for (int i = 0; i < 1000; ++i) {
    const double value = (gen.next_double() - 0.5) * std::pow(10.0, i % 40 - 20);
    CHECK(std::stod(format_double(value)) == value);
  }
}

TEST_CASE("experiment config parsing") {
  SUBCASE("defaults plus overrides") {
    const ExperimentConfig config = parse_experiment_config(
        "env gridworld\ngrid_n 4\nepisodes 100\nruns_per_policy 3\n"
        "num_policies 2\nmaster_seed 9\nestimators on_policy_mc,dopt\n");
    CHECK(config.grid_n == 4);
    CHECK(config.episodes == 100);
    CHECK(config.runs_per_policy == 3);
    CHECK(config.num_policies == 2);
    CHECK(config.master_seed == 9);
    REQUIRE(config.estimators.size() == 2);
    CHECK(config.estimators[1] == "dopt");
  }

  SUBCASE("comments and blank lines are ignored") {
    const ExperimentConfig config =
        parse_experiment_config("# a comment\n\nepisodes 5 # trailing\n");
    CHECK(config.episodes == 5);
  }

  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(parse_experiment_config("episodez 5\n"), ValidationError);
  }

  SUBCASE("invalid values are rejected") {
    CHECK_THROWS_AS(parse_experiment_config("episodes zero\n"), ValidationError);
    CHECK_THROWS_AS(parse_experiment_config("episodes 0\n"), ValidationError);
    CHECK_THROWS_AS(parse_experiment_config("env mars\n"), ValidationError);
  }
}
