#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "scarkit/tasks.hpp"

using namespace scarkit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("scarkit_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

nlohmann::json base(const std::string& task, int n = 3) {
  return {{"task", task}, {"family", "spin-chain-blockade"}, {"j", 1}, {"n_sites", n}};
}

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(SCARKIT_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, MinimalDefaults) {
  const RunConfig c = config_from_json(base("spectrum"));
  EXPECT_EQ(c.model.boundary, Boundary::periodic);
  EXPECT_DOUBLE_EQ(c.model.c, 200.0);
  EXPECT_EQ(c.n_traj, 500);
  EXPECT_DOUBLE_EQ(c.dt, 0.0);
  EXPECT_FALSE(c.seed);
}

TEST(Config, HalfSpinRejected) {
  auto j = base("basis");
  j["j"] = 0.5;
  EXPECT_THROW(config_from_json(j), ValidationError);
}

TEST(Config, UnknownTaskListsValidOnes) {
  try {
    config_from_json(base("fly"));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("basis, spectrum, evolve"), std::string::npos);
  }
}

TEST(Config, UnknownFieldNamed) {
  auto j = base("basis");
  j["t_ned"] = 3;
  try {
    config_from_json(j);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("t_ned"), std::string::npos);
  }
}

TEST(Config, ParseErrorHasLineAndColumn) {
  const fs::path p = scratch("bad.json");
  std::ofstream(p) << "{\n  \"task\": \"basis\",\n  \"j\": ,\n}\n";
  try {
    parse_config(p.string());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  fs::remove(p);
}

TEST(Config, LeakageDefaults) {
  const RunConfig c = config_from_json(base("leakage"));
  EXPECT_EQ(c.kind, LiouvillianKind::LindbladPrime);
  EXPECT_EQ(c.method, "trajectories");
  EXPECT_EQ(c.initial_states.size(), 1u);
  EXPECT_TRUE(c.stochastic());
}

TEST(RunTask, BasisReport) {
  auto j = base("basis");
  j["output"] = scratch("basis").string();
  std::ostringstream log;
  const auto meta = run_task(config_from_json(j), log);
  EXPECT_EQ(log.str(), "dim = 18\n");
  EXPECT_EQ(meta["result"]["dim"], 18);
  EXPECT_TRUE(fs::exists(fs::path(j["output"].get<std::string>()) / "basis.csv"));
  EXPECT_TRUE(meta.contains("spec_hash"));
  EXPECT_TRUE(meta.contains("wall_time_s"));
}

TEST(RunTask, RerunAndCacheGiveIdenticalCsv) {
  const fs::path cache = scratch("cache");
  auto j = base("spectrum", 5);
  j["cache_dir"] = cache.string();
  j["output"] = scratch("spec_a").string();
  std::ostringstream log;
  const auto m1 = run_task(config_from_json(j), log);
  EXPECT_EQ(m1["result"]["eigen_cache"], "stored");
  j["output"] = scratch("spec_b").string();
  const auto m2 = run_task(config_from_json(j), log);
  EXPECT_EQ(m2["result"]["eigen_cache"], "hit");
  j["output"] = scratch("spec_c").string();
  j["cache_dir"] = "";
  run_task(config_from_json(j), log);
  const std::string a = slurp(fs::temp_directory_path() / "scarkit_test_spec_a" / "spectrum.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(fs::temp_directory_path() / "scarkit_test_spec_b" / "spectrum.csv"));
  EXPECT_EQ(a, slurp(fs::temp_directory_path() / "scarkit_test_spec_c" / "spectrum.csv"));
}

TEST(RunTask, SeededTrajectoriesDeterministic) {
  auto j = base("evolve", 3);
  j["method"] = "trajectories";
  j["kind"] = "LindbladPrime";
  j["n_traj"] = 20;
  j["t_end"] = 1.0;
  j["seed"] = 5;
  j["cache_dir"] = "";
  std::ostringstream log;
  j["output"] = scratch("traj_a").string();
  run_task(config_from_json(j), log);
  j["output"] = scratch("traj_b").string();
  run_task(config_from_json(j), log);
  EXPECT_EQ(slurp(fs::temp_directory_path() / "scarkit_test_traj_a" / "evolve.csv"),
            slurp(fs::temp_directory_path() / "scarkit_test_traj_b" / "evolve.csv"));
}

TEST(RunTask, MissingSeedIsAnError) {
  auto j = base("leakage");
  j["output"] = scratch("noseed").string();
  EXPECT_THROW(run_task(config_from_json(j)), ValidationError);
}

TEST(RunTask, FailureRemovesPartialOutput) {
  auto j = base("spectrum", 5);
  const fs::path out = scratch("fail");
  j["output"] = out.string();
  j["diag_cap"] = 10;
  j["cache_dir"] = "";
  try {
    run_task(config_from_json(j));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::capacity);
    EXPECT_NE(std::string(e.what()).find("task spectrum"), std::string::npos);
  }
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, ExitCodes) {
  const fs::path cfg = scratch("cli.json");
  std::ofstream(cfg) << base("basis").dump();
  const std::string out = scratch("cli_out").string();
  EXPECT_EQ(run_cli("basis --config " + cfg.string() + " --output " + out), 0);
  EXPECT_EQ(run_cli("spectrum --config " + cfg.string() + " --output " + out), 2);  // task mismatch
  EXPECT_EQ(run_cli("basis --config /nonexistent.json"), 2);
  EXPECT_EQ(run_cli("unknown"), 2);
  auto j = base("spectrum", 5);
  j["diag_cap"] = 10;
  j["cache_dir"] = "";
  std::ofstream(cfg) << j.dump();
  EXPECT_EQ(run_cli("spectrum --config " + cfg.string() + " --output " + out), 3);
  fs::remove(cfg);
}
