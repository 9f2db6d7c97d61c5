#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "envyaudit/audit.hpp"
#include "envyaudit/envs.hpp"
#include "envyaudit/rng.hpp"

using namespace envyaudit;
using namespace envyaudit::audit;

namespace {

envs::Matrix matrix_from(std::size_t rows, std::size_t cols, std::vector<double> data) {
  envs::Matrix m(rows, cols);
  m.data = std::move(data);
  return m;
}

envs::RecommenderSystem swapped_pair_system() {
  // Each user is served the other's favourite item: both are envious.
  envs::PreferenceMatrix prefs(matrix_from(2, 2, {1.0, 0.0, 0.0, 1.0}));
  envs::PolicyMatrix pols(matrix_from(2, 2, {0.0, 1.0, 1.0, 0.0}));
  return {std::move(prefs), std::move(pols)};
}

envs::RecommenderSystem own_optimum_system() {
  envs::PreferenceMatrix prefs(matrix_from(3, 3,
                                           {0.9, 0.1, 0.1,
                                            0.1, 0.9, 0.1,
                                            0.1, 0.1, 0.9}));
  envs::PolicyMatrix pols(matrix_from(3, 3,
                                      {1.0, 0.0, 0.0,
                                       0.0, 1.0, 0.0,
                                       0.0, 0.0, 1.0}));
  return {std::move(prefs), std::move(pols)};
}

// Users 0 and 1 share a favourite; only user 0 is served a bad item.
envs::RecommenderSystem one_dominated_system() {
  envs::PreferenceMatrix prefs(matrix_from(4, 4,
                                           {0.9, 0.1, 0.1, 0.1,
                                            0.9, 0.1, 0.1, 0.1,
                                            0.1, 0.1, 0.9, 0.1,
                                            0.1, 0.1, 0.1, 0.9}));
  envs::PolicyMatrix pols(matrix_from(4, 4,
                                      {0.0, 1.0, 0.0, 0.0,
                                       1.0, 0.0, 0.0, 0.0,
                                       0.0, 0.0, 1.0, 0.0,
                                       0.0, 0.0, 0.0, 1.0}));
  return {std::move(prefs), std::move(pols)};
}

envs::RecommenderSystem thirty_user_system() {
  Rng rng(611);
  envs::PreferenceMatrix prefs = envs::synthetic_lowrank(30, 8, 3, rng);
  envs::PolicyMatrix pols = envs::softmax_policies(prefs.values, 5.0);
  return {std::move(prefs), std::move(pols)};
}

}  // namespace

TEST_SUITE("audit") {

TEST_CASE("sample size ceilings") {
  AuditParams p;
  p.delta = 0.05;
  p.lambda = 0.1;
  p.gamma = 0.1;
  const SampleSizes s = sample_sizes(p);
  CHECK_EQ(s.target_users, 41);
  CHECK_EQ(s.arms, 75);

  p.lambda = 1.0;
  const SampleSizes t = sample_sizes(p);
  CHECK_EQ(t.target_users, 5);
  CHECK_EQ(t.arms, 55);

  p.gamma = 1.0;
  CHECK_EQ(sample_sizes(p).arms, 1);

  p.gamma = 0.1;
  p.lambda = 1e-13;
  CHECK_THROWS_AS(sample_sizes(p), std::domain_error);
  p.lambda = 1.0;
  p.gamma = 1e-13;
  CHECK_THROWS_AS(sample_sizes(p), std::domain_error);
}

TEST_CASE("parameter validation") {
  AuditParams p;
  CHECK_NOTHROW(validate(p));
  p.gamma = 0.0;
  CHECK_THROWS_AS(validate(p), std::domain_error);
  p = AuditParams{};
  p.lambda = 1.1;
  CHECK_THROWS_AS(validate(p), std::domain_error);
  p = AuditParams{};
  p.delta = 1.0;
  CHECK_THROWS_AS(validate(p), std::domain_error);
  p = AuditParams{};
  p.max_steps = 0;
  CHECK_THROWS_AS(validate(p), std::domain_error);
}

TEST_CASE("verdict names") {
  CHECK_EQ(std::string(to_string(SystemVerdict::EnvyFree)), "EnvyFree");
  CHECK_EQ(std::string(to_string(SystemVerdict::NotEnvyFree)), "NotEnvyFree");
  CHECK_EQ(std::string(to_string(SystemVerdict::Inconclusive)), "Inconclusive");
}

TEST_CASE("swapped optima are flagged with an envious pair") {
  const envs::RecommenderSystem system = swapped_pair_system();
  AuditParams params;
  const AuditResult result = run_audit(system, params, 99);

  CHECK_EQ(result.verdict, SystemVerdict::NotEnvyFree);
  REQUIRE(result.envious_pair.has_value());
  CHECK_EQ(result.envious_pair->second, 1 - result.envious_pair->first);
  CHECK_EQ(result.sizes.target_users, 41);

  // Early stop: the first target is already envious.
  REQUIRE_EQ(result.per_user.size(), 1u);
  CHECK_EQ(result.per_user[0].outcome.verdict, ocef::Verdict::Envy);
  CHECK_EQ(result.per_user[0].ocef_delta, 0.05 / (3.0 * 41.0));
  CHECK_EQ(result.per_user[0].arm_users.size(), 1u);
}

TEST_CASE("own-optimum policies are certified envy-free") {
  const envs::RecommenderSystem system = own_optimum_system();
  AuditParams params;
  params.alpha = 0.2;
  const AuditResult result = run_audit(system, params, 7);

  CHECK_EQ(result.verdict, SystemVerdict::EnvyFree);
  CHECK_FALSE(result.envious_pair.has_value());
  REQUIRE_EQ(result.per_user.size(), 3u);  // 41 targets capped at the population
  for (const UserAuditResult& r : result.per_user) {
    CHECK_EQ(r.outcome.verdict, ocef::Verdict::NoEnvy);
    CHECK_EQ(r.arm_users.size(), 2u);  // 75 arms capped at M-1
  }
}

TEST_CASE("step cap turns the verdict inconclusive") {
  const envs::RecommenderSystem system = own_optimum_system();
  AuditParams params;
  params.max_steps = 50;
  const AuditResult result = run_audit(system, params, 7);
  CHECK_EQ(result.verdict, SystemVerdict::Inconclusive);
  for (const UserAuditResult& r : result.per_user) {
    CHECK_EQ(r.outcome.verdict, ocef::Verdict::Inconclusive);
  }
}

TEST_CASE("subsampling is valid and capped") {
  const envs::RecommenderSystem system = thirty_user_system();
  AuditParams params;
  params.lambda = 0.5;  // 9 targets
  params.gamma = 0.5;   // 10 arms
  params.max_steps = 2000;
  const AuditResult result = run_audit(system, params, 2024);

  CHECK_EQ(result.sizes.target_users, 9);
  CHECK_EQ(result.sizes.arms, 10);
  REQUIRE_LE(result.per_user.size(), 9u);

  std::set<int> seen_targets;
  for (const UserAuditResult& r : result.per_user) {
    CHECK(seen_targets.insert(r.user).second);  // no target twice
    CHECK_GE(r.user, 0);
    CHECK_LT(r.user, 30);
    REQUIRE_EQ(r.arm_users.size(), 10u);
    std::set<int> arms;
    for (int a : r.arm_users) {
      CHECK_NE(a, r.user);
      CHECK_GE(a, 0);
      CHECK_LT(a, 30);
      CHECK(arms.insert(a).second);  // without replacement by default
    }
  }
}

TEST_CASE("with-replacement arm sampling never hits the target") {
  const envs::RecommenderSystem system = thirty_user_system();
  AuditParams params;
  params.lambda = 0.5;
  params.gamma = 0.5;
  params.max_steps = 500;
  params.arms_with_replacement = true;
  const AuditResult result = run_audit(system, params, 515);
  for (const UserAuditResult& r : result.per_user) {
    REQUIRE_EQ(r.arm_users.size(), 10u);
    for (int a : r.arm_users) {
      CHECK_NE(a, r.user);
      CHECK_GE(a, 0);
      CHECK_LT(a, 30);
    }
  }
}

TEST_CASE("audits are deterministic in the master seed") {
  const envs::RecommenderSystem system = thirty_user_system();
  AuditParams params;
  params.lambda = 0.5;
  params.gamma = 0.5;
  params.max_steps = 2000;
  const AuditResult a = run_audit(system, params, 42);
  const AuditResult b = run_audit(system, params, 42);
  CHECK_EQ(a.verdict, b.verdict);
  REQUIRE_EQ(a.per_user.size(), b.per_user.size());
  for (std::size_t i = 0; i < a.per_user.size(); ++i) {
    CHECK_EQ(a.per_user[i].user, b.per_user[i].user);
    CHECK(a.per_user[i].arm_users == b.per_user[i].arm_users);
    CHECK_EQ(a.per_user[i].outcome.duration, b.per_user[i].outcome.duration);
    CHECK_EQ(a.per_user[i].cost, b.per_user[i].cost);
  }

  const AuditResult c = run_audit(system, params, 43);
  bool differs = c.per_user.size() != a.per_user.size();
  for (std::size_t i = 0; !differs && i < a.per_user.size(); ++i) {
    differs = a.per_user[i].user != c.per_user[i].user ||
              a.per_user[i].arm_users != c.per_user[i].arm_users;
  }
  CHECK(differs);
}

TEST_CASE("run_audit requires two users") {
  envs::PreferenceMatrix prefs(matrix_from(1, 2, {0.5, 0.5}));
  envs::PolicyMatrix pols(matrix_from(1, 2, {0.5, 0.5}));
  const envs::RecommenderSystem lonely{std::move(prefs), std::move(pols)};
  CHECK_THROWS_AS(run_audit(lonely, AuditParams{}, 1), std::invalid_argument);
}

TEST_CASE("exact audit flags exactly the dominated user") {
  const envs::RecommenderSystem system = one_dominated_system();
  const AuditResult result = run_exact_audit(system, 0.05, 0.1, 0.05, 31);

  CHECK_EQ(result.verdict, SystemVerdict::NotEnvyFree);
  REQUIRE_EQ(result.per_user.size(), 4u);  // no early stop in exact mode
  CHECK_EQ(result.per_user[0].outcome.verdict, ocef::Verdict::Envy);
  for (std::size_t m = 1; m < 4; ++m) {
    CHECK_EQ(result.per_user[m].outcome.verdict, ocef::Verdict::NoEnvy);
  }
  REQUIRE(result.envious_pair.has_value());
  CHECK_EQ(result.envious_pair->first, 0);
  CHECK_EQ(result.envious_pair->second, 1);

  for (const UserAuditResult& r : result.per_user) {
    CHECK_EQ(r.ocef_delta, 0.05 / 4.0);
    CHECK_EQ(r.arm_users.size(), 3u);
  }
}

TEST_CASE("exact audit certifies homogeneous users") {
  envs::PreferenceMatrix prefs(matrix_from(3, 2, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5}));
  envs::PolicyMatrix pols(matrix_from(3, 2, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5}));
  const envs::RecommenderSystem system{std::move(prefs), std::move(pols)};
  const AuditResult result = run_exact_audit(system, 0.05, 1.0, 0.3, 8);
  CHECK_EQ(result.verdict, SystemVerdict::EnvyFree);
  REQUIRE_EQ(result.per_user.size(), 3u);
  for (const UserAuditResult& r : result.per_user) {
    CHECK_EQ(r.outcome.verdict, ocef::Verdict::NoEnvy);
  }
}

TEST_CASE("exact audit of a single user is vacuous") {
  envs::PreferenceMatrix prefs(matrix_from(1, 2, {0.5, 0.5}));
  envs::PolicyMatrix pols(matrix_from(1, 2, {0.5, 0.5}));
  const envs::RecommenderSystem lonely{std::move(prefs), std::move(pols)};
  const AuditResult result = run_exact_audit(lonely, 0.05, 0.05, 0.05, 5);
  CHECK_EQ(result.verdict, SystemVerdict::EnvyFree);
  CHECK(result.per_user.empty());
  CHECK_FALSE(result.envious_pair.has_value());
}

TEST_CASE("report files describe the runs") {
  const envs::RecommenderSystem system = one_dominated_system();
  const AuditResult result = run_exact_audit(system, 0.05, 0.1, 0.05, 31);

  const auto dir = std::filesystem::temp_directory_path() / "envyaudit_test_report";
  write_audit_report(result, dir.string());

  std::ifstream csv(dir / "report.csv");
  REQUIRE(csv.good());
  std::string line;
  std::getline(csv, line);
  CHECK_EQ(line, "target_user,verdict,duration,cost,witness_user");
  std::vector<std::string> rows;
  while (std::getline(csv, line)) rows.push_back(line);
  REQUIRE_EQ(rows.size(), 4u);
  CHECK_NE(rows[0].find("0,Envy,"), std::string::npos);
  CHECK_EQ(rows[0].rfind(",1"), rows[0].size() - 2);  // witness user in the last column
  CHECK_NE(rows[1].find("1,NoEnvy,"), std::string::npos);
  CHECK_EQ(rows[1].back(), ',');  // no witness

  std::ifstream verdict(dir / "verdict.txt");
  std::getline(verdict, line);
  CHECK_EQ(line, "NotEnvyFree");

  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
