#pragma once
/*
 * System-level certification: sample target users, sample opponent arms per
 * target, and run the per-user certification loop with a tightened
 * confidence.
 *
 * Sample sizes for the (epsilon, gamma, lambda) criterion:
 *
 *   Mt = ceil(log(3/delta) / lambda)                  target users
 *   K  = ceil(log(3 Mt/delta) / log(1/(1-gamma)))     arms per target
 *
 * gamma = 1 makes every arm a top-quantile arm, so K = 1. Targets are capped
 * at the population size M and arms at M-1 (without replacement); each inner
 * run receives confidence delta/(3 Mt) with the uncapped Mt. The system
 * verdict is NotEnvyFree on the first Envy (remaining targets are skipped),
 * EnvyFree when every run reports NoEnvy, and Inconclusive when any run hits
 * its step cap without an Envy being found.
 */
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "envyaudit/envs.hpp"
#include "envyaudit/ocef.hpp"

namespace envyaudit::audit {

struct AuditParams {
  double delta{0.05};
  double alpha{0.05};
  double epsilon{0.05};
  double gamma{0.1};   // top-quantile mass, in (0,1]
  double lambda{0.1};  // tolerated fraction of envious users, in (0,1]
  double omega{0.99};
  double sigma{0.5};
  std::int64_t max_steps{10'000'000};
  bool clip_intervals{true};
  bool arms_with_replacement{false};
  bool record_pull_logs{false};
};

// Throws std::domain_error on any out-of-range field.
void validate(const AuditParams& params);

enum class SystemVerdict { EnvyFree, NotEnvyFree, Inconclusive };
const char* to_string(SystemVerdict v);

struct SampleSizes {
  std::int64_t target_users{0};
  std::int64_t arms{0};
};

// The two ceilings above, before any capping to the population; independent
// of the user count. Throws std::domain_error when a size overflows 1e12
// (gamma or lambda too close to 0).
SampleSizes sample_sizes(const AuditParams& params);

struct UserAuditResult {
  int user{0};
  std::vector<int> arm_users;  // sampled opponents; arm k of the run is arm_users[k-1]
  double ocef_delta{0.0};      // confidence handed to this run
  ocef::OcefOutcome outcome;
  double cost{0.0};
  double min_budget{0.0};
  ocef::OcefState state;
};

struct AuditResult {
  SystemVerdict verdict{SystemVerdict::Inconclusive};
  std::optional<std::pair<int, int>> envious_pair;  // (target user, witness user)
  SampleSizes sizes;                                // requested sizes before capping
  std::vector<UserAuditResult> per_user;
};

// Probabilistic certification. Target users are drawn without replacement
// with a sub-seed of master_seed; each target's arm sampling and run consume
// an rng seeded from (master_seed, user id) only, so results do not depend
// on the order in which users are processed. Requires at least 2 users.
AuditResult run_audit(const envs::RecommenderSystem& system, const AuditParams& params,
                      std::uint64_t master_seed);

// Exact certification: every user against all M-1 others with confidence
// delta/M. No early stop; the verdict aggregates the full per-user vector.
// A single-user system is vacuously envy-free.
AuditResult run_exact_audit(const envs::RecommenderSystem& system, double delta, double alpha,
                            double epsilon, std::uint64_t master_seed);

// report.csv (target_user,verdict,duration,cost,witness_user) plus a
// one-line verdict.txt, written under dir (created if needed).
void write_audit_report(const AuditResult& result, const std::string& dir);

}  // namespace envyaudit::audit
