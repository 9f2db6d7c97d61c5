#pragma once
/*
 * Certification loop for one target user against K alternative arms, with a
 * conservative exploration constraint.
 *
 * Step t draws a candidate l_t from the active set S_{t-1} and pulls the
 * baseline (arm 0) instead of the candidate when either
 *
 *   beta_0(t-1) > min_{k in S_{t-1}} beta_k(t-1)     (baseline too uncertain)
 *
 * or the budget check fails, i.e. xi_t < 0 with
 *
 *   xi_t = sum_{s in A_{t-1}} r_s - Phi(t) + lo_{l_t}(t-1)
 *          + (N_0(t-1) - (1-alpha) t) * hi_0(t-1)
 *
 * where A is the set of exploration steps and Phi the conservative budget
 * bound. After the pull, arms whose upper bound no longer exceeds the
 * baseline's lower bound plus epsilon are eliminated:
 *
 *   S_t = { k in S_{t-1} : hi_k(t) > lo_0(t) + epsilon }
 *
 * The run returns Envy as soon as some k in S_t has lo_k(t) > hi_0(t),
 * NoEnvy when S_t is empty, and Inconclusive when max_steps is exhausted.
 * Interval endpoints are clipped to [0,1] by default (rewards are bounded);
 * the beta comparison always uses the unclipped radii.
 */
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "envyaudit/bounds.hpp"
#include "envyaudit/envs.hpp"
#include "envyaudit/rng.hpp"

namespace envyaudit::ocef {

enum class Verdict { Envy, NoEnvy, Inconclusive };
const char* to_string(Verdict v);

enum class CandidateRule { Uniform, WidestRadius };

struct OcefConfig {
  bounds::BoundParams bound_params;
  double alpha{0.05};    // conservative parameter, in (0,1]
  double epsilon{0.05};  // envy margin, in (0,1]
  std::int64_t max_steps{10'000'000};
  bool clip_intervals{true};
  bool record_pull_log{false};
  CandidateRule candidate_rule{CandidateRule::Uniform};
};

// Throws std::domain_error on any out-of-range field.
void validate(const OcefConfig& config);

struct PullRecord {
  std::int32_t arm{0};
  std::int32_t active_count{0};  // |S_t| after the step
  double reward{0.0};
  double xi{0.0};
};

struct OcefState {
  std::int64_t t{0};
  std::vector<bounds::ArmStats> stats;  // index 0 = baseline
  std::vector<double> radius;           // unclipped anytime radii
  std::vector<double> lower;            // cached interval endpoints
  std::vector<double> upper;
  std::vector<int> active_set;          // ascending arm ids, subset of 1..K
  double min_active_radius{0.0};
  double exploration_reward_sum{0.0};
  std::int64_t exploration_count{0};
  double radius_pull_sum{0.0};  // sum_{k>=1} radius_k * pulls_k, kept incrementally
  bounds::RadiusFactors factors;
  std::vector<PullRecord> pull_log;
};

OcefState make_state(const OcefConfig& config);

struct OcefOutcome {
  Verdict verdict{Verdict::Inconclusive};
  std::int64_t duration{0};
  std::optional<int> witness_arm;
};

struct StepResult {
  int pulled_arm{0};
  double reward{0.0};
  double xi_value{0.0};
  std::optional<OcefOutcome> outcome;
};

int select_candidate(const OcefState& state, CandidateRule rule, Rng& rng);
inline int select_candidate(const OcefState& state, Rng& rng) {
  return select_candidate(state, CandidateRule::Uniform, rng);
}

double xi(const OcefState& state, int candidate, const OcefConfig& config);

StepResult step(OcefState& state, envs::BanditEnv& env, const OcefConfig& config, Rng& rng);

// Iterates step until a verdict fires or max_steps is reached (Inconclusive).
OcefOutcome run(OcefState& state, envs::BanditEnv& env, const OcefConfig& config, Rng& rng);
std::pair<OcefOutcome, OcefState> run(const OcefConfig& config, envs::BanditEnv& env, Rng& rng);

// Evaluation-side accounting; true means are the oracle's, not the
// algorithm's.
double empirical_cost(const OcefState& state, std::span<const double> true_means);
double safety_budget(const OcefState& state, std::span<const double> true_means, double alpha);

// Like run, but tracks cost and the running minimum of the safety budget
// Z_t = sum_s mu_{k_s} - (1-alpha) mu_0 t without needing a pull log.
struct EvaluatedRun {
  OcefOutcome outcome;
  double cost{0.0};
  double min_budget{0.0};
};
EvaluatedRun run_evaluated(OcefState& state, envs::BanditEnv& env, const OcefConfig& config,
                           std::span<const double> true_means, Rng& rng);

// Worst-case duration bound for a fully specified instance, evaluated with
// the omega = 1 constants (theta = log(2) sqrt(delta/6)):
//
//   eta_k = max(mu_k - mu_0, mu_0 + eps - mu_k)
//   H_k   = 1 + (64/eta_k^2) log( 2(K+1) logp(128(K+1)/(theta eta_k^2)) / theta )
//   H_0   = max( max_k H_k,
//                (6K+2)/(alpha mu_0)
//                + sum_k 256 log(2(K+1) log(2 H_k)/theta) / (alpha mu_0 eta_k) )
//
// with logp = max(1, log); returns ceil(sum_k H_k).
std::int64_t duration_bound(std::span<const double> true_means, const OcefConfig& config);

// CSV with header t,arm,reward,xi_value,active_set_size.
void write_pull_log_csv(const OcefState& state, std::ostream& out);

}  // namespace envyaudit::ocef
