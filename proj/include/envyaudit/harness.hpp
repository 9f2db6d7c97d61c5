#pragma once
/*
 * Seeded Monte-Carlo experiment runner.
 *
 * A JSON config selects one experiment kind, an environment, parameter grids
 * and a trial count. Grid points are enumerated with delta outermost, then
 * alpha, then arm count, then problem id; the seed of every trial is a stable
 * hash of (master_seed, experiment name, grid index, trial index), so results
 * are reproducible for a fixed config and independent of the worker count.
 *
 * Each sweep emits a raw per-trial CSV and an aggregated summary CSV; the
 * single-shot experiment kinds (envy_metrics, euu_vs_opt,
 * mispecification_sweep) emit one small long-format CSV each. Everything
 * except the wallclock_ms column is deterministic.
 */
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "envyaudit/envs.hpp"

namespace envyaudit::harness {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind {
  OcefSweep,
  AuditRun,
  EnvyMetrics,
  EuuVsOpt,
  MispecificationSweep,
};

const char* to_string(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& text);  // throws ConfigError

struct EnvironmentSpec {
  std::string type;  // standard_problem | synthetic_lowrank | unique_favorites |
                     // shared_popularity | matrix_csv

  // standard_problem
  std::vector<int> problems{1};
  int num_arms{10};

  // synthetic matrices
  std::size_t users{0};
  std::size_t items{0};
  std::size_t rank{0};
  double inverse_temperature{5.0};
  int categories{2};

  // unique_favorites / shared_popularity
  double strength{0.9};
  double background{0.2};
  double mixing{0.0};
  std::size_t rich_users{0};

  // matrix_csv
  std::string preferences_path;
  std::string policies_path;
};

struct ExperimentConfig {
  ExperimentKind kind{ExperimentKind::OcefSweep};
  std::string name;
  EnvironmentSpec environment;

  std::vector<double> delta_grid{0.05};
  std::vector<double> alpha_grid{0.05};
  std::vector<int> arm_count_grid{10};
  std::vector<std::size_t> rank_grid;

  double epsilon{0.05};
  double gamma{0.1};
  double lambda{0.1};
  double penalty_b{50.0};
  std::int64_t max_steps{10'000'000};

  int trials{1};
  std::uint64_t master_seed{0};
  std::string output_dir{"."};
  int workers{1};
};

ExperimentConfig parse_config(const std::string& json_text);  // throws ConfigError
ExperimentConfig load_config(const std::string& path);        // throws ConfigError
void validate(const ExperimentConfig& config);                // throws ConfigError

std::uint64_t trial_seed(std::uint64_t master_seed, const std::string& experiment_name,
                         std::uint64_t grid_index, std::uint64_t trial_index);

struct TrialRecord {
  std::string experiment;
  std::string grid_point;
  std::uint64_t grid_index{0};
  int trial{0};
  std::uint64_t seed{0};
  std::string verdict;
  std::int64_t duration{0};
  double cost{0.0};
  bool constraint_violated{false};
  double wallclock_ms{0.0};
};

struct SummaryRow {
  std::string grid_point;
  std::uint64_t grid_index{0};
  std::size_t n{0};
  double mean_duration{0.0};
  double std_duration{0.0};
  double mean_cost{0.0};
  double std_cost{0.0};
  double frac_envy{0.0};
  double frac_noenvy{0.0};
  double frac_inconclusive{0.0};
  double frac_violation{0.0};
  // Diagnostics; not part of the summary CSV schema.
  double min_duration{0.0};
  double max_duration{0.0};
  double min_cost{0.0};
  double max_cost{0.0};
};

// Rows ordered by grid index; sample standard deviation (0 when n <= 1).
std::vector<SummaryRow> aggregate(const std::vector<TrialRecord>& records);

// Columns: experiment,grid_point,trial,seed,verdict,duration,cost,
// constraint_violated,wallclock_ms (wallclock last, %.3f; other doubles
// %.17g; booleans true/false).
void write_trial_csv(const std::vector<TrialRecord>& records, std::ostream& out);

// Columns: grid_point,n,mean_duration,std_duration,mean_cost,std_cost,
// frac_envy,frac_noenvy,frac_inconclusive,frac_violation.
void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out);

// Every user likes their own item best (strength) and the rest at background
// level; policies mix (1 - mixing) on the favorite with mixing spread
// uniformly. Requires items >= users. Nobody envies anybody.
envs::RecommenderSystem make_unique_favorites_system(std::size_t users, std::size_t items,
                                                     double strength, double background,
                                                     double mixing);

// Everybody likes item 0 best (hit_strength) and the rest at background
// level; the first rich_users users are served item 0, the rest a junk item
// of their own. Every poorly served user envies every rich one. Requires
// 1 <= rich_users <= users and items >= 2.
envs::RecommenderSystem make_shared_popularity_system(std::size_t users, std::size_t items,
                                                      double hit_strength, double background,
                                                      std::size_t rich_users);

// (x - row mean) / population sd per row; rows with sd <= 1e-15 become zero.
envs::Matrix standardize_rows(const envs::Matrix& scores);

// Best rank-r approximation via orthogonal iteration on the Gram matrix;
// rank >= cols returns the input unchanged.
envs::Matrix rank_r_approximation(const envs::Matrix& matrix, std::size_t rank);

std::vector<TrialRecord> run_ocef_sweep(const ExperimentConfig& config);
std::vector<TrialRecord> run_audit_experiment(const ExperimentConfig& config);

struct PolicyMetricsRow {
  std::string policy;
  double total_utility{0.0};
  double average_envy{0.0};
  double prop_envious{0.0};
};

std::vector<PolicyMetricsRow> run_envy_metrics(const ExperimentConfig& config);
std::vector<PolicyMetricsRow> run_euu_vs_opt(const ExperimentConfig& config);

struct MispecificationRow {
  std::size_t rank{0};
  double average_envy{0.0};
  double prop_envious{0.0};
};

std::vector<MispecificationRow> run_mispecification_sweep(const ExperimentConfig& config);

// Columns: policy,total_utility,average_envy,prop_envious.
void write_policy_metrics_csv(const std::vector<PolicyMetricsRow>& rows, std::ostream& out);
// Columns: rank,average_envy,prop_envious.
void write_mispecification_csv(const std::vector<MispecificationRow>& rows, std::ostream& out);

// Dispatches on config.kind, writes the experiment's CSV files into
// config.output_dir (created if absent), and returns the file paths.
std::vector<std::string> run_experiment(const ExperimentConfig& config);

}  // namespace envyaudit::harness
