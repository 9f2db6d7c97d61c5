#pragma once
/*
 * Ground-truth fairness computations on a known preference matrix.
 *
 * Envy of user m: delta^m = max(max_n u^m(pi^n) - u^m(pi^m), 0).
 *
 * Policy baselines:
 *   opt      one-hot on the user's best item
 *   parity   mass |A_s|/|A| per item category, on the category argmax
 *   equity   mass per category = the category's share of the user's total
 *            relevance, on the category argmax
 *   euu      joint welfare objective sum_m u^m - b sqrt(D + smoothing) with
 *            D the variance-like spread sum_m (u^m - mean)^2, maximized by
 *            Frank-Wolfe over the product of simplices
 *
 * Degenerate rows: an all-zero preference row yields the uniform policy; an
 * equity request with zero total relevance ignores the category constraints
 * and falls back to opt. Argmax ties break to the lowest item index.
 *
 * Group envy: U(g,g') = (1/|g|) sum_{m in g} u^m(average policy of g'), and
 * g envies g' when U(g,g') > U(g,g) + epsilon.
 */
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "envyaudit/envs.hpp"

namespace envyaudit::fairness {

struct CategoryPartition {
  std::vector<int> category_of;  // item index -> category index
  int category_count{0};
};

// Throws std::invalid_argument unless every item has a category in
// [0, category_count) and every category is nonempty.
void validate(const CategoryPartition& partition);

// category_of[a] = a % categories; requires items >= categories >= 1.
CategoryPartition round_robin_partition(std::size_t items, int categories);

struct EnvyReport {
  double epsilon{0.0};
  std::vector<double> per_user_delta;
  double average_envy{0.0};
  double prop_envious{0.0};  // fraction with delta > epsilon
};

// U(m,n) = u^m(pi^n) for all user pairs.
envs::Matrix utility_matrix(const envs::PreferenceMatrix& preferences,
                            const envs::PolicyMatrix& policies);

EnvyReport envy_report(const envs::PreferenceMatrix& preferences,
                       const envs::PolicyMatrix& policies, double epsilon);

// CSV with header user,delta,epsilon_flag.
void write_envy_report_csv(const EnvyReport& report, std::ostream& out);

std::vector<double> opt_policy(const envs::PreferenceMatrix& preferences, std::size_t user);
std::vector<double> parity_exposure_policy(const envs::PreferenceMatrix& preferences,
                                           std::size_t user, const CategoryPartition& partition);
std::vector<double> equity_exposure_policy(const envs::PreferenceMatrix& preferences,
                                           std::size_t user, const CategoryPartition& partition);

envs::PolicyMatrix opt_policies(const envs::PreferenceMatrix& preferences);
envs::PolicyMatrix parity_exposure_policies(const envs::PreferenceMatrix& preferences,
                                            const CategoryPartition& partition);
envs::PolicyMatrix equity_exposure_policies(const envs::PreferenceMatrix& preferences,
                                            const CategoryPartition& partition);

struct EuuConfig {
  double penalty_b{50.0};
  std::int64_t max_iterations{2000};
  double smoothing{1e-8};
};

// Throws std::domain_error on any out-of-range field.
void validate(const EuuConfig& config);

double euu_objective(const envs::PreferenceMatrix& preferences,
                     const envs::PolicyMatrix& policies, const EuuConfig& config);

envs::PolicyMatrix euu_policies(const envs::PreferenceMatrix& preferences,
                                const EuuConfig& config);

double group_utility(std::span<const int> group, std::span<const int> other,
                     const envs::PolicyMatrix& policies,
                     const envs::PreferenceMatrix& preferences);

struct GroupEnvyResult {
  bool envy_free{true};
  double max_violation{0.0};  // max over ordered pairs of U(g,g') - U(g,g)
  int worst_from{-1};
  int worst_to{-1};
};

// Groups must partition the users. envy_free iff max_violation <= epsilon.
GroupEnvyResult group_envy_free(const std::vector<std::vector<int>>& groups,
                                const envs::PolicyMatrix& policies,
                                const envs::PreferenceMatrix& preferences, double epsilon);

}  // namespace envyaudit::fairness
