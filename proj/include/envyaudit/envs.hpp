#pragma once
/*
 * Simulated environments.
 *
 * Two families: plain Bernoulli bandits (the four standard benchmark
 * problems) and a context-free recommender simulator built from a preference
 * matrix rho (expected reward of item a for user m) and a policy matrix pi
 * (per-user recommendation distributions). A user's utility for a policy is
 * u^m(pi) = sum_a pi(a) rho^m(a); the bandit view of one target user exposes
 * that user's own policy as arm 0 and other users' policies as arms 1..K,
 * with a pull drawing an item from the arm's policy and then a Bernoulli
 * reward with the target's preference for that item.
 */
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "envyaudit/rng.hpp"

namespace envyaudit::envs {

struct Matrix {
  std::size_t rows{0};
  std::size_t cols{0};
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// Ground-truth expected rewards rho^m(a); every entry in [0,1].
struct PreferenceMatrix {
  Matrix values;

  explicit PreferenceMatrix(Matrix m);
  std::size_t users() const { return values.rows; }
  std::size_t items() const { return values.cols; }
  std::span<const double> row(std::size_t m) const { return values.row(m); }
};

// Per-user recommendation distributions pi^m; nonnegative rows summing to 1
// within 1e-9.
struct PolicyMatrix {
  Matrix rows;

  explicit PolicyMatrix(Matrix m);
  std::size_t users() const { return rows.rows; }
  std::size_t items() const { return rows.cols; }
  std::span<const double> row(std::size_t m) const { return rows.row(m); }
};

struct RecommenderSystem {
  PreferenceMatrix preferences;
  PolicyMatrix policies;

  RecommenderSystem(PreferenceMatrix prefs, PolicyMatrix pols);
  std::size_t users() const { return preferences.users(); }
  std::size_t items() const { return preferences.items(); }
};

// u^m(pi) = sum_a pi(a) rho^m(a).
double true_utility(std::span<const double> policy_row, std::span<const double> preference_row);

struct BanditEnv {
  virtual ~BanditEnv() = default;
  virtual int num_arms() const = 0;  // total arms including the baseline
  virtual double pull(int arm, Rng& rng) = 0;
};

struct BernoulliBanditEnv final : BanditEnv {
  std::vector<double> means;  // index 0 = baseline

  explicit BernoulliBanditEnv(std::vector<double> arm_means);
  int num_arms() const override { return static_cast<int>(means.size()); }
  double pull(int arm, Rng& rng) override {
    return rng.bernoulli(means[static_cast<std::size_t>(arm)]) ? 1.0 : 0.0;
  }
};

// The four benchmark problems; num_arms is the total arm count including the
// baseline (10 reproduces the standard setting). Problem 3 generalizes as
// mu_k = 0.7 - 0.7 (k / num_arms)^0.6, problem 4 swaps entries 0 and 1.
BernoulliBanditEnv standard_problem(int id, int num_arms = 10);

// Bandit view of one target user; immutable after construction.
class UserBanditAdapter final : public BanditEnv {
 public:
  UserBanditAdapter(const PreferenceMatrix& preferences, const PolicyMatrix& policies,
                    int target_user, std::vector<int> arm_users);

  int num_arms() const override { return static_cast<int>(arm_users_.size()) + 1; }
  double pull(int arm, Rng& rng) override;

  int target_user() const { return target_; }
  const std::vector<int>& arm_users() const { return arm_users_; }
  // u^m(pi^{n_k}); arm 0 is the target's own policy.
  double true_mean(int arm) const { return means_[static_cast<std::size_t>(arm)]; }
  const std::vector<double>& true_means() const { return means_; }

 private:
  int target_{0};
  std::vector<int> arm_users_;
  std::vector<double> pref_row_;
  std::vector<std::vector<double>> cdf_;  // per-arm cumulative policy
  std::vector<double> means_;
};

// Row-wise softmax with the given inverse temperature, stabilized by row-max
// subtraction. Rejects non-finite scores.
PolicyMatrix softmax_policies(const Matrix& scores, double inverse_temperature);

// Product of two nonnegative uniform factors, rescaled into [0,1]; the result
// has rank at most `rank`.
PreferenceMatrix synthetic_lowrank(std::size_t users, std::size_t items, std::size_t rank,
                                   Rng& rng);

// CSV with a "item_0,item_1,..." header and one user per row; values must lie
// in [0,1]. load(save(X)) reproduces X entrywise.
PreferenceMatrix load_matrix(const std::string& path);
void save_matrix(const Matrix& matrix, const std::string& path);

}  // namespace envyaudit::envs
