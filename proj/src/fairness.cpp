#include "envyaudit/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace envyaudit::fairness {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_pair(const envs::PreferenceMatrix& preferences, const envs::PolicyMatrix& policies) {
  if (preferences.users() != policies.users() || preferences.items() != policies.items()) {
    throw std::invalid_argument("preference and policy dimensions differ");
  }
}

void check_user(const envs::PreferenceMatrix& preferences, std::size_t user) {
  if (user >= preferences.users()) {
    throw std::invalid_argument("user index " + std::to_string(user) + " out of range");
  }
}

void check_epsilon(double epsilon) {
  if (!std::isfinite(epsilon) || epsilon < 0.0) {
    throw std::domain_error("epsilon must be finite and nonnegative");
  }
}

// Lowest index attaining the maximum.
std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < values.size(); ++a) {
    if (values[a] > values[best]) best = a;
  }
  return best;
}

std::vector<double> uniform_row(std::size_t items) {
  return std::vector<double>(items, 1.0 / static_cast<double>(items));
}

void check_partition_size(const CategoryPartition& partition, std::size_t items) {
  if (partition.category_of.size() != items) {
    throw std::invalid_argument("partition covers " + std::to_string(partition.category_of.size()) +
                                " items, matrix has " + std::to_string(items));
  }
}

std::vector<double> group_average_policy(std::span<const int> group,
                                         const envs::PolicyMatrix& policies) {
  std::vector<double> avg(policies.items(), 0.0);
  for (int member : group) {
    const auto row = policies.row(static_cast<std::size_t>(member));
    for (std::size_t a = 0; a < avg.size(); ++a) avg[a] += row[a];
  }
  const double size = static_cast<double>(group.size());
  for (double& v : avg) v /= size;
  return avg;
}

void check_group(std::span<const int> group, std::size_t users, const char* name) {
  if (group.empty()) throw std::invalid_argument(std::string(name) + " group is empty");
  for (int member : group) {
    if (member < 0 || static_cast<std::size_t>(member) >= users) {
      throw std::invalid_argument(std::string(name) + " group: user id " +
                                  std::to_string(member) + " out of range");
    }
  }
}

}  // namespace

void validate(const CategoryPartition& partition) {
  if (partition.category_of.empty()) {
    throw std::invalid_argument("CategoryPartition: no items");
  }
  if (partition.category_count < 1) {
    throw std::invalid_argument("CategoryPartition: category_count must be at least 1");
  }
  std::vector<bool> seen(static_cast<std::size_t>(partition.category_count), false);
  for (std::size_t a = 0; a < partition.category_of.size(); ++a) {
    const int s = partition.category_of[a];
    if (s < 0 || s >= partition.category_count) {
      throw std::invalid_argument("CategoryPartition: item " + std::to_string(a) +
                                  " has category " + std::to_string(s) + " outside [0, " +
                                  std::to_string(partition.category_count) + ")");
    }
    seen[static_cast<std::size_t>(s)] = true;
  }
  for (int s = 0; s < partition.category_count; ++s) {
    if (!seen[static_cast<std::size_t>(s)]) {
      throw std::invalid_argument("CategoryPartition: category " + std::to_string(s) +
                                  " is empty");
    }
  }
}

CategoryPartition round_robin_partition(std::size_t items, int categories) {
  if (categories < 1) throw std::invalid_argument("round_robin_partition: categories must be at least 1");
  if (items < static_cast<std::size_t>(categories)) {
    throw std::invalid_argument("round_robin_partition: fewer items than categories");
  }
  CategoryPartition partition;
  partition.category_count = categories;
  partition.category_of.resize(items);
  for (std::size_t a = 0; a < items; ++a) {
    partition.category_of[a] = static_cast<int>(a % static_cast<std::size_t>(categories));
  }
  return partition;
}

envs::Matrix utility_matrix(const envs::PreferenceMatrix& preferences,
                            const envs::PolicyMatrix& policies) {
  check_pair(preferences, policies);
  const std::size_t users = preferences.users();
  envs::Matrix u(users, users);
  for (std::size_t m = 0; m < users; ++m) {
    for (std::size_t n = 0; n < users; ++n) {
      u.at(m, n) = envs::true_utility(policies.row(n), preferences.row(m));
    }
  }
  return u;
}

EnvyReport envy_report(const envs::PreferenceMatrix& preferences,
                       const envs::PolicyMatrix& policies, double epsilon) {
  check_epsilon(epsilon);
  const envs::Matrix u = utility_matrix(preferences, policies);
  const std::size_t users = preferences.users();

  EnvyReport report;
  report.epsilon = epsilon;
  report.per_user_delta.resize(users);
  std::size_t envious = 0;
  double total = 0.0;
  for (std::size_t m = 0; m < users; ++m) {
    double best_other = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < users; ++n) {
      if (n != m) best_other = std::max(best_other, u.at(m, n));
    }
    double delta = 0.0;
    if (users > 1) delta = std::max(best_other - u.at(m, m), 0.0);
    report.per_user_delta[m] = delta;
    total += delta;
    if (delta > epsilon) ++envious;
  }
  report.average_envy = total / static_cast<double>(users);
  report.prop_envious = static_cast<double>(envious) / static_cast<double>(users);
  return report;
}

void write_envy_report_csv(const EnvyReport& report, std::ostream& out) {
  out << "user,delta,epsilon_flag\n";
  for (std::size_t m = 0; m < report.per_user_delta.size(); ++m) {
    const double delta = report.per_user_delta[m];
    out << m << ',' << fmt_double(delta) << ','
        << (delta > report.epsilon ? "true" : "false") << '\n';
  }
}

std::vector<double> opt_policy(const envs::PreferenceMatrix& preferences, std::size_t user) {
  check_user(preferences, user);
  const auto row = preferences.row(user);
  const std::size_t best = argmax(row);
  if (row[best] == 0.0) return uniform_row(row.size());
  std::vector<double> policy(row.size(), 0.0);
  policy[best] = 1.0;
  return policy;
}

std::vector<double> parity_exposure_policy(const envs::PreferenceMatrix& preferences,
                                           std::size_t user, const CategoryPartition& partition) {
  check_user(preferences, user);
  validate(partition);
  check_partition_size(partition, preferences.items());
  const auto row = preferences.row(user);
  const std::size_t items = row.size();

  double max_value = 0.0;
  for (double v : row) max_value = std::max(max_value, v);
  if (max_value == 0.0) return uniform_row(items);

  // Per category: item count and lowest-index argmax.
  const std::size_t cats = static_cast<std::size_t>(partition.category_count);
  std::vector<std::size_t> count(cats, 0);
  std::vector<std::size_t> favorite(cats, items);
  for (std::size_t a = 0; a < items; ++a) {
    const std::size_t s = static_cast<std::size_t>(partition.category_of[a]);
    ++count[s];
    if (favorite[s] == items || row[a] > row[favorite[s]]) favorite[s] = a;
  }

  std::vector<double> policy(items, 0.0);
  for (std::size_t s = 0; s < cats; ++s) {
    policy[favorite[s]] = static_cast<double>(count[s]) / static_cast<double>(items);
  }
  return policy;
}

std::vector<double> equity_exposure_policy(const envs::PreferenceMatrix& preferences,
                                           std::size_t user, const CategoryPartition& partition) {
  check_user(preferences, user);
  validate(partition);
  check_partition_size(partition, preferences.items());
  const auto row = preferences.row(user);
  const std::size_t items = row.size();

  double total = 0.0;
  for (double v : row) total += v;
  if (total == 0.0) return opt_policy(preferences, user);

  const std::size_t cats = static_cast<std::size_t>(partition.category_count);
  std::vector<double> mass(cats, 0.0);
  std::vector<std::size_t> favorite(cats, items);
  for (std::size_t a = 0; a < items; ++a) {
    const std::size_t s = static_cast<std::size_t>(partition.category_of[a]);
    mass[s] += row[a];
    if (favorite[s] == items || row[a] > row[favorite[s]]) favorite[s] = a;
  }

  std::vector<double> policy(items, 0.0);
  for (std::size_t s = 0; s < cats; ++s) {
    policy[favorite[s]] = mass[s] / total;
  }
  return policy;
}

namespace {

envs::PolicyMatrix rows_to_policies(std::vector<std::vector<double>> rows_in, std::size_t items) {
  envs::Matrix m(rows_in.size(), items);
  for (std::size_t r = 0; r < rows_in.size(); ++r) {
    std::copy(rows_in[r].begin(), rows_in[r].end(), m.row(r).begin());
  }
  return envs::PolicyMatrix(std::move(m));
}

}  // namespace

envs::PolicyMatrix opt_policies(const envs::PreferenceMatrix& preferences) {
  std::vector<std::vector<double>> rows;
  rows.reserve(preferences.users());
  for (std::size_t m = 0; m < preferences.users(); ++m) rows.push_back(opt_policy(preferences, m));
  return rows_to_policies(std::move(rows), preferences.items());
}

envs::PolicyMatrix parity_exposure_policies(const envs::PreferenceMatrix& preferences,
                                            const CategoryPartition& partition) {
  std::vector<std::vector<double>> rows;
  rows.reserve(preferences.users());
  for (std::size_t m = 0; m < preferences.users(); ++m) {
    rows.push_back(parity_exposure_policy(preferences, m, partition));
  }
  return rows_to_policies(std::move(rows), preferences.items());
}

envs::PolicyMatrix equity_exposure_policies(const envs::PreferenceMatrix& preferences,
                                            const CategoryPartition& partition) {
  std::vector<std::vector<double>> rows;
  rows.reserve(preferences.users());
  for (std::size_t m = 0; m < preferences.users(); ++m) {
    rows.push_back(equity_exposure_policy(preferences, m, partition));
  }
  return rows_to_policies(std::move(rows), preferences.items());
}

void validate(const EuuConfig& config) {
  if (!std::isfinite(config.penalty_b) || config.penalty_b <= 0.0) {
    throw std::domain_error("EuuConfig: penalty_b must be positive");
  }
  if (config.max_iterations < 1) {
    throw std::domain_error("EuuConfig: max_iterations must be at least 1");
  }
  if (!std::isfinite(config.smoothing) || config.smoothing <= 0.0) {
    throw std::domain_error("EuuConfig: smoothing must be positive");
  }
}

double euu_objective(const envs::PreferenceMatrix& preferences,
                     const envs::PolicyMatrix& policies, const EuuConfig& config) {
  validate(config);
  check_pair(preferences, policies);
  const std::size_t users = preferences.users();
  std::vector<double> utils(users);
  double total = 0.0;
  for (std::size_t m = 0; m < users; ++m) {
    utils[m] = envs::true_utility(policies.row(m), preferences.row(m));
    total += utils[m];
  }
  const double mean = total / static_cast<double>(users);
  double spread = 0.0;
  for (double u : utils) spread += (u - mean) * (u - mean);
  return total - config.penalty_b * std::sqrt(spread + config.smoothing);
}

envs::PolicyMatrix euu_policies(const envs::PreferenceMatrix& preferences,
                                const EuuConfig& config) {
  validate(config);
  const std::size_t users = preferences.users();
  const std::size_t items = preferences.items();

  envs::Matrix iterate(users, items, 1.0 / static_cast<double>(items));
  std::vector<double> utils(users);

  // Frank-Wolfe: the objective gradient w.r.t. row m is c_m rho^m with
  // c_m = 1 - b (u_m - mean) / sqrt(spread + smoothing), and the linear
  // maximizer over the simplex product is one-hot per row.
  for (std::int64_t iter = 0; iter < config.max_iterations; ++iter) {
    double total = 0.0;
    for (std::size_t m = 0; m < users; ++m) {
      utils[m] = envs::true_utility(iterate.row(m), preferences.row(m));
      total += utils[m];
    }
    const double mean = total / static_cast<double>(users);
    double spread = 0.0;
    for (double u : utils) spread += (u - mean) * (u - mean);
    const double denom = std::sqrt(spread + config.smoothing);

    const double step = 2.0 / (static_cast<double>(iter) + 2.0);
    for (std::size_t m = 0; m < users; ++m) {
      const double coeff = 1.0 - config.penalty_b * (utils[m] - mean) / denom;
      const auto prefs_row = preferences.row(m);
      std::size_t best = 0;
      double best_value = coeff * prefs_row[0];
      for (std::size_t a = 1; a < items; ++a) {
        const double value = coeff * prefs_row[a];
        if (value > best_value) {
          best = a;
          best_value = value;
        }
      }
      auto row = iterate.row(m);
      for (double& v : row) v *= 1.0 - step;
      row[best] += step;
    }
  }
  return envs::PolicyMatrix(std::move(iterate));
}

double group_utility(std::span<const int> group, std::span<const int> other,
                     const envs::PolicyMatrix& policies,
                     const envs::PreferenceMatrix& preferences) {
  check_pair(preferences, policies);
  check_group(group, preferences.users(), "evaluating");
  check_group(other, preferences.users(), "target");
  const std::vector<double> avg = group_average_policy(other, policies);
  double total = 0.0;
  for (int member : group) {
    total += envs::true_utility(avg, preferences.row(static_cast<std::size_t>(member)));
  }
  return total / static_cast<double>(group.size());
}

GroupEnvyResult group_envy_free(const std::vector<std::vector<int>>& groups,
                                const envs::PolicyMatrix& policies,
                                const envs::PreferenceMatrix& preferences, double epsilon) {
  check_epsilon(epsilon);
  check_pair(preferences, policies);
  const std::size_t users = preferences.users();
  std::vector<bool> seen(users, false);
  std::size_t covered = 0;
  for (const auto& group : groups) {
    check_group(group, users, "partition");
    for (int member : group) {
      if (seen[static_cast<std::size_t>(member)]) {
        throw std::invalid_argument("groups: user " + std::to_string(member) +
                                    " appears in more than one group");
      }
      seen[static_cast<std::size_t>(member)] = true;
      ++covered;
    }
  }
  if (covered != users) {
    throw std::invalid_argument("groups cover " + std::to_string(covered) + " of " +
                                std::to_string(users) + " users");
  }

  GroupEnvyResult result;
  if (groups.size() < 2) return result;

  std::vector<double> own(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    own[g] = group_utility(groups[g], groups[g], policies, preferences);
  }
  bool first = true;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t h = 0; h < groups.size(); ++h) {
      if (g == h) continue;
      const double cross = group_utility(groups[g], groups[h], policies, preferences);
      const double violation = cross - own[g];
      if (first || violation > result.max_violation) {
        result.max_violation = violation;
        result.worst_from = static_cast<int>(g);
        result.worst_to = static_cast<int>(h);
        first = false;
      }
    }
  }
  result.envy_free = result.max_violation <= epsilon;
  return result;
}

}  // namespace envyaudit::fairness
