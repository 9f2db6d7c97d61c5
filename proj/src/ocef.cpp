#include "envyaudit/ocef.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace envyaudit::ocef {

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Envy: return "Envy";
    case Verdict::NoEnvy: return "NoEnvy";
    default: return "Inconclusive";
  }
}

void validate(const OcefConfig& c) {
  bounds::validate(c.bound_params);
  if (!(c.alpha > 0.0 && c.alpha <= 1.0)) throw std::domain_error("OcefConfig: alpha must be in (0,1]");
  if (!(c.epsilon > 0.0 && c.epsilon <= 1.0)) throw std::domain_error("OcefConfig: epsilon must be in (0,1]");
  if (c.max_steps < 1) throw std::domain_error("OcefConfig: max_steps must be >= 1");
}

OcefState make_state(const OcefConfig& config) {
  validate(config);
  const int k = config.bound_params.num_arms_k;
  OcefState st;
  st.factors = bounds::radius_factors(config.bound_params);
  const double sentinel = bounds::lil_radius(0, st.factors);
  st.stats.assign(static_cast<std::size_t>(k) + 1, bounds::ArmStats{});
  st.radius.assign(static_cast<std::size_t>(k) + 1, sentinel);
  // Zero-pull convention: empirical mean 0, radius = sentinel.
  const double lo = config.clip_intervals ? 0.0 : -sentinel;
  const double hi = config.clip_intervals ? 1.0 : sentinel;
  st.lower.assign(static_cast<std::size_t>(k) + 1, lo);
  st.upper.assign(static_cast<std::size_t>(k) + 1, hi);
  st.active_set.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) st.active_set[static_cast<std::size_t>(i)] = i + 1;
  st.min_active_radius = sentinel;
  return st;
}

int select_candidate(const OcefState& state, CandidateRule rule, Rng& rng) {
  if (state.active_set.empty()) throw std::logic_error("select_candidate: active set is empty");
  if (rule == CandidateRule::Uniform) {
    return state.active_set[static_cast<std::size_t>(rng.below(state.active_set.size()))];
  }
  int best = state.active_set.front();
  for (int k : state.active_set) {
    if (state.radius[static_cast<std::size_t>(k)] > state.radius[static_cast<std::size_t>(best)]) {
      best = k;
    }
  }
  return best;
}

double xi(const OcefState& state, int candidate, const OcefConfig& config) {
  const double t = static_cast<double>(state.t + 1);
  const double phi = bounds::freedman_phi(state.exploration_count, config.bound_params.delta,
                                          config.bound_params.sigma);
  const double budget_cap = std::min(state.radius_pull_sum, phi);
  const double baseline_slack =
      static_cast<double>(state.stats[0].pulls) - (1.0 - config.alpha) * t;
  return state.exploration_reward_sum - budget_cap +
         state.lower[static_cast<std::size_t>(candidate)] + baseline_slack * state.upper[0];
}

namespace {

void refresh_min_active_radius(OcefState& st) {
  double m = std::numeric_limits<double>::infinity();
  for (int k : st.active_set) m = std::min(m, st.radius[static_cast<std::size_t>(k)]);
  st.min_active_radius = m;
}

}  // namespace

StepResult step(OcefState& st, envs::BanditEnv& env, const OcefConfig& config, Rng& rng) {
  if (st.active_set.empty()) throw std::logic_error("step: active set is empty, run already decided");

  const std::int64_t t = st.t + 1;
  const int candidate = select_candidate(st, config.candidate_rule, rng);
  const double xi_value = xi(st, candidate, config);
  const bool pull_baseline = st.radius[0] > st.min_active_radius || xi_value < 0.0;
  const int arm = pull_baseline ? 0 : candidate;

  const double reward = env.pull(arm, rng);

  auto& stats = st.stats[static_cast<std::size_t>(arm)];
  if (arm != 0) st.radius_pull_sum -= st.radius[static_cast<std::size_t>(arm)] * static_cast<double>(stats.pulls);
  stats.pulls += 1;
  stats.reward_sum += reward;
  const double radius = bounds::lil_radius(stats.pulls, st.factors);
  st.radius[static_cast<std::size_t>(arm)] = radius;
  const double mean = stats.empirical_mean();
  double lo = mean - radius;
  double hi = mean + radius;
  if (config.clip_intervals) {
    lo = std::max(0.0, lo);
    hi = std::min(1.0, hi);
  }
  st.lower[static_cast<std::size_t>(arm)] = lo;
  st.upper[static_cast<std::size_t>(arm)] = hi;
  if (arm != 0) {
    st.radius_pull_sum += radius * static_cast<double>(stats.pulls);
    st.exploration_count += 1;
    st.exploration_reward_sum += reward;
  }
  st.t = t;

  // S_t: only the pulled side can change the filter. A baseline pull moves
  // lo_0 (and hi_0), an exploration pull moves the pulled arm's endpoints.
  const double keep_threshold = st.lower[0] + config.epsilon;
  bool removed = false;
  if (arm == 0) {
    auto out = st.active_set.begin();
    for (int k : st.active_set) {
      if (st.upper[static_cast<std::size_t>(k)] > keep_threshold) {
        *out++ = k;
      } else {
        removed = true;
      }
    }
    st.active_set.erase(out, st.active_set.end());
  } else if (!(st.upper[static_cast<std::size_t>(arm)] > keep_threshold)) {
    st.active_set.erase(std::find(st.active_set.begin(), st.active_set.end(), arm));
    removed = true;
  } else {
    st.min_active_radius = std::min(st.min_active_radius, radius);
  }
  if (removed) refresh_min_active_radius(st);

  // Envy before emptiness; witness = largest lower bound, ties to lowest id.
  int witness = -1;
  if (arm == 0) {
    double best = st.upper[0];
    for (int k : st.active_set) {
      if (st.lower[static_cast<std::size_t>(k)] > best) {
        best = st.lower[static_cast<std::size_t>(k)];
        witness = k;
      }
    }
  } else if (st.lower[static_cast<std::size_t>(arm)] > st.upper[0] &&
             std::find(st.active_set.begin(), st.active_set.end(), arm) != st.active_set.end()) {
    witness = arm;
  }

  StepResult result{arm, reward, xi_value, std::nullopt};
  if (witness >= 0) {
    result.outcome = OcefOutcome{Verdict::Envy, t, witness};
  } else if (st.active_set.empty()) {
    result.outcome = OcefOutcome{Verdict::NoEnvy, t, std::nullopt};
  }
  if (config.record_pull_log) {
    st.pull_log.push_back(PullRecord{arm, static_cast<std::int32_t>(st.active_set.size()),
                                     reward, xi_value});
  }
  return result;
}

OcefOutcome run(OcefState& state, envs::BanditEnv& env, const OcefConfig& config, Rng& rng) {
  if (env.num_arms() != config.bound_params.num_arms_k + 1) {
    throw std::invalid_argument("run: environment arm count does not match config");
  }
  while (state.t < config.max_steps) {
    const StepResult r = step(state, env, config, rng);
    if (r.outcome) return *r.outcome;
  }
  return OcefOutcome{Verdict::Inconclusive, state.t, std::nullopt};
}

std::pair<OcefOutcome, OcefState> run(const OcefConfig& config, envs::BanditEnv& env, Rng& rng) {
  OcefState state = make_state(config);
  OcefOutcome outcome = run(state, env, config, rng);
  return {outcome, std::move(state)};
}

double empirical_cost(const OcefState& state, std::span<const double> true_means) {
  if (true_means.size() != state.stats.size()) {
    throw std::invalid_argument("empirical_cost: mean count does not match arm count");
  }
  double cost = 0.0;
  for (std::size_t k = 1; k < state.stats.size(); ++k) {
    cost += (true_means[0] - true_means[k]) * static_cast<double>(state.stats[k].pulls);
  }
  return cost;
}

double safety_budget(const OcefState& state, std::span<const double> true_means, double alpha) {
  if (true_means.size() != state.stats.size()) {
    throw std::invalid_argument("safety_budget: mean count does not match arm count");
  }
  double collected = 0.0;
  for (std::size_t k = 0; k < state.stats.size(); ++k) {
    collected += true_means[k] * static_cast<double>(state.stats[k].pulls);
  }
  return collected - (1.0 - alpha) * true_means[0] * static_cast<double>(state.t);
}

EvaluatedRun run_evaluated(OcefState& state, envs::BanditEnv& env, const OcefConfig& config,
                           std::span<const double> true_means, Rng& rng) {
  if (env.num_arms() != config.bound_params.num_arms_k + 1 ||
      true_means.size() != state.stats.size()) {
    throw std::invalid_argument("run_evaluated: arm count mismatch");
  }
  const double floor_rate = (1.0 - config.alpha) * true_means[0];
  double cost = 0.0;
  double budget = 0.0;
  double min_budget = std::numeric_limits<double>::infinity();
  while (state.t < config.max_steps) {
    const StepResult r = step(state, env, config, rng);
    const double mu = true_means[static_cast<std::size_t>(r.pulled_arm)];
    budget += mu - floor_rate;
    min_budget = std::min(min_budget, budget);
    if (r.pulled_arm != 0) cost += true_means[0] - mu;
    if (r.outcome) return EvaluatedRun{*r.outcome, cost, min_budget};
  }
  return EvaluatedRun{OcefOutcome{Verdict::Inconclusive, state.t, std::nullopt}, cost, min_budget};
}

std::int64_t duration_bound(std::span<const double> true_means, const OcefConfig& config) {
  if (true_means.size() < 2) throw std::invalid_argument("duration_bound: needs baseline plus one arm");
  const int k_arms = static_cast<int>(true_means.size()) - 1;
  const double mu0 = true_means[0];
  const double eps = config.epsilon;
  const double alpha = config.alpha;
  const double delta = config.bound_params.delta;
  if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error("duration_bound: delta must be in (0,1)");
  if (!(eps > 0.0)) throw std::domain_error("duration_bound: epsilon must be positive");
  if (!(alpha * mu0 > 0.0)) throw std::domain_error("duration_bound: needs alpha * mu_0 > 0");

  const double th = std::log(2.0) * std::sqrt(delta / 6.0);
  const double arms = 2.0 * (k_arms + 1);
  std::vector<double> per_arm(static_cast<std::size_t>(k_arms));
  double h_max = 0.0;
  double h0_sum = (6.0 * k_arms + 2.0) / (alpha * mu0);
  for (int k = 1; k <= k_arms; ++k) {
    const double mu = true_means[static_cast<std::size_t>(k)];
    const double eta = std::max(mu - mu0, mu0 + eps - mu);
    const double logp = std::max(1.0, std::log(128.0 * (k_arms + 1) / (th * eta * eta)));
    const double h = 1.0 + 64.0 / (eta * eta) * std::log(arms * logp / th);
    per_arm[static_cast<std::size_t>(k - 1)] = h;
    h_max = std::max(h_max, h);
    h0_sum += 256.0 * std::log(arms * std::log(2.0 * h) / th) / (alpha * mu0 * eta);
  }
  double total = std::max(h_max, h0_sum);
  for (double h : per_arm) total += h;
  return static_cast<std::int64_t>(std::ceil(total));
}

void write_pull_log_csv(const OcefState& state, std::ostream& out) {
  out << "t,arm,reward,xi_value,active_set_size\n";
  char buf[64];
  for (std::size_t i = 0; i < state.pull_log.size(); ++i) {
    const PullRecord& r = state.pull_log[i];
    std::snprintf(buf, sizeof buf, "%.17g", r.reward);
    out << (i + 1) << ',' << r.arm << ',' << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.xi);
    out << buf << ',' << r.active_count << '\n';
  }
}

}  // namespace envyaudit::ocef
