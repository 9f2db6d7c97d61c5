#include "envyaudit/audit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "envyaudit/rng.hpp"

namespace envyaudit::audit {

namespace {

constexpr std::uint64_t kTargetsTag = hash_str("audit.targets");
constexpr std::uint64_t kUserTag = hash_str("audit.user");

std::vector<int> sample_without_replacement(int population, std::int64_t count, Rng& rng) {
  std::vector<int> pool(static_cast<std::size_t>(population));
  for (int i = 0; i < population; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(i) +
                   static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(population) -
                                                      static_cast<std::uint64_t>(i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

std::vector<int> sample_arms(int users, int target, std::int64_t requested,
                             bool with_replacement, Rng& rng) {
  if (with_replacement) {
    std::vector<int> arms(static_cast<std::size_t>(requested));
    for (auto& a : arms) {
      const auto v = static_cast<int>(rng.below(static_cast<std::uint64_t>(users) - 1));
      a = v >= target ? v + 1 : v;
    }
    return arms;
  }
  const std::int64_t count = std::min<std::int64_t>(requested, users - 1);
  std::vector<int> arms = sample_without_replacement(users - 1, count, rng);
  for (int& a : arms) {
    if (a >= target) a += 1;
  }
  return arms;
}

UserAuditResult run_one_user(const envs::RecommenderSystem& system, const AuditParams& params,
                             double inner_delta, int user, std::vector<int> arm_users,
                             Rng& rng) {
  ocef::OcefConfig cfg;
  cfg.bound_params = bounds::BoundParams{inner_delta, params.omega, params.sigma,
                                         static_cast<int>(arm_users.size())};
  cfg.alpha = params.alpha;
  cfg.epsilon = params.epsilon;
  cfg.max_steps = params.max_steps;
  cfg.clip_intervals = params.clip_intervals;
  cfg.record_pull_log = params.record_pull_logs;

  envs::UserBanditAdapter env(system.preferences, system.policies, user, arm_users);
  ocef::OcefState state = ocef::make_state(cfg);
  const ocef::EvaluatedRun ev = ocef::run_evaluated(state, env, cfg, env.true_means(), rng);
  return UserAuditResult{user,    std::move(arm_users), inner_delta,
                         ev.outcome, ev.cost,           ev.min_budget,
                         std::move(state)};
}

SystemVerdict aggregate(const std::vector<UserAuditResult>& per_user,
                        std::optional<std::pair<int, int>>& envious_pair) {
  bool inconclusive = false;
  for (const UserAuditResult& r : per_user) {
    if (r.outcome.verdict == ocef::Verdict::Envy) {
      if (!envious_pair) {
        envious_pair = {r.user, r.arm_users[static_cast<std::size_t>(*r.outcome.witness_arm) - 1]};
      }
      return SystemVerdict::NotEnvyFree;
    }
    if (r.outcome.verdict == ocef::Verdict::Inconclusive) inconclusive = true;
  }
  return inconclusive ? SystemVerdict::Inconclusive : SystemVerdict::EnvyFree;
}

}  // namespace

const char* to_string(SystemVerdict v) {
  switch (v) {
    case SystemVerdict::EnvyFree: return "EnvyFree";
    case SystemVerdict::NotEnvyFree: return "NotEnvyFree";
    default: return "Inconclusive";
  }
}

void validate(const AuditParams& p) {
  if (!(p.delta > 0.0 && p.delta < 1.0)) throw std::domain_error("AuditParams: delta must be in (0,1)");
  if (!(p.alpha > 0.0 && p.alpha <= 1.0)) throw std::domain_error("AuditParams: alpha must be in (0,1]");
  if (!(p.epsilon > 0.0 && p.epsilon <= 1.0)) throw std::domain_error("AuditParams: epsilon must be in (0,1]");
  if (!(p.gamma > 0.0 && p.gamma <= 1.0)) throw std::domain_error("AuditParams: gamma must be in (0,1]");
  if (!(p.lambda > 0.0 && p.lambda <= 1.0)) throw std::domain_error("AuditParams: lambda must be in (0,1]");
  if (!(p.omega > 0.0 && p.omega <= 1.0)) throw std::domain_error("AuditParams: omega must be in (0,1]");
  if (!(p.sigma >= 0.0) || !std::isfinite(p.sigma)) throw std::domain_error("AuditParams: sigma must be nonnegative");
  if (p.max_steps < 1) throw std::domain_error("AuditParams: max_steps must be >= 1");
}

SampleSizes sample_sizes(const AuditParams& params) {
  validate(params);
  const double targets = std::ceil(std::log(3.0 / params.delta) / params.lambda);
  if (targets > 1e12) throw std::domain_error("sample_sizes: lambda too small, target count overflows");
  double arms = 1.0;
  if (params.gamma < 1.0) {
    arms = std::ceil(std::log(3.0 * targets / params.delta) /
                     std::log(1.0 / (1.0 - params.gamma)));
    if (arms > 1e12) throw std::domain_error("sample_sizes: gamma too small, arm count overflows");
  }
  return SampleSizes{static_cast<std::int64_t>(targets), static_cast<std::int64_t>(arms)};
}

AuditResult run_audit(const envs::RecommenderSystem& system, const AuditParams& params,
                      std::uint64_t master_seed) {
  validate(params);
  const auto users = static_cast<int>(system.users());
  if (users < 2) throw std::invalid_argument("run_audit: needs at least 2 users");

  AuditResult result;
  result.sizes = sample_sizes(params);
  const double inner_delta =
      params.delta / (3.0 * static_cast<double>(result.sizes.target_users));

  const std::int64_t target_count = std::min<std::int64_t>(result.sizes.target_users, users);
  Rng target_rng(hash_mix(master_seed, kTargetsTag));
  const std::vector<int> targets = sample_without_replacement(users, target_count, target_rng);

  for (int m : targets) {
    Rng user_rng(hash_mix(hash_mix(master_seed, kUserTag), static_cast<std::uint64_t>(m)));
    std::vector<int> arm_users =
        sample_arms(users, m, result.sizes.arms, params.arms_with_replacement, user_rng);
    result.per_user.push_back(
        run_one_user(system, params, inner_delta, m, std::move(arm_users), user_rng));
    if (result.per_user.back().outcome.verdict == ocef::Verdict::Envy) break;
  }
  result.verdict = aggregate(result.per_user, result.envious_pair);
  return result;
}

AuditResult run_exact_audit(const envs::RecommenderSystem& system, double delta, double alpha,
                            double epsilon, std::uint64_t master_seed) {
  const auto users = static_cast<int>(system.users());
  AuditParams params;
  params.delta = delta;
  params.alpha = alpha;
  params.epsilon = epsilon;
  validate(params);

  AuditResult result;
  result.sizes = SampleSizes{users, users - 1};
  if (users < 2) {
    result.verdict = SystemVerdict::EnvyFree;
    return result;
  }
  const double inner_delta = delta / static_cast<double>(users);

  for (int m = 0; m < users; ++m) {
    Rng user_rng(hash_mix(hash_mix(master_seed, kUserTag), static_cast<std::uint64_t>(m)));
    std::vector<int> arm_users;
    arm_users.reserve(static_cast<std::size_t>(users) - 1);
    for (int n = 0; n < users; ++n) {
      if (n != m) arm_users.push_back(n);
    }
    result.per_user.push_back(
        run_one_user(system, params, inner_delta, m, std::move(arm_users), user_rng));
  }
  result.verdict = aggregate(result.per_user, result.envious_pair);
  return result;
}

void write_audit_report(const AuditResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);

  std::ofstream csv(base / "report.csv");
  if (!csv) throw std::runtime_error("write_audit_report: cannot open report.csv under " + dir);
  csv << "target_user,verdict,duration,cost,witness_user\n";
  char buf[32];
  for (const UserAuditResult& r : result.per_user) {
    std::snprintf(buf, sizeof buf, "%.17g", r.cost);
    csv << r.user << ',' << ocef::to_string(r.outcome.verdict) << ',' << r.outcome.duration
        << ',' << buf << ',';
    if (r.outcome.witness_arm) {
      csv << r.arm_users[static_cast<std::size_t>(*r.outcome.witness_arm) - 1];
    }
    csv << '\n';
  }
  if (!csv) throw std::runtime_error("write_audit_report: write failed under " + dir);

  std::ofstream verdict(base / "verdict.txt");
  verdict << to_string(result.verdict) << '\n';
  if (!verdict) throw std::runtime_error("write_audit_report: write failed under " + dir);
}

}  // namespace envyaudit::audit
