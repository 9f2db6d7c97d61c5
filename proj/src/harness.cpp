#include "envyaudit/harness.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "envyaudit/audit.hpp"
#include "envyaudit/fairness.hpp"
#include "envyaudit/ocef.hpp"
#include "envyaudit/rng.hpp"

namespace envyaudit::harness {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& message) { throw ConfigError(message); }

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string fmt_wallclock(double ms) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", ms);
  return buf;
}

double as_double(const json& value, const std::string& key) {
  if (!value.is_number()) fail("key '" + key + "' must be a number");
  return value.get<double>();
}

std::int64_t as_int(const json& value, const std::string& key) {
  if (!value.is_number_integer()) fail("key '" + key + "' must be an integer");
  return value.get<std::int64_t>();
}

std::uint64_t as_seed(const json& value, const std::string& key) {
  if (value.is_number_unsigned()) return value.get<std::uint64_t>();
  if (value.is_number_integer() && value.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(value.get<std::int64_t>());
  }
  fail("key '" + key + "' must be a nonnegative integer");
}

std::string as_string(const json& value, const std::string& key) {
  if (!value.is_string()) fail("key '" + key + "' must be a string");
  return value.get<std::string>();
}

std::vector<double> as_double_array(const json& value, const std::string& key) {
  if (!value.is_array() || value.empty()) fail("key '" + key + "' must be a nonempty array");
  std::vector<double> out;
  for (const auto& item : value) out.push_back(as_double(item, key));
  return out;
}

std::vector<int> as_int_array(const json& value, const std::string& key) {
  if (!value.is_array() || value.empty()) fail("key '" + key + "' must be a nonempty array");
  std::vector<int> out;
  for (const auto& item : value) out.push_back(static_cast<int>(as_int(item, key)));
  return out;
}

EnvironmentSpec parse_environment(const json& value) {
  if (!value.is_object()) fail("key 'environment' must be an object");
  EnvironmentSpec env;
  bool saw_type = false;
  for (const auto& [key, item] : value.items()) {
    if (key == "type") {
      env.type = as_string(item, key);
      saw_type = true;
    } else if (key == "problems") {
      env.problems = as_int_array(item, key);
    } else if (key == "num_arms") {
      env.num_arms = static_cast<int>(as_int(item, key));
    } else if (key == "users") {
      env.users = static_cast<std::size_t>(as_int(item, key));
    } else if (key == "items") {
      env.items = static_cast<std::size_t>(as_int(item, key));
    } else if (key == "rank") {
      env.rank = static_cast<std::size_t>(as_int(item, key));
    } else if (key == "inverse_temperature") {
      env.inverse_temperature = as_double(item, key);
    } else if (key == "categories") {
      env.categories = static_cast<int>(as_int(item, key));
    } else if (key == "strength") {
      env.strength = as_double(item, key);
    } else if (key == "background") {
      env.background = as_double(item, key);
    } else if (key == "mixing") {
      env.mixing = as_double(item, key);
    } else if (key == "rich_users") {
      env.rich_users = static_cast<std::size_t>(as_int(item, key));
    } else if (key == "preferences") {
      env.preferences_path = as_string(item, key);
    } else if (key == "policies") {
      env.policies_path = as_string(item, key);
    } else {
      fail("unknown environment key '" + key + "'");
    }
  }
  if (!saw_type) fail("environment is missing required key 'type'");
  return env;
}

void check_unit_interval(double v, const char* name, bool allow_one) {
  if (!std::isfinite(v) || v <= 0.0 || v > 1.0 || (!allow_one && v == 1.0)) {
    fail(std::string("'") + name + "' must lie in (0,1" + (allow_one ? "]" : ")"));
  }
}

bool synthetic_matrix_type(const std::string& type) {
  return type == "synthetic_lowrank" || type == "matrix_csv";
}

void validate_lowrank_fields(const EnvironmentSpec& env) {
  if (env.users < 2) fail("synthetic_lowrank environment needs at least 2 users");
  if (env.items < 1) fail("synthetic_lowrank environment needs at least 1 item");
  if (env.rank < 1 || env.rank > std::min(env.users, env.items)) {
    fail("synthetic_lowrank 'rank' must lie in [1, min(users, items)]");
  }
}

std::uint64_t environment_seed(const ExperimentConfig& config) {
  static const std::uint64_t kEnvironmentTag = hash_str("harness.environment");
  return hash_mix(hash_mix(config.master_seed, hash_str(config.name)), kEnvironmentTag);
}

envs::PreferenceMatrix build_preferences(const ExperimentConfig& config, Rng& rng) {
  const EnvironmentSpec& env = config.environment;
  if (env.type == "synthetic_lowrank") {
    return envs::synthetic_lowrank(env.users, env.items, env.rank, rng);
  }
  if (env.type == "matrix_csv") return envs::load_matrix(env.preferences_path);
  fail("environment type '" + env.type + "' does not define a preference matrix");
}

envs::RecommenderSystem build_system(const ExperimentConfig& config, Rng& rng) {
  const EnvironmentSpec& env = config.environment;
  if (env.type == "unique_favorites") {
    return make_unique_favorites_system(env.users, env.items, env.strength, env.background,
                                        env.mixing);
  }
  if (env.type == "shared_popularity") {
    return make_shared_popularity_system(env.users, env.items, env.strength, env.background,
                                         env.rich_users);
  }
  if (env.type == "synthetic_lowrank" || env.type == "matrix_csv") {
    envs::PreferenceMatrix prefs = build_preferences(config, rng);
    if (env.type == "matrix_csv" && !env.policies_path.empty()) {
      envs::PolicyMatrix pols(envs::load_matrix(env.policies_path).values);
      return {std::move(prefs), std::move(pols)};
    }
    envs::PolicyMatrix pols = envs::softmax_policies(prefs.values, env.inverse_temperature);
    return {std::move(prefs), std::move(pols)};
  }
  fail("environment type '" + env.type + "' does not define a recommender system");
}

// Dispatches indices 0..count-1 to a pool; `work` must not throw.
void run_parallel(std::size_t count, int workers, const std::function<void(std::size_t)>& work) {
  const int pool_size =
      std::max(1, std::min(workers, static_cast<int>(std::min<std::size_t>(count, 256))));
  if (pool_size == 1) {
    for (std::size_t i = 0; i < count; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(pool_size));
  for (int w = 0; w < pool_size; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) break;
        work(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

void write_file(const std::filesystem::path& path,
                const std::function<void(std::ostream&)>& emit) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  emit(out);
}

double total_self_utility(const envs::PreferenceMatrix& prefs, const envs::PolicyMatrix& pols) {
  double total = 0.0;
  for (std::size_t m = 0; m < prefs.users(); ++m) {
    total += envs::true_utility(pols.row(m), prefs.row(m));
  }
  return total;
}

PolicyMetricsRow metrics_row(const std::string& name, const envs::PreferenceMatrix& prefs,
                             const envs::PolicyMatrix& pols, double epsilon) {
  const fairness::EnvyReport report = fairness::envy_report(prefs, pols, epsilon);
  return {name, total_self_utility(prefs, pols), report.average_envy, report.prop_envious};
}

}  // namespace

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::OcefSweep: return "ocef_sweep";
    case ExperimentKind::AuditRun: return "audit_run";
    case ExperimentKind::EnvyMetrics: return "envy_metrics";
    case ExperimentKind::EuuVsOpt: return "euu_vs_opt";
    case ExperimentKind::MispecificationSweep: return "mispecification_sweep";
  }
  return "unknown";
}

ExperimentKind parse_kind(const std::string& text) {
  if (text == "ocef_sweep") return ExperimentKind::OcefSweep;
  if (text == "audit_run") return ExperimentKind::AuditRun;
  if (text == "envy_metrics") return ExperimentKind::EnvyMetrics;
  if (text == "euu_vs_opt") return ExperimentKind::EuuVsOpt;
  if (text == "mispecification_sweep") return ExperimentKind::MispecificationSweep;
  fail("unknown experiment kind '" + text + "'");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) fail("config top level must be a JSON object");

  ExperimentConfig config;
  bool saw_experiment = false;
  for (const auto& [key, value] : root.items()) {
    if (key == "experiment") {
      config.kind = parse_kind(as_string(value, key));
      saw_experiment = true;
    } else if (key == "name") {
      config.name = as_string(value, key);
    } else if (key == "environment") {
      config.environment = parse_environment(value);
    } else if (key == "delta_grid") {
      config.delta_grid = as_double_array(value, key);
    } else if (key == "alpha_grid") {
      config.alpha_grid = as_double_array(value, key);
    } else if (key == "arm_count_grid") {
      config.arm_count_grid = as_int_array(value, key);
    } else if (key == "rank_grid") {
      config.rank_grid.clear();
      for (int r : as_int_array(value, key)) {
        if (r < 1) fail("'rank_grid' entries must be at least 1");
        config.rank_grid.push_back(static_cast<std::size_t>(r));
      }
    } else if (key == "epsilon") {
      config.epsilon = as_double(value, key);
    } else if (key == "gamma") {
      config.gamma = as_double(value, key);
    } else if (key == "lambda") {
      config.lambda = as_double(value, key);
    } else if (key == "penalty_b") {
      config.penalty_b = as_double(value, key);
    } else if (key == "max_steps") {
      config.max_steps = as_int(value, key);
    } else if (key == "trials") {
      config.trials = static_cast<int>(as_int(value, key));
    } else if (key == "master_seed") {
      config.master_seed = as_seed(value, key);
    } else if (key == "output_dir") {
      config.output_dir = as_string(value, key);
    } else if (key == "workers") {
      config.workers = static_cast<int>(as_int(value, key));
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (!saw_experiment) fail("missing required key 'experiment'");
  if (config.name.empty()) config.name = to_string(config.kind);
  validate(config);
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

void validate(const ExperimentConfig& config) {
  if (config.name.empty()) fail("'name' must be nonempty");
  if (config.trials < 1) fail("'trials' must be at least 1");
  if (config.workers < 1) fail("'workers' must be at least 1");
  if (config.max_steps < 1) fail("'max_steps' must be at least 1");
  check_unit_interval(config.epsilon, "epsilon", true);
  check_unit_interval(config.gamma, "gamma", true);
  check_unit_interval(config.lambda, "lambda", true);
  if (!std::isfinite(config.penalty_b) || config.penalty_b <= 0.0) {
    fail("'penalty_b' must be positive");
  }
  if (config.delta_grid.empty()) fail("'delta_grid' must be nonempty");
  for (double d : config.delta_grid) check_unit_interval(d, "delta_grid", false);
  if (config.alpha_grid.empty()) fail("'alpha_grid' must be nonempty");
  for (double a : config.alpha_grid) check_unit_interval(a, "alpha_grid", true);

  const EnvironmentSpec& env = config.environment;
  if (!std::isfinite(env.inverse_temperature) || env.inverse_temperature <= 0.0) {
    fail("environment 'inverse_temperature' must be positive");
  }

  switch (config.kind) {
    case ExperimentKind::OcefSweep: {
      if (env.type != "standard_problem") {
        fail("ocef_sweep requires a standard_problem environment");
      }
      if (config.arm_count_grid.empty()) fail("'arm_count_grid' must be nonempty");
      for (int arms : config.arm_count_grid) {
        if (arms < 2) fail("'arm_count_grid' entries must be at least 2");
      }
      if (env.problems.empty()) fail("environment 'problems' must be nonempty");
      for (int id : env.problems) {
        if (id < 1 || id > 4) fail("environment 'problems' entries must lie in 1..4");
      }
      break;
    }
    case ExperimentKind::AuditRun: {
      if (env.type == "unique_favorites") {
        if (env.users < 2) fail("unique_favorites environment needs at least 2 users");
        if (env.items < env.users) fail("unique_favorites environment needs items >= users");
        if (env.mixing < 0.0 || env.mixing >= 1.0) fail("'mixing' must lie in [0,1)");
      } else if (env.type == "shared_popularity") {
        if (env.users < 2) fail("shared_popularity environment needs at least 2 users");
        if (env.items < 2) fail("shared_popularity environment needs at least 2 items");
        if (env.rich_users < 1 || env.rich_users > env.users) {
          fail("'rich_users' must lie in [1, users]");
        }
      } else if (env.type == "synthetic_lowrank") {
        validate_lowrank_fields(env);
      } else if (env.type == "matrix_csv") {
        if (env.preferences_path.empty()) fail("matrix_csv environment needs 'preferences'");
      } else {
        fail("audit_run does not support environment type '" + env.type + "'");
      }
      break;
    }
    case ExperimentKind::EnvyMetrics:
    case ExperimentKind::EuuVsOpt: {
      if (!synthetic_matrix_type(env.type)) {
        fail(std::string(to_string(config.kind)) +
             " requires a synthetic_lowrank or matrix_csv environment");
      }
      if (env.type == "synthetic_lowrank") validate_lowrank_fields(env);
      if (env.type == "matrix_csv" && env.preferences_path.empty()) {
        fail("matrix_csv environment needs 'preferences'");
      }
      if (config.kind == ExperimentKind::EnvyMetrics && env.categories < 1) {
        fail("environment 'categories' must be at least 1");
      }
      break;
    }
    case ExperimentKind::MispecificationSweep: {
      if (env.type != "synthetic_lowrank") {
        fail("mispecification_sweep requires a synthetic_lowrank environment");
      }
      validate_lowrank_fields(env);
      if (config.rank_grid.empty()) fail("'rank_grid' must be nonempty");
      break;
    }
  }
}

std::uint64_t trial_seed(std::uint64_t master_seed, const std::string& experiment_name,
                         std::uint64_t grid_index, std::uint64_t trial_index) {
  return hash_mix(hash_mix(hash_mix(master_seed, hash_str(experiment_name)), grid_index),
                  trial_index);
}

std::vector<SummaryRow> aggregate(const std::vector<TrialRecord>& records) {
  std::map<std::uint64_t, std::vector<const TrialRecord*>> groups;
  for (const TrialRecord& rec : records) groups[rec.grid_index].push_back(&rec);

  std::vector<SummaryRow> rows;
  rows.reserve(groups.size());
  for (const auto& [grid_index, group] : groups) {
    SummaryRow row;
    row.grid_point = group.front()->grid_point;
    row.grid_index = grid_index;
    row.n = group.size();

    double duration_sum = 0.0;
    double cost_sum = 0.0;
    std::size_t envy = 0, noenvy = 0, inconclusive = 0, violations = 0;
    row.min_duration = static_cast<double>(group.front()->duration);
    row.max_duration = row.min_duration;
    row.min_cost = group.front()->cost;
    row.max_cost = row.min_cost;
    for (const TrialRecord* rec : group) {
      const double duration = static_cast<double>(rec->duration);
      duration_sum += duration;
      cost_sum += rec->cost;
      row.min_duration = std::min(row.min_duration, duration);
      row.max_duration = std::max(row.max_duration, duration);
      row.min_cost = std::min(row.min_cost, rec->cost);
      row.max_cost = std::max(row.max_cost, rec->cost);
      if (rec->verdict == "Envy" || rec->verdict == "NotEnvyFree") ++envy;
      if (rec->verdict == "NoEnvy" || rec->verdict == "EnvyFree") ++noenvy;
      if (rec->verdict == "Inconclusive") ++inconclusive;
      if (rec->constraint_violated) ++violations;
    }
    const double n = static_cast<double>(row.n);
    row.mean_duration = duration_sum / n;
    row.mean_cost = cost_sum / n;
    if (row.n > 1) {
      double duration_sq = 0.0, cost_sq = 0.0;
      for (const TrialRecord* rec : group) {
        const double dd = static_cast<double>(rec->duration) - row.mean_duration;
        const double dc = rec->cost - row.mean_cost;
        duration_sq += dd * dd;
        cost_sq += dc * dc;
      }
      row.std_duration = std::sqrt(duration_sq / (n - 1.0));
      row.std_cost = std::sqrt(cost_sq / (n - 1.0));
    }
    row.frac_envy = static_cast<double>(envy) / n;
    row.frac_noenvy = static_cast<double>(noenvy) / n;
    row.frac_inconclusive = static_cast<double>(inconclusive) / n;
    row.frac_violation = static_cast<double>(violations) / n;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_trial_csv(const std::vector<TrialRecord>& records, std::ostream& out) {
  out << "experiment,grid_point,trial,seed,verdict,duration,cost,constraint_violated,"
         "wallclock_ms\n";
  for (const TrialRecord& rec : records) {
    out << rec.experiment << ',' << rec.grid_point << ',' << rec.trial << ',' << rec.seed << ','
        << rec.verdict << ',' << rec.duration << ',' << fmt17(rec.cost) << ','
        << (rec.constraint_violated ? "true" : "false") << ',' << fmt_wallclock(rec.wallclock_ms)
        << '\n';
  }
}

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << "grid_point,n,mean_duration,std_duration,mean_cost,std_cost,frac_envy,frac_noenvy,"
         "frac_inconclusive,frac_violation\n";
  for (const SummaryRow& row : rows) {
    out << row.grid_point << ',' << row.n << ',' << fmt17(row.mean_duration) << ','
        << fmt17(row.std_duration) << ',' << fmt17(row.mean_cost) << ',' << fmt17(row.std_cost)
        << ',' << fmt17(row.frac_envy) << ',' << fmt17(row.frac_noenvy) << ','
        << fmt17(row.frac_inconclusive) << ',' << fmt17(row.frac_violation) << '\n';
  }
}

envs::RecommenderSystem make_unique_favorites_system(std::size_t users, std::size_t items,
                                                     double strength, double background,
                                                     double mixing) {
  if (users < 1) throw std::invalid_argument("make_unique_favorites_system: needs users");
  if (items < users) {
    throw std::invalid_argument("make_unique_favorites_system: needs items >= users");
  }
  if (!std::isfinite(strength) || strength < 0.0 || strength > 1.0 || !std::isfinite(background) ||
      background < 0.0 || background > 1.0) {
    throw std::invalid_argument("make_unique_favorites_system: levels must lie in [0,1]");
  }
  if (!std::isfinite(mixing) || mixing < 0.0 || mixing >= 1.0) {
    throw std::invalid_argument("make_unique_favorites_system: mixing must lie in [0,1)");
  }
  envs::Matrix prefs(users, items, background);
  for (std::size_t m = 0; m < users; ++m) prefs.at(m, m) = strength;

  envs::Matrix pols(users, items, mixing / static_cast<double>(items));
  for (std::size_t m = 0; m < users; ++m) pols.at(m, m) += 1.0 - mixing;
  return {envs::PreferenceMatrix(std::move(prefs)), envs::PolicyMatrix(std::move(pols))};
}

envs::RecommenderSystem make_shared_popularity_system(std::size_t users, std::size_t items,
                                                      double hit_strength, double background,
                                                      std::size_t rich_users) {
  if (users < 2) throw std::invalid_argument("make_shared_popularity_system: needs 2 users");
  if (items < 2) throw std::invalid_argument("make_shared_popularity_system: needs 2 items");
  if (rich_users < 1 || rich_users > users) {
    throw std::invalid_argument("make_shared_popularity_system: rich_users must lie in [1, users]");
  }
  if (!std::isfinite(hit_strength) || hit_strength < 0.0 || hit_strength > 1.0 ||
      !std::isfinite(background) || background < 0.0 || background > 1.0) {
    throw std::invalid_argument("make_shared_popularity_system: levels must lie in [0,1]");
  }
  envs::Matrix prefs(users, items, background);
  for (std::size_t m = 0; m < users; ++m) prefs.at(m, 0) = hit_strength;

  envs::Matrix pols(users, items, 0.0);
  for (std::size_t m = 0; m < users; ++m) {
    const std::size_t served = m < rich_users ? 0 : 1 + m % (items - 1);
    pols.at(m, served) = 1.0;
  }
  return {envs::PreferenceMatrix(std::move(prefs)), envs::PolicyMatrix(std::move(pols))};
}

envs::Matrix standardize_rows(const envs::Matrix& scores) {
  envs::Matrix out(scores.rows, scores.cols);
  const double n = static_cast<double>(scores.cols);
  for (std::size_t r = 0; r < scores.rows; ++r) {
    const auto row = scores.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= n;
    double variance = 0.0;
    for (double v : row) variance += (v - mean) * (v - mean);
    const double sd = std::sqrt(variance / n);
    auto dest = out.row(r);
    if (sd <= 1e-15) {
      for (double& v : dest) v = 0.0;
    } else {
      for (std::size_t c = 0; c < scores.cols; ++c) dest[c] = (row[c] - mean) / sd;
    }
  }
  return out;
}

envs::Matrix rank_r_approximation(const envs::Matrix& matrix, std::size_t rank) {
  if (rank < 1) throw std::invalid_argument("rank_r_approximation: rank must be at least 1");
  if (matrix.rows == 0 || matrix.cols == 0) {
    throw std::invalid_argument("rank_r_approximation: matrix must be nonempty");
  }
  const std::size_t cols = matrix.cols;
  if (rank >= cols) return matrix;

  std::vector<double> gram(cols * cols, 0.0);
  for (std::size_t i = 0; i < cols; ++i) {
    for (std::size_t j = i; j < cols; ++j) {
      double sum = 0.0;
      for (std::size_t r = 0; r < matrix.rows; ++r) sum += matrix.at(r, i) * matrix.at(r, j);
      gram[i * cols + j] = sum;
      gram[j * cols + i] = sum;
    }
  }

  std::vector<std::vector<double>> basis(rank, std::vector<double>(cols, 0.0));
  for (std::size_t j = 0; j < rank; ++j) basis[j][j] = 1.0;

  std::vector<std::vector<double>> next(rank, std::vector<double>(cols));
  for (int iter = 0; iter < 300; ++iter) {
    for (std::size_t j = 0; j < rank; ++j) {
      for (std::size_t i = 0; i < cols; ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < cols; ++k) sum += gram[i * cols + k] * basis[j][k];
        next[j][i] = sum;
      }
    }
    // Modified Gram-Schmidt; a column that collapses restarts from a
    // coordinate vector.
    for (std::size_t j = 0; j < rank; ++j) {
      std::vector<double>& v = next[j];
      for (int attempt = 0; attempt < 2; ++attempt) {
        for (std::size_t i = 0; i < j; ++i) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += next[i][c] * v[c];
          for (std::size_t c = 0; c < cols; ++c) v[c] -= dot * next[i][c];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 1e-12) {
          for (double& x : v) x /= norm;
          break;
        }
        std::fill(v.begin(), v.end(), 0.0);
        v[j] = 1.0;
      }
      basis[j] = v;
    }
  }

  // Projection onto the fitted column space: B = M (Q Q^T).
  std::vector<double> projection(cols * cols, 0.0);
  for (std::size_t i = 0; i < cols; ++i) {
    for (std::size_t k = 0; k < cols; ++k) {
      double sum = 0.0;
      for (std::size_t j = 0; j < rank; ++j) sum += basis[j][i] * basis[j][k];
      projection[i * cols + k] = sum;
    }
  }
  envs::Matrix out(matrix.rows, cols);
  for (std::size_t r = 0; r < matrix.rows; ++r) {
    for (std::size_t i = 0; i < cols; ++i) {
      double sum = 0.0;
      for (std::size_t k = 0; k < cols; ++k) sum += matrix.at(r, k) * projection[k * cols + i];
      out.at(r, i) = sum;
    }
  }
  return out;
}

std::vector<TrialRecord> run_ocef_sweep(const ExperimentConfig& config) {
  validate(config);
  struct GridPoint {
    double delta, alpha;
    int arms, problem;
    std::string label;
  };
  std::vector<GridPoint> grid;
  for (double delta : config.delta_grid) {
    for (double alpha : config.alpha_grid) {
      for (int arms : config.arm_count_grid) {
        for (int problem : config.environment.problems) {
          GridPoint gp{delta, alpha, arms, problem, ""};
          gp.label = "delta=" + fmt_label(delta) + ";alpha=" + fmt_label(alpha) +
                     ";arms=" + std::to_string(arms) + ";problem=" + std::to_string(problem);
          grid.push_back(std::move(gp));
        }
      }
    }
  }

  const std::size_t trials = static_cast<std::size_t>(config.trials);
  std::vector<TrialRecord> records(grid.size() * trials);
  run_parallel(records.size(), config.workers, [&](std::size_t flat) {
    const std::size_t grid_index = flat / trials;
    const int trial = static_cast<int>(flat % trials);
    const GridPoint& gp = grid[grid_index];

    TrialRecord& rec = records[flat];
    rec.experiment = config.name;
    rec.grid_point = gp.label;
    rec.grid_index = grid_index;
    rec.trial = trial;
    rec.seed = trial_seed(config.master_seed, config.name, grid_index,
                          static_cast<std::uint64_t>(trial));
    const auto start = std::chrono::steady_clock::now();
    try {
      envs::BernoulliBanditEnv env = envs::standard_problem(gp.problem, gp.arms);
      ocef::OcefConfig oc;
      oc.bound_params = {gp.delta, 0.99, 0.5, gp.arms - 1};
      oc.alpha = gp.alpha;
      oc.epsilon = config.epsilon;
      oc.max_steps = config.max_steps;
      Rng rng(rec.seed);
      ocef::OcefState state = ocef::make_state(oc);
      const ocef::EvaluatedRun eval = ocef::run_evaluated(state, env, oc, env.means, rng);
      rec.verdict = ocef::to_string(eval.outcome.verdict);
      rec.duration = eval.outcome.duration;
      rec.cost = eval.cost;
      rec.constraint_violated = eval.min_budget < 0.0;
    } catch (const std::exception&) {
      rec.verdict = "Error";
    }
    rec.wallclock_ms = elapsed_ms(start);
  });
  return records;
}

std::vector<TrialRecord> run_audit_experiment(const ExperimentConfig& config) {
  validate(config);
  Rng env_rng(environment_seed(config));
  const envs::RecommenderSystem system = build_system(config, env_rng);

  struct GridPoint {
    double delta, alpha;
    std::string label;
  };
  std::vector<GridPoint> grid;
  for (double delta : config.delta_grid) {
    for (double alpha : config.alpha_grid) {
      grid.push_back({delta, alpha, "delta=" + fmt_label(delta) + ";alpha=" + fmt_label(alpha)});
    }
  }

  const std::size_t trials = static_cast<std::size_t>(config.trials);
  std::vector<TrialRecord> records(grid.size() * trials);
  run_parallel(records.size(), config.workers, [&](std::size_t flat) {
    const std::size_t grid_index = flat / trials;
    const int trial = static_cast<int>(flat % trials);
    const GridPoint& gp = grid[grid_index];

    TrialRecord& rec = records[flat];
    rec.experiment = config.name;
    rec.grid_point = gp.label;
    rec.grid_index = grid_index;
    rec.trial = trial;
    rec.seed = trial_seed(config.master_seed, config.name, grid_index,
                          static_cast<std::uint64_t>(trial));
    const auto start = std::chrono::steady_clock::now();
    try {
      audit::AuditParams params;
      params.delta = gp.delta;
      params.alpha = gp.alpha;
      params.epsilon = config.epsilon;
      params.gamma = config.gamma;
      params.lambda = config.lambda;
      params.max_steps = config.max_steps;
      const audit::AuditResult result = audit::run_audit(system, params, rec.seed);

      rec.verdict = audit::to_string(result.verdict);
      ocef::Verdict matching = ocef::Verdict::Inconclusive;
      if (result.verdict == audit::SystemVerdict::EnvyFree) matching = ocef::Verdict::NoEnvy;
      if (result.verdict == audit::SystemVerdict::NotEnvyFree) matching = ocef::Verdict::Envy;
      double cost_sum = 0.0;
      std::size_t matching_runs = 0;
      for (const audit::UserAuditResult& user : result.per_user) {
        rec.duration += user.outcome.duration;
        if (user.min_budget < 0.0) rec.constraint_violated = true;
        if (user.outcome.verdict == matching) {
          cost_sum += user.cost;
          ++matching_runs;
        }
      }
      rec.cost = matching_runs > 0 ? cost_sum / static_cast<double>(matching_runs) : 0.0;
    } catch (const std::exception&) {
      rec.verdict = "Error";
    }
    rec.wallclock_ms = elapsed_ms(start);
  });
  return records;
}

std::vector<PolicyMetricsRow> run_envy_metrics(const ExperimentConfig& config) {
  validate(config);
  Rng rng(environment_seed(config));
  const envs::PreferenceMatrix prefs = build_preferences(config, rng);
  const fairness::CategoryPartition partition =
      fairness::round_robin_partition(prefs.items(), config.environment.categories);
  const fairness::EuuConfig euu{config.penalty_b, 2000, 1e-8};

  std::vector<PolicyMetricsRow> rows;
  rows.push_back(metrics_row("opt", prefs, fairness::opt_policies(prefs), config.epsilon));
  rows.push_back(metrics_row("parity", prefs,
                             fairness::parity_exposure_policies(prefs, partition),
                             config.epsilon));
  rows.push_back(metrics_row("equity", prefs,
                             fairness::equity_exposure_policies(prefs, partition),
                             config.epsilon));
  rows.push_back(metrics_row("euu", prefs, fairness::euu_policies(prefs, euu), config.epsilon));
  rows.push_back(
      metrics_row("softmax_true", prefs,
                  envs::softmax_policies(prefs.values, config.environment.inverse_temperature),
                  config.epsilon));
  return rows;
}

std::vector<PolicyMetricsRow> run_euu_vs_opt(const ExperimentConfig& config) {
  validate(config);
  Rng rng(environment_seed(config));
  const envs::PreferenceMatrix prefs = build_preferences(config, rng);
  const fairness::EuuConfig euu{config.penalty_b, 2000, 1e-8};

  std::vector<PolicyMetricsRow> rows;
  rows.push_back(metrics_row("opt", prefs, fairness::opt_policies(prefs), config.epsilon));
  rows.push_back(metrics_row("euu", prefs, fairness::euu_policies(prefs, euu), config.epsilon));
  return rows;
}

std::vector<MispecificationRow> run_mispecification_sweep(const ExperimentConfig& config) {
  validate(config);
  Rng rng(environment_seed(config));
  const EnvironmentSpec& env = config.environment;
  const envs::PreferenceMatrix truth =
      envs::synthetic_lowrank(env.users, env.items, env.rank, rng);

  std::vector<MispecificationRow> rows;
  rows.reserve(config.rank_grid.size());
  for (std::size_t fitted_rank : config.rank_grid) {
    const envs::Matrix fit = rank_r_approximation(truth.values, fitted_rank);
    const envs::Matrix scores = standardize_rows(fit);
    const envs::PolicyMatrix pols = envs::softmax_policies(scores, env.inverse_temperature);
    const fairness::EnvyReport report = fairness::envy_report(truth, pols, config.epsilon);
    rows.push_back({fitted_rank, report.average_envy, report.prop_envious});
  }
  return rows;
}

void write_policy_metrics_csv(const std::vector<PolicyMetricsRow>& rows, std::ostream& out) {
  out << "policy,total_utility,average_envy,prop_envious\n";
  for (const PolicyMetricsRow& row : rows) {
    out << row.policy << ',' << fmt17(row.total_utility) << ',' << fmt17(row.average_envy) << ','
        << fmt17(row.prop_envious) << '\n';
  }
}

void write_mispecification_csv(const std::vector<MispecificationRow>& rows, std::ostream& out) {
  out << "rank,average_envy,prop_envious\n";
  for (const MispecificationRow& row : rows) {
    out << row.rank << ',' << fmt17(row.average_envy) << ',' << fmt17(row.prop_envious) << '\n';
  }
}

std::vector<std::string> run_experiment(const ExperimentConfig& config) {
  validate(config);
  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;

  auto emit_sweep = [&](const std::vector<TrialRecord>& records) {
    const std::filesystem::path trials_path = dir / "trials.csv";
    write_file(trials_path, [&](std::ostream& out) { write_trial_csv(records, out); });
    written.push_back(trials_path.string());

    const std::filesystem::path summary_path = dir / "summary.csv";
    const std::vector<SummaryRow> rows = aggregate(records);
    write_file(summary_path, [&](std::ostream& out) { write_summary_csv(rows, out); });
    written.push_back(summary_path.string());
  };

  switch (config.kind) {
    case ExperimentKind::OcefSweep: {
      emit_sweep(run_ocef_sweep(config));
      break;
    }
    case ExperimentKind::AuditRun: {
      emit_sweep(run_audit_experiment(config));
      const std::filesystem::path sizes_path = dir / "sizes.csv";
      write_file(sizes_path, [&](std::ostream& out) {
        out << "grid_point,target_users,arms\n";
        for (double delta : config.delta_grid) {
          for (double alpha : config.alpha_grid) {
            audit::AuditParams params;
            params.delta = delta;
            params.alpha = alpha;
            params.epsilon = config.epsilon;
            params.gamma = config.gamma;
            params.lambda = config.lambda;
            const audit::SampleSizes sizes = audit::sample_sizes(params);
            out << "delta=" << fmt_label(delta) << ";alpha=" << fmt_label(alpha) << ','
                << sizes.target_users << ',' << sizes.arms << '\n';
          }
        }
      });
      written.push_back(sizes_path.string());
      break;
    }
    case ExperimentKind::EnvyMetrics: {
      const auto rows = run_envy_metrics(config);
      const std::filesystem::path path = dir / "metrics.csv";
      write_file(path, [&](std::ostream& out) { write_policy_metrics_csv(rows, out); });
      written.push_back(path.string());
      break;
    }
    case ExperimentKind::EuuVsOpt: {
      const auto rows = run_euu_vs_opt(config);
      const std::filesystem::path path = dir / "comparison.csv";
      write_file(path, [&](std::ostream& out) { write_policy_metrics_csv(rows, out); });
      written.push_back(path.string());
      break;
    }
    case ExperimentKind::MispecificationSweep: {
      const auto rows = run_mispecification_sweep(config);
      const std::filesystem::path path = dir / "mispec.csv";
      write_file(path, [&](std::ostream& out) { write_mispecification_csv(rows, out); });
      written.push_back(path.string());
      break;
    }
  }
  return written;
}

}  // namespace envyaudit::harness
