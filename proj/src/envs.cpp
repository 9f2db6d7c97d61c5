#include "envyaudit/envs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace envyaudit::envs {

namespace {

void check_dims(const Matrix& m, const char* what) {
  if (m.rows == 0 || m.cols == 0) {
    throw std::invalid_argument(std::string(what) + ": matrix must be nonempty");
  }
  if (m.data.size() != m.rows * m.cols) {
    throw std::invalid_argument(std::string(what) + ": storage size does not match rows*cols");
  }
}

std::string cell_name(std::size_t r, std::size_t c) {
  return "row " + std::to_string(r) + " column " + std::to_string(c);
}

}  // namespace

PreferenceMatrix::PreferenceMatrix(Matrix m) : values(std::move(m)) {
  check_dims(values, "PreferenceMatrix");
  for (std::size_t r = 0; r < values.rows; ++r) {
    for (std::size_t c = 0; c < values.cols; ++c) {
      const double v = values.at(r, c);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw std::invalid_argument("PreferenceMatrix: " + cell_name(r, c) + ": value " +
                                    std::to_string(v) + " outside [0,1]");
      }
    }
  }
}

PolicyMatrix::PolicyMatrix(Matrix m) : rows(std::move(m)) {
  check_dims(rows, "PolicyMatrix");
  for (std::size_t r = 0; r < rows.rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < rows.cols; ++c) {
      const double v = rows.at(r, c);
      if (!std::isfinite(v) || v < 0.0) {
        throw std::invalid_argument("PolicyMatrix: " + cell_name(r, c) + ": entries must be nonnegative");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument("PolicyMatrix: row " + std::to_string(r) + " sums to " +
                                  std::to_string(sum) + ", expected 1");
    }
  }
}

RecommenderSystem::RecommenderSystem(PreferenceMatrix prefs, PolicyMatrix pols)
    : preferences(std::move(prefs)), policies(std::move(pols)) {
  if (preferences.users() != policies.users() || preferences.items() != policies.items()) {
    throw std::invalid_argument("RecommenderSystem: preference and policy dimensions differ");
  }
}

double true_utility(std::span<const double> policy_row, std::span<const double> preference_row) {
  if (policy_row.size() != preference_row.size()) {
    throw std::invalid_argument("true_utility: row lengths differ");
  }
  double u = 0.0;
  for (std::size_t a = 0; a < policy_row.size(); ++a) u += policy_row[a] * preference_row[a];
  return u;
}

BernoulliBanditEnv::BernoulliBanditEnv(std::vector<double> arm_means) : means(std::move(arm_means)) {
  if (means.size() < 2) throw std::invalid_argument("BernoulliBanditEnv: needs at least 2 arms");
  for (std::size_t k = 0; k < means.size(); ++k) {
    if (!std::isfinite(means[k]) || means[k] < 0.0 || means[k] > 1.0) {
      throw std::invalid_argument("BernoulliBanditEnv: arm " + std::to_string(k) +
                                  " mean outside [0,1]");
    }
  }
}

BernoulliBanditEnv standard_problem(int id, int num_arms) {
  if (id < 1 || id > 4) throw std::invalid_argument("standard_problem: id must be in 1..4");
  if (num_arms < 2) throw std::invalid_argument("standard_problem: needs at least 2 arms");
  std::vector<double> mu(static_cast<std::size_t>(num_arms), 0.3);
  switch (id) {
    case 1:
      mu[0] = 0.6;
      break;
    case 2:
      mu[0] = 0.3;
      mu[1] = 0.6;
      break;
    default:
      for (int k = 0; k < num_arms; ++k) {
        mu[static_cast<std::size_t>(k)] =
            0.7 - 0.7 * std::pow(static_cast<double>(k) / num_arms, 0.6);
      }
      if (id == 4) std::swap(mu[0], mu[1]);
      break;
  }
  return BernoulliBanditEnv(std::move(mu));
}

UserBanditAdapter::UserBanditAdapter(const PreferenceMatrix& preferences,
                                     const PolicyMatrix& policies, int target_user,
                                     std::vector<int> arm_users)
    : target_(target_user), arm_users_(std::move(arm_users)) {
  const auto users = static_cast<std::int64_t>(preferences.users());
  if (preferences.users() != policies.users() || preferences.items() != policies.items()) {
    throw std::invalid_argument("UserBanditAdapter: preference and policy dimensions differ");
  }
  if (target_ < 0 || target_ >= users) throw std::invalid_argument("UserBanditAdapter: bad target user");
  if (arm_users_.empty()) throw std::invalid_argument("UserBanditAdapter: needs at least one arm user");
  for (int n : arm_users_) {
    if (n < 0 || n >= users) throw std::invalid_argument("UserBanditAdapter: bad arm user");
    if (n == target_) throw std::invalid_argument("UserBanditAdapter: arm user equals target");
  }

  const auto pr = preferences.row(static_cast<std::size_t>(target_));
  pref_row_.assign(pr.begin(), pr.end());

  const std::size_t arms = arm_users_.size() + 1;
  cdf_.resize(arms);
  means_.resize(arms);
  for (std::size_t k = 0; k < arms; ++k) {
    const int user = k == 0 ? target_ : arm_users_[k - 1];
    const auto policy = policies.row(static_cast<std::size_t>(user));
    auto& cdf = cdf_[k];
    cdf.resize(policy.size());
    double acc = 0.0;
    for (std::size_t a = 0; a < policy.size(); ++a) {
      acc += policy[a];
      cdf[a] = acc;
    }
    means_[k] = true_utility(policy, pref_row_);
  }
}

double UserBanditAdapter::pull(int arm, Rng& rng) {
  const auto& cdf = cdf_[static_cast<std::size_t>(arm)];
  const double u = rng.uniform01();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  std::size_t item = static_cast<std::size_t>(it - cdf.begin());
  if (item >= cdf.size()) item = cdf.size() - 1;  // guard against row-sum round-off
  return rng.bernoulli(pref_row_[item]) ? 1.0 : 0.0;
}

PolicyMatrix softmax_policies(const Matrix& scores, double inverse_temperature) {
  check_dims(scores, "softmax_policies");
  if (!std::isfinite(inverse_temperature) || inverse_temperature <= 0.0) {
    throw std::invalid_argument("softmax_policies: inverse_temperature must be positive and finite");
  }
  Matrix out(scores.rows, scores.cols);
  for (std::size_t r = 0; r < scores.rows; ++r) {
    const auto row = scores.row(r);
    double mx = row[0];
    for (double v : row) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("softmax_policies: non-finite score in row " + std::to_string(r));
      }
      mx = std::max(mx, v);
    }
    double z = 0.0;
    for (std::size_t c = 0; c < scores.cols; ++c) {
      const double e = std::exp(inverse_temperature * (row[c] - mx));
      out.at(r, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < scores.cols; ++c) out.at(r, c) /= z;
  }
  return PolicyMatrix(std::move(out));
}

PreferenceMatrix synthetic_lowrank(std::size_t users, std::size_t items, std::size_t rank,
                                   Rng& rng) {
  if (users == 0 || items == 0) throw std::invalid_argument("synthetic_lowrank: empty shape");
  if (rank < 1 || rank > std::min(users, items)) {
    throw std::invalid_argument("synthetic_lowrank: rank must be in [1, min(users, items)]");
  }
  Matrix w(users, rank), h(rank, items);
  for (double& v : w.data) v = rng.uniform01();
  for (double& v : h.data) v = rng.uniform01();
  Matrix p(users, items);
  double mx = 0.0;
  for (std::size_t m = 0; m < users; ++m) {
    for (std::size_t a = 0; a < items; ++a) {
      double acc = 0.0;
      for (std::size_t r = 0; r < rank; ++r) acc += w.at(m, r) * h.at(r, a);
      p.at(m, a) = acc;
      mx = std::max(mx, acc);
    }
  }
  if (mx > 0.0) {
    for (double& v : p.data) v /= mx;
  }
  return PreferenceMatrix(std::move(p));
}

PreferenceMatrix load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_matrix: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_matrix: " + path + ": empty file, missing header");
  if (line.rfind("item_0", 0) != 0) {
    throw std::runtime_error("load_matrix: " + path + ": first line is not an item_0,... header");
  }
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;

  std::vector<double> data;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() && in.eof()) break;
    std::size_t cells = 0;
    std::size_t pos = 0;
    while (true) {
      const std::size_t next = line.find(',', pos);
      const std::string cell = line.substr(pos, next == std::string::npos ? next : next - pos);
      ++cells;
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') {
        throw std::runtime_error("load_matrix: " + path + ": row " + std::to_string(rows) +
                                 " column " + std::to_string(cells - 1) + ": non-numeric cell '" +
                                 cell + "'");
      }
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw std::runtime_error("load_matrix: " + path + ": row " + std::to_string(rows) +
                                 " column " + std::to_string(cells - 1) + ": value " + cell +
                                 " outside [0,1]");
      }
      data.push_back(v);
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    if (cells != cols) {
      throw std::runtime_error("load_matrix: " + path + ": row " + std::to_string(rows) + " has " +
                               std::to_string(cells) + " cells, expected " + std::to_string(cols));
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("load_matrix: " + path + ": no data rows");
  Matrix m(rows, cols);
  m.data = std::move(data);
  return PreferenceMatrix(std::move(m));
}

void save_matrix(const Matrix& matrix, const std::string& path) {
  check_dims(matrix, "save_matrix");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_matrix: cannot open " + path);
  for (std::size_t c = 0; c < matrix.cols; ++c) {
    out << (c ? ",item_" : "item_") << c;
  }
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < matrix.rows; ++r) {
    for (std::size_t c = 0; c < matrix.cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", matrix.at(r, c));
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_matrix: write failed for " + path);
}

}  // namespace envyaudit::envs
