#pragma once
/*
 * Confidence-sequence mathematics shared by the certification loop.
 *
 * Anytime radius for an arm with N pulls of sigma-subgaussian rewards, valid
 * simultaneously over all N (iterated-logarithm construction):
 *
 *   theta(w, d) = log(1+w) * (w d / (2(2+w)))^(1/(1+w))
 *   beta(N)     = sqrt( 2 s^2 (1+sqrt(w))^2 (1+w) / N
 *                       * log( 2(K+1)/theta * log((1+w) N) ) )
 *
 * Martingale bound on the summed deviation of h exploration rewards
 * (Freedman-style):
 *
 *   phi(h) = s * sqrt(2 h log(6 h^2 / d)) + (2/3) log(6 h^2 / d)
 *
 * Conservative budget bound combining the two:
 *
 *   Phi = min( sum_{k>=1} beta_k N_k , phi(sum_{k>=1} N_k) )
 *
 * Conventions: an arm with 0 pulls has empirical mean 0 and a sentinel radius
 * strictly larger than the 1-pull radius; phi(0) = 0.
 */
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>

namespace envyaudit::bounds {

struct BoundParams {
  double delta{0.05};  // failure probability, in (0,1)
  double omega{0.99};  // radius shape parameter, in (0,1]
  double sigma{0.5};   // subgaussian proxy; 1/2 for rewards in [0,1]
  int num_arms_k{1};   // non-baseline arm count K, >= 1
};

// Throws std::domain_error on any out-of-range field.
void validate(const BoundParams& params);

struct ArmStats {
  std::int64_t pulls{0};
  double reward_sum{0.0};

  double empirical_mean() const {
    return pulls > 0 ? reward_sum / static_cast<double>(pulls) : 0.0;
  }
};

struct ConfidenceInterval {
  double lower{0.0};
  double upper{1.0};
  double radius{0.0};  // unclipped beta
};

double theta(double omega, double delta);

namespace detail {
// The iterated log is positive for omega >= 0.5 and N >= 1; the clamp only
// keeps the radius finite outside that regime.
inline double log_pos(double x) {
  return std::log(std::max(x, std::numeric_limits<double>::min()));
}
}  // namespace detail

// Constants of the radius formula that do not depend on the pull count,
// precomputed once so the per-step evaluation is two logs and a sqrt.
struct RadiusFactors {
  double scale{0.0};       // 2 s^2 (1+sqrt(w))^2 (1+w)
  double arm_factor{0.0};  // 2 (K+1) / theta
  double one_plus_omega{2.0};
};

RadiusFactors radius_factors(const BoundParams& params);

inline double lil_radius(std::int64_t pulls, const RadiusFactors& f) {
  if (pulls <= 0) return lil_radius(1, f) + 1.0;
  const double n = static_cast<double>(pulls);
  const double body = detail::log_pos(f.arm_factor * detail::log_pos(f.one_plus_omega * n));
  return std::sqrt(f.scale / n * body);
}

double lil_radius(const ArmStats& stats, const BoundParams& params);

inline double freedman_phi(std::int64_t history_size, double delta, double sigma) {
  if (history_size <= 0) return 0.0;
  const double h = static_cast<double>(history_size);
  const double level = std::log(6.0 * h * h / delta);
  return sigma * std::sqrt(2.0 * h * level) + 2.0 / 3.0 * level;
}

ConfidenceInterval confidence_interval(const ArmStats& stats, const BoundParams& params,
                                       bool clip = true);

// Phi over the non-baseline arms (stats for arms 1..K).
double conservative_budget_bound(std::span<const ArmStats> explore_arms,
                                 const BoundParams& params);

}  // namespace envyaudit::bounds
