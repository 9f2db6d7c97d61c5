#include "envyaudit/bounds.hpp"

#include <stdexcept>

namespace envyaudit::bounds {

void validate(const BoundParams& p) {
  if (!(p.delta > 0.0 && p.delta < 1.0)) throw std::domain_error("BoundParams: delta must be in (0,1)");
  if (!(p.omega > 0.0 && p.omega <= 1.0)) throw std::domain_error("BoundParams: omega must be in (0,1]");
  if (!(p.sigma >= 0.0) || !std::isfinite(p.sigma)) throw std::domain_error("BoundParams: sigma must be nonnegative");
  if (p.num_arms_k < 1) throw std::domain_error("BoundParams: num_arms_k must be >= 1");
}

double theta(double omega, double delta) {
  if (!(omega > 0.0 && omega <= 1.0)) throw std::domain_error("theta: omega must be in (0,1]");
  if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error("theta: delta must be in (0,1)");
  return std::log1p(omega) * std::pow(omega * delta / (2.0 * (2.0 + omega)), 1.0 / (1.0 + omega));
}

RadiusFactors radius_factors(const BoundParams& p) {
  validate(p);
  const double root = 1.0 + std::sqrt(p.omega);
  RadiusFactors f;
  f.scale = 2.0 * p.sigma * p.sigma * root * root * (1.0 + p.omega);
  f.arm_factor = 2.0 * (p.num_arms_k + 1) / theta(p.omega, p.delta);
  f.one_plus_omega = 1.0 + p.omega;
  return f;
}

double lil_radius(const ArmStats& stats, const BoundParams& params) {
  return lil_radius(stats.pulls, radius_factors(params));
}

ConfidenceInterval confidence_interval(const ArmStats& stats, const BoundParams& params,
                                       bool clip) {
  const double mean = stats.empirical_mean();
  const double radius = lil_radius(stats, params);
  ConfidenceInterval ci{mean - radius, mean + radius, radius};
  if (clip) {
    ci.lower = std::max(0.0, ci.lower);
    ci.upper = std::min(1.0, ci.upper);
  }
  return ci;
}

double conservative_budget_bound(std::span<const ArmStats> explore_arms,
                                 const BoundParams& params) {
  const RadiusFactors f = radius_factors(params);
  double weighted = 0.0;
  std::int64_t total = 0;
  for (const ArmStats& s : explore_arms) {
    if (s.pulls > 0) {
      weighted += lil_radius(s.pulls, f) * static_cast<double>(s.pulls);
      total += s.pulls;
    }
  }
  return std::min(weighted, freedman_phi(total, params.delta, params.sigma));
}

}  // namespace envyaudit::bounds
