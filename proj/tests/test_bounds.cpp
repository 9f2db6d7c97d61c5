#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "envyaudit/bounds.hpp"

using namespace envyaudit::bounds;

namespace {
// Shared parameter sets: the omega = 1 scheduling constants and the running
// omega = 0.99 example (both with nine non-baseline arms).
const BoundParams kOmegaOne{0.05, 1.0, 0.5, 9};
const BoundParams kRunning{0.05, 0.99, 0.5, 9};
}  // namespace

TEST_SUITE("bounds") {

TEST_CASE("theta matches the closed form") {
  CHECK_EQ(theta(1.0, 0.05), 0.06327539107729806);
  CHECK_EQ(theta(1.0, 0.05), std::log(2.0) * std::sqrt(0.05 / 6.0));
  CHECK_EQ(theta(0.99, 0.05), 0.06185773732980997);
  CHECK_EQ(theta(1.0, 0.1), 0.08948491622597644);
}

TEST_CASE("theta rejects out-of-range arguments") {
  CHECK_THROWS_AS(theta(0.0, 0.05), std::domain_error);
  CHECK_THROWS_AS(theta(-0.5, 0.05), std::domain_error);
  CHECK_THROWS_AS(theta(1.5, 0.05), std::domain_error);
  CHECK_THROWS_AS(theta(1.0, 0.0), std::domain_error);
  CHECK_THROWS_AS(theta(1.0, 1.0), std::domain_error);
}

TEST_CASE("validate rejects bad parameters") {
  CHECK_NOTHROW(validate(BoundParams{}));
  CHECK_THROWS_AS(validate(BoundParams{0.0, 0.99, 0.5, 1}), std::domain_error);
  CHECK_THROWS_AS(validate(BoundParams{1.0, 0.99, 0.5, 1}), std::domain_error);
  CHECK_THROWS_AS(validate(BoundParams{0.05, 0.0, 0.5, 1}), std::domain_error);
  CHECK_THROWS_AS(validate(BoundParams{0.05, 1.01, 0.5, 1}), std::domain_error);
  CHECK_THROWS_AS(validate(BoundParams{0.05, 0.99, -1.0, 1}), std::domain_error);
  CHECK_THROWS_AS(validate(BoundParams{0.05, 0.99, 0.5, 0}), std::domain_error);
}

TEST_CASE("one-pull radius and the zero-pull sentinel") {
  const double one_pull = lil_radius(ArmStats{1, 0.0}, kOmegaOne);
  CHECK_EQ(one_pull, 4.643049922171853);
  const double sentinel = lil_radius(ArmStats{0, 0.0}, kOmegaOne);
  CHECK_EQ(sentinel, 5.643049922171853);
  CHECK_EQ(sentinel, one_pull + 1.0);
}

TEST_CASE("radius is strictly decreasing in the pull count") {
  for (const BoundParams& p : {kOmegaOne, kRunning}) {
    const RadiusFactors f = radius_factors(p);
    double prev = lil_radius(0, f);
    for (std::int64_t n = 1; n <= 5000; ++n) {
      const double r = lil_radius(n, f);
      CHECK_LT(r, prev);
      prev = r;
    }
  }
}

TEST_CASE("radius values of the running example") {
  CHECK_EQ(lil_radius(ArmStats{2, 1.0}, kRunning), 3.4758481177705325);
  CHECK_EQ(lil_radius(ArmStats{10, 8.0}, kRunning), 1.6499153530502717);
}

TEST_CASE("martingale deviation bound") {
  CHECK_EQ(freedman_phi(0, 0.05, 0.5), 0.0);
  CHECK_EQ(freedman_phi(1, 0.05, 0.5), 4.7388346722894585);
  CHECK_EQ(freedman_phi(2, 0.05, 0.5), 6.600567869416677);
  double prev = 0.0;
  for (std::int64_t h = 1; h <= 1000; ++h) {
    const double v = freedman_phi(h, 0.05, 0.5);
    CHECK_GT(v, prev);
    prev = v;
  }
}

TEST_CASE("confidence interval endpoints and clipping") {
  const ArmStats two{2, 1.0};
  const double r = lil_radius(two, kRunning);

  const ConfidenceInterval clipped = confidence_interval(two, kRunning);
  CHECK_EQ(clipped.lower, 0.0);
  CHECK_EQ(clipped.upper, 1.0);
  CHECK_EQ(clipped.radius, r);

  const ConfidenceInterval raw = confidence_interval(two, kRunning, false);
  CHECK_EQ(raw.lower, 0.5 - r);
  CHECK_EQ(raw.upper, 0.5 + r);
  CHECK_EQ(raw.radius, r);
}

TEST_CASE("zero-pull interval spans everything") {
  const ArmStats none{0, 0.0};
  const double sentinel = lil_radius(none, kOmegaOne);

  const ConfidenceInterval clipped = confidence_interval(none, kOmegaOne);
  CHECK_EQ(clipped.lower, 0.0);
  CHECK_EQ(clipped.upper, 1.0);
  CHECK_EQ(clipped.radius, sentinel);

  const ConfidenceInterval raw = confidence_interval(none, kOmegaOne, false);
  CHECK_EQ(raw.lower, -sentinel);
  CHECK_EQ(raw.upper, sentinel);
}

TEST_CASE("conservative budget bound takes the smaller envelope") {
  const std::vector<ArmStats> one_pull{{1, 0.0}};
  CHECK_EQ(conservative_budget_bound(one_pull, kOmegaOne), 4.643049922171853);

  const std::vector<ArmStats> with_unpulled{{1, 0.0}, {0, 0.0}};
  CHECK_EQ(conservative_budget_bound(with_unpulled, kOmegaOne),
           conservative_budget_bound(one_pull, kOmegaOne));

  CHECK_EQ(conservative_budget_bound(std::vector<ArmStats>{}, kOmegaOne), 0.0);
  CHECK_EQ(conservative_budget_bound(std::vector<ArmStats>{{0, 0.0}}, kOmegaOne), 0.0);
}

TEST_CASE("conservative budget bound equals the direct formula") {
  const RadiusFactors f = radius_factors(kRunning);
  const std::vector<ArmStats> stats{{3, 2.0}, {0, 0.0}, {5, 1.0}, {17, 9.0}};
  double weighted = 0.0;
  std::int64_t total = 0;
  for (const ArmStats& s : stats) {
    if (s.pulls == 0) continue;
    weighted += lil_radius(s.pulls, f) * static_cast<double>(s.pulls);
    total += s.pulls;
  }
  const double expected =
      std::min(weighted, freedman_phi(total, kRunning.delta, kRunning.sigma));
  CHECK_EQ(conservative_budget_bound(stats, kRunning), expected);
}

TEST_CASE("budget bound is eventually the martingale envelope") {
  // With many pulls the per-arm radii sum grows like sqrt(n) per arm while
  // phi grows like sqrt(total); for one arm the weighted sum wins early and
  // phi wins late.
  const RadiusFactors f = radius_factors(kOmegaOne);
  std::vector<ArmStats> stats{{1, 0.0}};
  CHECK_EQ(conservative_budget_bound(stats, kOmegaOne),
           lil_radius(stats[0].pulls, f) * 1.0);
  stats[0].pulls = 100000;
  CHECK_EQ(conservative_budget_bound(stats, kOmegaOne),
           freedman_phi(100000, kOmegaOne.delta, kOmegaOne.sigma));
}

}  // TEST_SUITE
