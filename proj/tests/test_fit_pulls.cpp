// Fit pulls over 50 independent closed loops follow a unit normal (slow).

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "commands.hpp"

using namespace levent;

namespace {

// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
double ks_normal_pvalue(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = 0.5 * std::erfc(-x[i] / std::sqrt(2.0));
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double q = 0.0;
  for (int k = 1; k <= 100; ++k) q += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(q, 0.0, 1.0);
}

}  // namespace

TEST_CASE("ks helper: uniform quantiles of a normal pass, a shifted sample fails") {
  std::vector<double> good, bad;
  for (int i = 0; i < 50; ++i) {
    const double u = (i + 0.5) / 50.0;
    // Inverse normal CDF by bisection on erfc.
    double lo = -10, hi = 10;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (0.5 * std::erfc(-mid / std::sqrt(2.0)) < u ? lo : hi) = mid;
    }
    good.push_back(lo);
    bad.push_back(lo + 1.0);
  }
  CHECK(ks_normal_pvalue(good) > 0.9);
  CHECK(ks_normal_pvalue(bad) < 1e-3);
}

TEST_CASE("fit pulls over 50 seeds are consistent with a unit normal") {
  const char* names[] = {"omega_x", "omega_y", "heating_x", "heating_y", "g_a", "g_b"};
  std::map<std::string, std::vector<double>> pulls;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    cli::ClosedLoopOptions o;
    o.segments = 2000;
    o.seed = seed;
    o.workers = cli::worker_count();
    std::optional<cli::StageError> err;
    const nlohmann::json r = cli::closed_loop(SystemParams::best_dataset(), o, err);
    REQUIRE(!err);
    for (const char* n : names) pulls[n].push_back(r.at("fit").at("pulls").at(n).get<double>());
  }
  for (const char* n : names) {
    const double p = ks_normal_pvalue(pulls[n]);
    MESSAGE(std::string(n) << ": KS p-value " << p);
    CHECK(p > 0.01);
  }
}
