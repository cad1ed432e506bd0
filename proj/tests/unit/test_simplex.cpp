#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "sled/common.hpp"
#include "sled/simplex.hpp"

namespace {

// Independent projection oracle: enumerate every candidate support set and,
// for each, both KKT cases (mass constraint active or slack). Every feasible
// candidate is scored by squared distance and the argmin wins. Exponential in
// n, so only usable for small instances, which is exactly what makes it a
// trustworthy cross-check for the sorting implementation.
std::vector<double> qp_oracle_project(const std::vector<double>& v, double budget) {
  const size_t n = v.size();
  std::vector<double> best;
  double best_dist = std::numeric_limits<double>::infinity();

  auto consider = [&](const std::vector<double>& w) {
    double mass = 0.0;
    for (double x : w) {
      if (x < 0.0) return;
      mass += x;
    }
    if (mass > budget + 1e-12) return;
    double d = 0.0;
    for (size_t i = 0; i < n; ++i) d += (w[i] - v[i]) * (w[i] - v[i]);
    if (d < best_dist) {
      best_dist = d;
      best = w;
    }
  };

  for (size_t mask = 0; mask < (size_t{1} << n); ++mask) {
    std::vector<size_t> support;
    for (size_t i = 0; i < n; ++i)
      if (mask & (size_t{1} << i)) support.push_back(i);

    // Case 1: mass constraint slack, w = v on the support.
    std::vector<double> w(n, 0.0);
    for (size_t i : support) w[i] = v[i];
    consider(w);

    // Case 2: mass constraint active, uniform shift theta on the support.
    if (!support.empty()) {
      double s = 0.0;
      for (size_t i : support) s += v[i];
      double theta = (s - budget) / static_cast<double>(support.size());
      std::vector<double> wa(n, 0.0);
      for (size_t i : support) wa[i] = v[i] - theta;
      consider(wa);
    }
  }
  REQUIRE(!best.empty());
  return best;
}

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

}  // namespace

TEST_CASE("project_simplex: frozen examples") {
  SUBCASE("already feasible point is returned unchanged") {
    auto out = sled::project_simplex({0.5, 0.3}, 1.0);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == 0.5);
    CHECK(out[1] == 0.3);
  }
  SUBCASE("single positive coordinate clamps to budget") {
    auto out = sled::project_simplex({2.0, 0.0, 0.0}, 1.0);
    CHECK(std::abs(out[0] - 1.0) <= 1e-12);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 0.0);
  }
  SUBCASE("two-coordinate thresholding, value frozen from the QP oracle") {
    // qp_oracle_project({0.8, 0.6}, 1.0) = {0.6, 0.4}: support {0,1},
    // theta = (1.4 - 1.0)/2 = 0.2.
    auto out = sled::project_simplex({0.8, 0.6}, 1.0);
    CHECK(std::abs(out[0] - 0.6) <= 1e-9);
    CHECK(std::abs(out[1] - 0.4) <= 1e-9);
    auto oracle = qp_oracle_project({0.8, 0.6}, 1.0);
    CHECK(std::abs(oracle[0] - 0.6) <= 1e-12);
    CHECK(std::abs(oracle[1] - 0.4) <= 1e-12);
  }
}

TEST_CASE("project_simplex: input validation") {
  CHECK_THROWS_AS(sled::project_simplex({}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(sled::project_simplex({0.1}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(sled::project_simplex({0.1}, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(
      sled::project_simplex({std::numeric_limits<double>::quiet_NaN()}, 1.0),
      std::invalid_argument);
  CHECK_THROWS_AS(
      sled::project_simplex({std::numeric_limits<double>::infinity(), 0.0}, 1.0),
      std::invalid_argument);
}

TEST_CASE("is_feasible: frozen examples") {
  CHECK(sled::is_feasible({0.0, 0.0}, 1.0, 0.0));
  CHECK_FALSE(sled::is_feasible({-1e-3, 0.5}, 1.0, 0.0));
  CHECK_FALSE(sled::is_feasible({0.7, 0.4}, 1.0, 1e-9));
  CHECK(sled::is_feasible({0.7, 0.3}, 1.0, 1e-9));
  CHECK(sled::is_feasible({-1e-10, 0.5}, 1.0, 1e-9));
}

TEST_CASE("project_simplex: idempotent bit-for-bit") {
  sled::Rng rng = sled::make_rng(101);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  std::uniform_int_distribution<int> dim(1, 20);
  std::uniform_real_distribution<double> bud(0.05, 3.0);
  for (int trial = 0; trial < 10000; ++trial) {
    int n = dim(rng);
    double budget = bud(rng);
    std::vector<double> v(n);
    for (double& x : v) x = coord(rng);
    auto once = sled::project_simplex(v, budget);
    auto twice = sled::project_simplex(once, budget);
    REQUIRE(once.size() == twice.size());
    for (size_t i = 0; i < once.size(); ++i) REQUIRE(once[i] == twice[i]);
  }
}

TEST_CASE("project_simplex: output always feasible") {
  sled::Rng rng = sled::make_rng(202);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  std::uniform_int_distribution<int> dim(1, 20);
  for (int trial = 0; trial < 10000; ++trial) {
    int n = dim(rng);
    std::vector<double> v(n);
    for (double& x : v) x = coord(rng);
    auto out = sled::project_simplex(v, 1.0);
    REQUIRE(sled::is_feasible(out, 1.0, 1e-9));
  }
}

TEST_CASE("project_simplex: no feasible point is closer") {
  sled::Rng rng = sled::make_rng(303);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 10);
  for (int outer = 0; outer < 50; ++outer) {
    int n = dim(rng);
    std::vector<double> v(n);
    for (double& x : v) x = coord(rng);
    auto proj = sled::project_simplex(v, 1.0);
    double proj_d = std::sqrt(dist2(proj, v));
    for (int inner = 0; inner < 1000; ++inner) {
      // Random feasible point: nonnegative draw rescaled to a random mass.
      std::vector<double> w(n);
      double s = 0.0;
      for (double& x : w) {
        x = unit(rng);
        s += x;
      }
      double target_mass = unit(rng);
      if (s > 0.0)
        for (double& x : w) x *= target_mass / s;
      REQUIRE(sled::is_feasible(w, 1.0, 1e-9));
      double w_d = std::sqrt(dist2(w, v));
      REQUIRE(proj_d <= w_d + 1e-8);
    }
  }
}

TEST_CASE("project_simplex: matches the enumeration oracle") {
  sled::Rng rng = sled::make_rng(404);
  std::uniform_real_distribution<double> coord(-3.0, 3.0);
  std::uniform_int_distribution<int> dim(1, 4);
  std::uniform_real_distribution<double> bud(0.1, 2.5);
  for (int trial = 0; trial < 500; ++trial) {
    int n = dim(rng);
    double budget = bud(rng);
    std::vector<double> v(n);
    for (double& x : v) x = coord(rng);
    auto fast = sled::project_simplex(v, budget);
    auto slow = qp_oracle_project(v, budget);
    REQUIRE(fast.size() == slow.size());
    for (size_t i = 0; i < fast.size(); ++i) {
      CAPTURE(trial);
      CAPTURE(i);
      REQUIRE(std::abs(fast[i] - slow[i]) <= 1e-7);
    }
  }
}

TEST_CASE("make_edit_strength enforces the simplex invariants") {
  auto ok = sled::make_edit_strength({0.4, 0.2}, 1.0);
  CHECK(ok.budget == 1.0);
  CHECK(ok.coefficients.size() == 2);
  CHECK_THROWS_AS(sled::make_edit_strength({0.8, 0.6}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(sled::make_edit_strength({-0.1, 0.2}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(sled::make_edit_strength({}, 1.0), std::invalid_argument);
}
