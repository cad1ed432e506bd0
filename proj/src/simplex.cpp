#include "sled/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sled {

namespace {

void check_input(const std::vector<double>& v, double budget, const char* who) {
  if (v.empty())
    throw std::invalid_argument(std::string(who) + ": zero-length vector");
  if (!std::isfinite(budget) || budget <= 0.0)
    throw std::invalid_argument(std::string(who) + ": budget must be a positive finite real, got " +
                                std::to_string(budget));
  for (size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]))
      throw std::invalid_argument(std::string(who) + ": non-finite value at index " +
                                  std::to_string(i));
  }
}

}  // namespace

double l1_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

std::vector<double> project_simplex(const std::vector<double>& v, double budget) {
  check_input(v, budget, "project_simplex");

  std::vector<double> w(v.size());
  double mass = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    w[i] = std::max(v[i], 0.0);
    mass += w[i];
  }
  if (mass <= budget + kFeasTol) return w;

  // Find the threshold theta such that sum_i max(w_i - theta, 0) = budget.
  std::vector<double> sorted = w;
  std::stable_sort(sorted.begin(), sorted.end(), std::greater<double>());
  double prefix = 0.0;
  double theta = 0.0;
  for (size_t j = 0; j < sorted.size(); ++j) {
    prefix += sorted[j];
    double candidate = (prefix - budget) / static_cast<double>(j + 1);
    if (j + 1 == sorted.size() || sorted[j + 1] <= candidate) {
      theta = candidate;
      break;
    }
  }
  for (double& x : w) x = std::max(x - theta, 0.0);
  return w;
}

bool is_feasible(const std::vector<double>& v, double budget, double tol) {
  check_input(v, budget, "is_feasible");
  if (tol < 0.0) throw std::invalid_argument("is_feasible: tol must be nonnegative");
  double mass = 0.0;
  for (double x : v) {
    if (x < -tol) return false;
    mass += std::abs(x);
  }
  return mass <= budget + tol;
}

EditStrength make_edit_strength(std::vector<double> coefficients, double budget) {
  if (!is_feasible(coefficients, budget, kFeasTol))
    throw std::invalid_argument("make_edit_strength: coefficients violate the simplex constraint");
  return EditStrength{std::move(coefficients), budget};
}

}  // namespace sled
