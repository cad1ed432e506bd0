#pragma once

#include <vector>

#include "sled/common.hpp"

namespace sled {

// A point on the scaled simplex {delta >= 0 : ||delta||_1 <= budget},
// paired with the budget it was validated against.
struct EditStrength {
  std::vector<double> coefficients;
  double budget = 1.0;
};

// Validates the EditStrength invariants (nonnegativity, l1 mass within
// budget + kFeasTol). Throws std::invalid_argument on violation.
EditStrength make_edit_strength(std::vector<double> coefficients, double budget);

// Euclidean projection onto {w >= 0 : ||w||_1 <= budget}. Negatives are
// clamped first; if the clamped mass already fits the budget the clamped
// vector is returned as-is, otherwise the unique uniform threshold is
// subtracted and coordinates floored at zero so the output mass equals the
// budget. Input length is preserved.
std::vector<double> project_simplex(const std::vector<double>& v, double budget);

bool is_feasible(const std::vector<double>& v, double budget, double tol);

double l1_norm(const std::vector<double>& v);

}  // namespace sled
