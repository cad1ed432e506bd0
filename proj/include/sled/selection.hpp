#pragma once

#include <array>
#include <string>
#include <vector>

#include "sled/common.hpp"

namespace sled {

struct ConceptEntry {
  std::string keyword;
  std::vector<double> embedding;  // unit l2 norm
  bool style_flag = false;
};

struct ConceptPool {
  std::vector<ConceptEntry> entries;
  std::string source;
};

// Validates unit-norm embeddings (within 1e-6), consistent dimensions, and
// keyword uniqueness after case-folding. Throws std::invalid_argument.
void validate_pool(const ConceptPool& pool);

// When the pool exceeds m_max, keeps only style-flagged entries (they mark
// writing-style or abstract-characteristic adjectives, the ones usable as
// rewrite operators). Returns indices into the original pool, original order.
std::vector<int> prefilter_pool(const ConceptPool& pool, int m_max);

struct SelectionProblem {
  Mat S;                  // M x M gram matrix of concept embeddings
  std::vector<double> r;  // relevance of each concept to the prompt
  std::vector<double> e;  // editability scores (1..5 scale)
  int K = 0;
  double R_min = 0.0;
  double E_min = 0.0;
};

struct PenaltyState {
  std::array<double, 3> lambdas{10.0, 10.0, 10.0};
  std::array<double, 3> tolerances{0.5, 1e-3, 1e-3};
  double lambda_min = 1e-6;
  double lambda_max = 1e8;
};

struct Violations {
  double v1 = 0.0;  // 1'u - K, signed
  double v2 = 0.0;  // max(R_min - r'u, 0)
  double v3 = 0.0;  // max(E_min - e'u, 0)
  double max_violation() const;
};

struct SelectionConfig {
  double learning_rate = 0.05;
  // Step size at iteration k is learning_rate / (1 + lr_decay * k); the decay
  // quiets the late-phase chatter the adaptive penalties otherwise feed.
  double lr_decay = 0.05;
  int max_iters = 500;
  double g_tol = 1e-4;
  double lambda_init = 10.0;
  double tau1 = 0.5;
  double tau2 = 1e-3;
  double tau3 = 1e-3;
  double lambda_min = 1e-6;
  double lambda_max = 1e8;
  double threshold_fraction = 0.85;
};

struct SelectionIterate {
  double objective = 0.0;
  double max_violation = 0.0;
};

struct SelectionResult {
  std::vector<int> chosen;        // K indices, ascending
  std::vector<double> final_u;    // the iterate the indices were taken from
  std::vector<SelectionIterate> trace;
  bool converged = false;         // false means max-iters fallback fired
  int iterations = 0;
};

// S = gram matrix of pool embeddings; r_i = <embedding_i, prompt_embedding>;
// R_min / E_min = threshold_fraction times the sum of the K largest entries
// of r / e respectively.
SelectionProblem build_selection_problem(const ConceptPool& pool,
                                         const std::vector<double>& prompt_embedding,
                                         const std::vector<double>& editability, int K,
                                         double threshold_fraction);

std::pair<double, Violations> relaxed_objective(const std::vector<double>& u,
                                                const SelectionProblem& problem,
                                                const PenaltyState& penalties);

PenaltyState update_penalties(const PenaltyState& penalties, const Violations& violations);

SelectionResult select_concepts(const SelectionProblem& problem, const SelectionConfig& config,
                                std::uint64_t rng_seed);

// Indices of the K largest entries, ties broken by lower index; result sorted
// ascending.
std::vector<int> top_k_indices(const std::vector<double>& values, int k);

}  // namespace sled
