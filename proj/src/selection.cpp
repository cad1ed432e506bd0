#include "sled/selection.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace sled {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

double top_k_sum(std::vector<double> v, int k) {
  std::stable_sort(v.begin(), v.end(), std::greater<double>());
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += v[i];
  return s;
}

}  // namespace

double Violations::max_violation() const { return std::max({std::abs(v1), v2, v3}); }

void validate_pool(const ConceptPool& pool) {
  if (pool.entries.empty()) throw std::invalid_argument("concept pool is empty");
  size_t dim = pool.entries.front().embedding.size();
  std::set<std::string> seen;
  for (const auto& entry : pool.entries) {
    if (entry.embedding.size() != dim)
      throw std::invalid_argument("concept pool: inconsistent embedding dim for keyword '" +
                                  entry.keyword + "'");
    double norm = std::sqrt(dot(entry.embedding, entry.embedding));
    if (std::abs(norm - 1.0) > 1e-6)
      throw std::invalid_argument("concept pool: embedding for '" + entry.keyword +
                                  "' is not unit norm (|x|=" + std::to_string(norm) + ")");
    std::string folded = entry.keyword;
    std::transform(folded.begin(), folded.end(), folded.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (!seen.insert(folded).second)
      throw std::invalid_argument("concept pool: duplicate keyword '" + entry.keyword +
                                  "' after case folding");
  }
}

std::vector<int> prefilter_pool(const ConceptPool& pool, int m_max) {
  std::vector<int> kept;
  if (static_cast<int>(pool.entries.size()) <= m_max) {
    kept.resize(pool.entries.size());
    std::iota(kept.begin(), kept.end(), 0);
    return kept;
  }
  for (int i = 0; i < static_cast<int>(pool.entries.size()); ++i)
    if (pool.entries[i].style_flag) kept.push_back(i);
  return kept;
}

std::vector<int> top_k_indices(const std::vector<double>& values, int k) {
  if (k < 0 || k > static_cast<int>(values.size()))
    throw std::invalid_argument("top_k_indices: k out of range");
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values[a] > values[b]; });
  std::vector<int> chosen(order.begin(), order.begin() + k);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

SelectionProblem build_selection_problem(const ConceptPool& pool,
                                         const std::vector<double>& prompt_embedding,
                                         const std::vector<double>& editability, int K,
                                         double threshold_fraction) {
  validate_pool(pool);
  const int M = static_cast<int>(pool.entries.size());
  if (K <= 0 || K > M) throw std::invalid_argument("build_selection_problem: K out of range");
  if (threshold_fraction <= 0.0 || threshold_fraction > 1.0)
    throw std::invalid_argument("build_selection_problem: threshold_fraction must be in (0,1]");
  if (prompt_embedding.size() != pool.entries.front().embedding.size())
    throw std::invalid_argument("build_selection_problem: prompt embedding dim mismatch");
  if (editability.size() != static_cast<size_t>(M))
    throw std::invalid_argument("build_selection_problem: editability length mismatch");

  SelectionProblem p;
  p.S = Mat(M, M);
  for (int i = 0; i < M; ++i)
    for (int j = i; j < M; ++j) {
      double s = dot(pool.entries[i].embedding, pool.entries[j].embedding);
      p.S(i, j) = s;
      p.S(j, i) = s;
    }
  p.r.resize(M);
  for (int i = 0; i < M; ++i) p.r[i] = dot(pool.entries[i].embedding, prompt_embedding);
  p.e = editability;
  p.K = K;
  p.R_min = threshold_fraction * top_k_sum(p.r, K);
  p.E_min = threshold_fraction * top_k_sum(p.e, K);
  return p;
}

std::pair<double, Violations> relaxed_objective(const std::vector<double>& u,
                                                const SelectionProblem& problem,
                                                const PenaltyState& penalties) {
  const int M = problem.S.rows;
  if (static_cast<int>(u.size()) != M)
    throw std::invalid_argument("relaxed_objective: u length mismatch");

  double quad = 0.0;
  for (int i = 0; i < M; ++i) {
    double row = 0.0;
    for (int j = 0; j < M; ++j) row += problem.S(i, j) * u[j];
    quad += u[i] * row;
  }

  Violations v;
  double sum_u = std::accumulate(u.begin(), u.end(), 0.0);
  v.v1 = sum_u - problem.K;
  v.v2 = std::max(problem.R_min - dot(problem.r, u), 0.0);
  v.v3 = std::max(problem.E_min - dot(problem.e, u), 0.0);

  double value = quad + penalties.lambdas[0] * v.v1 * v.v1 +
                 penalties.lambdas[1] * v.v2 * v.v2 + penalties.lambdas[2] * v.v3 * v.v3;
  return {value, v};
}

PenaltyState update_penalties(const PenaltyState& penalties, const Violations& violations) {
  // v1 is the signed equality residual, so it trips the penalty on magnitude;
  // v2 and v3 are already hinge values.
  std::array<double, 3> v{std::abs(violations.v1), violations.v2, violations.v3};
  PenaltyState next = penalties;
  for (int i = 0; i < 3; ++i) {
    double factor = v[i] > penalties.tolerances[i] ? 1.25 : 0.95;
    next.lambdas[i] = clip(penalties.lambdas[i] * factor, penalties.lambda_min,
                           penalties.lambda_max);
  }
  return next;
}

SelectionResult select_concepts(const SelectionProblem& problem, const SelectionConfig& config,
                                std::uint64_t rng_seed) {
  const int M = problem.S.rows;
  if (M <= 0 || problem.S.cols != M)
    throw std::invalid_argument("select_concepts: S must be square and non-empty");
  if (problem.K <= 0 || problem.K > M)
    throw std::invalid_argument("select_concepts: K out of range");

  // Symmetrize defensively; file-ingested matrices may carry asymmetry noise.
  Mat S(M, M);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) S(i, j) = 0.5 * (problem.S(i, j) + problem.S(j, i));

  PenaltyState penalties;
  penalties.lambdas = {config.lambda_init, config.lambda_init, config.lambda_init};
  penalties.tolerances = {config.tau1, config.tau2, config.tau3};
  penalties.lambda_min = config.lambda_min;
  penalties.lambda_max = config.lambda_max;

  Rng rng = make_rng(rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> u(M);
  for (double& x : u) x = unit(rng);

  // Adam state.
  std::vector<double> m(M, 0.0), vv(M, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  SelectionResult result;
  // Fallback iterate for the max-iters path. Iterates are judged by what the
  // caller consumes, the rounded top-K set: binary threshold feasibility
  // first, then the binary diversity cost, then the smallest rounding
  // violation.
  std::vector<double> best_u = u;
  bool best_feasible = false;
  double best_quad = std::numeric_limits<double>::infinity();
  double best_binary_violation = std::numeric_limits<double>::infinity();
  bool converged = false;

  int k = 0;
  for (; k < config.max_iters; ++k) {
    std::vector<double> rows(M, 0.0);
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < M; ++j) rows[i] += S(i, j) * u[j];
    double quad = dot(u, rows);

    Violations viol;
    viol.v1 = std::accumulate(u.begin(), u.end(), 0.0) - problem.K;
    viol.v2 = std::max(problem.R_min - dot(problem.r, u), 0.0);
    viol.v3 = std::max(problem.E_min - dot(problem.e, u), 0.0);
    double mv = viol.max_violation();
    double value = quad + penalties.lambdas[0] * viol.v1 * viol.v1 +
                   penalties.lambdas[1] * viol.v2 * viol.v2 +
                   penalties.lambdas[2] * viol.v3 * viol.v3;
    result.trace.push_back({value, mv});

    bool within_tol = std::abs(viol.v1) < config.tau1 && viol.v2 < config.tau2 &&
                      viol.v3 < config.tau3;
    {
      std::vector<int> rounded = top_k_indices(u, problem.K);
      double rsum = 0.0, esum = 0.0, bquad = 0.0;
      for (int a : rounded) {
        rsum += problem.r[a];
        esum += problem.e[a];
        for (int b : rounded) bquad += S(a, b);
      }
      bool feasible = rsum >= problem.R_min && esum >= problem.E_min;
      double bviol = std::max({problem.R_min - rsum, problem.E_min - esum, 0.0});
      bool better = best_feasible ? (feasible && bquad < best_quad)
                                  : (feasible || bviol < best_binary_violation);
      if (better) {
        best_u = u;
        best_feasible = feasible;
        best_quad = bquad;
        best_binary_violation = bviol;
      }
    }

    std::vector<double> grad(M);
    for (int i = 0; i < M; ++i) grad[i] = 2.0 * rows[i];
    double c1 = 2.0 * penalties.lambdas[0] * viol.v1;
    for (int i = 0; i < M; ++i) grad[i] += c1;
    if (viol.v2 > 0.0) {
      double c2 = 2.0 * penalties.lambdas[1] * viol.v2;
      for (int i = 0; i < M; ++i) grad[i] -= c2 * problem.r[i];
    }
    if (viol.v3 > 0.0) {
      double c3 = 2.0 * penalties.lambdas[2] * viol.v3;
      for (int i = 0; i < M; ++i) grad[i] -= c3 * problem.e[i];
    }
    double gnorm = std::sqrt(dot(grad, grad));
    if (gnorm < config.g_tol && within_tol) {
      converged = true;
      break;
    }

    double lr = config.learning_rate / (1.0 + config.lr_decay * k);
    for (int i = 0; i < M; ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      vv[i] = beta2 * vv[i] + (1.0 - beta2) * grad[i] * grad[i];
      double mhat = m[i] / (1.0 - std::pow(beta1, k + 1));
      double vhat = vv[i] / (1.0 - std::pow(beta2, k + 1));
      u[i] = clip(u[i] - lr * mhat / (std::sqrt(vhat) + adam_eps), 0.0, 1.0);
    }
    penalties = update_penalties(penalties, viol);
  }

  result.converged = converged;
  result.iterations = converged ? k + 1 : k;
  result.final_u = converged ? u : best_u;
  result.chosen = top_k_indices(result.final_u, problem.K);
  return result;
}

}  // namespace sled
