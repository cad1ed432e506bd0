#pragma once

#include <map>
#include <string>
#include <vector>

#include "sled/dictionary.hpp"
#include "sled/oracles.hpp"

namespace sled {

// A quantized decoder world: latent space is carved into anchor cells and
// every point decodes to the prompt of its nearest anchor, which makes the
// attack objective piecewise flat. All operations are pure, so tests can
// brute-force them.
struct SyntheticAnchor {
  std::string prompt;
  Mat center;
};

struct SyntheticWorld {
  std::vector<SyntheticAnchor> anchors;
  double cell_radius = 0.1;
  std::vector<int> se_set;  // anchor indices judged equivalent to x0
  int success_anchor = 0;
  double objective_floor = 0.0;
  double objective_ceiling = 1.0;
  // Optional shaping: prompt -> objective value, looked up before the
  // floor/ceiling rule.
  std::map<std::string, double> tier_table;
  int layer = 0;
};

// Checks anchor shape consistency, pairwise cell disjointness under
// cell_radius, and success_anchor membership in se_set.
void validate_world(const SyntheticWorld& world);

std::string synthetic_decode(const SyntheticWorld& world, const LatentRep& z);
double synthetic_objective(const SyntheticWorld& world, const std::string& prompt);
int synthetic_se_check(const SyntheticWorld& world, const std::string& x0,
                       const std::string& x);

// Wires a bundle whose roles all close over one world. x0 is the original
// prompt text SE checks compare against.
OracleBundle make_world_bundle(const SyntheticWorld& world, const std::string& x0);

// A world, the dictionary whose directions live in it, and the original
// prompt, packaged for engine tests and the campaign's synthetic mode.
struct SyntheticScenario {
  SyntheticWorld world;
  EditDictionary dictionary;
  QuestionRecord x0;
  int planted_concept = -1;  // index whose vertex is the planted optimum, -1 if none
  std::string trap_prompt;   // low-objective non-equivalent prompt, "" if none
};

// Piecewise-flat grid world with the success cell away from every
// single-concept vertex; reaching it takes stochastic exploration.
SyntheticScenario make_flat_grid_scenario();

// Flat world whose only low-objective cell is not semantically equivalent;
// the safeguard must keep delta_best away from it.
SyntheticScenario make_safeguard_scenario();

// World with the planted minimum exactly at the vertex of one concept, so
// single-concept initialization already finds it.
SyntheticScenario make_vulnerable_scenario(int n_concepts);

} // namespace sled
