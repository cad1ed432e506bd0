#include "sled/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <stdexcept>

namespace sled {

void validate_world(const SyntheticWorld& world) {
  if (world.anchors.empty()) throw std::invalid_argument("world has no anchors");
  if (!(world.cell_radius > 0.0)) throw std::invalid_argument("cell_radius must be positive");
  if (world.objective_floor > world.objective_ceiling)
    throw std::invalid_argument("objective_floor exceeds objective_ceiling");

  const Mat& first = world.anchors.front().center;
  for (const SyntheticAnchor& anchor : world.anchors) {
    if (!anchor.center.same_shape(first))
      throw std::invalid_argument("anchor centers disagree on shape");
    for (double x : anchor.center.data) {
      if (!std::isfinite(x)) throw std::invalid_argument("anchor center has non-finite entry");
    }
  }

  for (size_t a = 0; a < world.anchors.size(); ++a) {
    for (size_t b = a + 1; b < world.anchors.size(); ++b) {
      double dist2 = 0.0;
      for (size_t k = 0; k < first.data.size(); ++k) {
        double diff = world.anchors[a].center.data[k] - world.anchors[b].center.data[k];
        dist2 += diff * diff;
      }
      if (std::sqrt(dist2) <= 2.0 * world.cell_radius)
        throw std::invalid_argument("anchor cells " + std::to_string(a) + " and " +
                                    std::to_string(b) + " overlap under the cell radius");
    }
  }

  std::set<int> seen;
  for (int idx : world.se_set) {
    if (idx < 0 || idx >= static_cast<int>(world.anchors.size()))
      throw std::invalid_argument("se_set index out of range: " + std::to_string(idx));
    if (!seen.insert(idx).second)
      throw std::invalid_argument("se_set has duplicate index " + std::to_string(idx));
  }
  if (world.success_anchor < 0 ||
      world.success_anchor >= static_cast<int>(world.anchors.size()))
    throw std::invalid_argument("success_anchor out of range");
  if (!seen.count(world.success_anchor))
    throw std::invalid_argument("success_anchor must be in se_set");
}

std::string synthetic_decode(const SyntheticWorld& world, const LatentRep& z) {
  const Mat& first = world.anchors.front().center;
  if (!z.values.same_shape(first))
    throw std::invalid_argument("latent shape " + std::to_string(z.token_count()) + "x" +
                                std::to_string(z.hidden_dim()) +
                                " does not match world anchors");
  int best = 0;
  double best_dist2 = std::numeric_limits<double>::infinity();
  for (size_t a = 0; a < world.anchors.size(); ++a) {
    double dist2 = 0.0;
    for (size_t k = 0; k < first.data.size(); ++k) {
      double diff = z.values.data[k] - world.anchors[a].center.data[k];
      dist2 += diff * diff;
    }
    if (dist2 < best_dist2) {
      best_dist2 = dist2;
      best = static_cast<int>(a);
    }
  }
  return world.anchors[static_cast<size_t>(best)].prompt;
}

double synthetic_objective(const SyntheticWorld& world, const std::string& prompt) {
  auto tier = world.tier_table.find(prompt);
  if (tier != world.tier_table.end()) return tier->second;
  if (prompt == world.anchors[static_cast<size_t>(world.success_anchor)].prompt)
    return world.objective_floor;
  return world.objective_ceiling;
}

int synthetic_se_check(const SyntheticWorld& world, const std::string& x0,
                       const std::string& x) {
  if (x == x0) return 1;
  for (int idx : world.se_set) {
    if (world.anchors[static_cast<size_t>(idx)].prompt == x) return 1;
  }
  return 0;
}

OracleBundle make_world_bundle(const SyntheticWorld& world, const std::string& x0) {
  validate_world(world);
  auto w = std::make_shared<const SyntheticWorld>(world);
  std::string success_prompt = w->anchors[static_cast<size_t>(w->success_anchor)].prompt;

  OracleBundle bundle;
  bundle.layer = w->layer;
  bundle.hidden_dim = w->anchors.front().center.cols;
  for (EndpointInfo* info : {&bundle.encoder_info, &bundle.decoder_info, &bundle.target_info,
                             &bundle.judge_info, &bundle.se_checker_info,
                             &bundle.sc_checker_info, &bundle.grad_info}) {
    info->kind = oracle_kind::synthetic;
  }
  bundle.encoder_info.name = "synthetic:encode";
  bundle.decoder_info.name = "synthetic:decode";
  bundle.target_info.name = "synthetic:target";
  bundle.judge_info.name = "synthetic:judge";
  bundle.se_checker_info.name = "synthetic:se";
  bundle.sc_checker_info.name = "synthetic:sc";
  bundle.grad_info.name = "synthetic:grad";

  bundle.encode = [w](const std::string& prompt) -> LatentRep {
    for (const SyntheticAnchor& anchor : w->anchors) {
      if (anchor.prompt == prompt) return make_latent(anchor.center, w->layer);
    }
    throw oracle_error(oracle_fault::unavailable,
                       "synthetic encoder knows no prompt '" + prompt + "'");
  };
  bundle.decode = [w](const LatentRep& z) { return synthetic_decode(*w, z); };
  bundle.objective = [w](const std::string& prompt) { return synthetic_objective(*w, prompt); };
  double global_min = world.objective_floor;
  for (const auto& [prompt, value] : world.tier_table) global_min = std::min(global_min, value);
  bundle.respond = [w, global_min](const std::string& prompt) -> std::string {
    return synthetic_objective(*w, prompt) <= global_min ? "hallucinated response"
                                                         : "faithful response";
  };
  bundle.se_check = [w, x0](const QuestionRecord&, const std::string& x) {
    return SeVerdict{synthetic_se_check(*w, x0, x), false};
  };
  bundle.sc_check = [](const std::string&) { return 1; };
  bundle.judge_weight = [](const std::string&, const std::string& response) {
    return response == "hallucinated response" ? 1.0 : 0.0;
  };
  // Exact gradient of a piecewise-constant landscape: zero almost everywhere.
  bundle.grad = [](const std::vector<double>& delta) {
    return std::vector<double>(delta.size(), 0.0);
  };
  bundle.ppl = [](const std::string&) { return 10.0; };
  return bundle;
}

namespace {

Mat point2(double x, double y) {
  Mat m(1, 2);
  m(0, 0) = x;
  m(0, 1) = y;
  return m;
}

QuestionRecord scenario_question(const std::string& prompt) {
  QuestionRecord record;
  record.question_id = "synthetic-0";
  record.subject = "CS";
  record.question = prompt;
  record.choices = {"alpha", "beta", "gamma", "delta"};
  record.answer_index = 0;
  return record;
}

EditDictionary dictionary_toward(const SyntheticWorld& world, const Mat& z0,
                                 const std::vector<Mat>& tips) {
  LatentRep base = make_latent(z0, world.layer);
  std::vector<std::pair<std::string, LatentRep>> concepts;
  std::vector<std::string> rephrasings;
  for (size_t i = 0; i < tips.size(); ++i) {
    concepts.emplace_back("concept_" + std::to_string(i), make_latent(tips[i], world.layer));
    rephrasings.push_back("rephrasing " + std::to_string(i) + "?");
  }
  return assemble_dictionary(base, concepts, rephrasings, world.layer);
}

} // namespace

SyntheticScenario make_flat_grid_scenario() {
  SyntheticScenario scenario;
  SyntheticWorld& world = scenario.world;
  world.cell_radius = 0.1;
  world.layer = 0;
  world.objective_floor = 0.0;
  world.objective_ceiling = 1.0;

  // 5x5 grid over [0,1]^2, spacing 0.25. Anchor (0,0) is the original prompt.
  for (int gx = 0; gx <= 4; ++gx) {
    for (int gy = 0; gy <= 4; ++gy) {
      SyntheticAnchor anchor;
      anchor.prompt = "cell " + std::to_string(gx) + "," + std::to_string(gy);
      anchor.center = point2(0.25 * gx, 0.25 * gy);
      world.anchors.push_back(std::move(anchor));
    }
  }
  for (int i = 0; i < static_cast<int>(world.anchors.size()); ++i) world.se_set.push_back(i);

  // Success cell at (0.5, 0.25): inside the reachable hull, not on any
  // single-concept vertex, so only the noise walk can reach it.
  int success = 2 * 5 + 1;
  world.success_anchor = success;
  validate_world(world);

  std::vector<Mat> tips = {
      point2(0.25, 0.0), point2(0.5, 0.0),  point2(0.75, 0.0), point2(1.0, 0.0),
      point2(0.0, 0.25), point2(0.0, 0.5),  point2(0.0, 0.75), point2(0.0, 1.0),
      point2(0.25, 0.5), point2(0.75, 0.25),
  };
  scenario.dictionary = dictionary_toward(world, point2(0.0, 0.0), tips);
  scenario.x0 = scenario_question(world.anchors[0].prompt);
  return scenario;
}

SyntheticScenario make_safeguard_scenario() {
  SyntheticScenario scenario;
  SyntheticWorld& world = scenario.world;
  world.cell_radius = 0.2;
  world.layer = 0;
  // Flat everywhere; the only low value sits in the tier table on a cell the
  // SE checker rejects.
  world.objective_floor = 1.0;
  world.objective_ceiling = 1.0;

  for (int gx = 0; gx <= 2; ++gx) {
    for (int gy = 0; gy <= 2; ++gy) {
      SyntheticAnchor anchor;
      anchor.prompt = "cell " + std::to_string(gx) + "," + std::to_string(gy);
      anchor.center = point2(0.5 * gx, 0.5 * gy);
      world.anchors.push_back(std::move(anchor));
    }
  }
  int trap = 1 * 3 + 1;  // center cell (0.5, 0.5)
  scenario.trap_prompt = world.anchors[static_cast<size_t>(trap)].prompt;
  world.tier_table[scenario.trap_prompt] = 0.0;
  for (int i = 0; i < static_cast<int>(world.anchors.size()); ++i) {
    if (i != trap) world.se_set.push_back(i);
  }
  world.success_anchor = 0;
  validate_world(world);

  // The trap tip itself is a dictionary direction: the engine gets handed the
  // low-objective cell directly and must still refuse it.
  std::vector<Mat> tips = {
      point2(0.5, 0.5), point2(1.0, 0.0), point2(0.0, 1.0), point2(0.5, 0.0),
  };
  scenario.dictionary = dictionary_toward(world, point2(0.0, 0.0), tips);
  scenario.x0 = scenario_question(world.anchors[0].prompt);
  return scenario;
}

SyntheticScenario make_vulnerable_scenario(int n_concepts) {
  if (n_concepts < 2) throw std::invalid_argument("vulnerable scenario needs >= 2 concepts");
  SyntheticScenario scenario;
  SyntheticWorld& world = scenario.world;
  world.cell_radius = 0.05;
  world.layer = 0;
  world.objective_floor = 0.0;
  world.objective_ceiling = 1.0;

  SyntheticAnchor origin;
  origin.prompt = "the original question";
  origin.center = point2(0.0, 0.0);
  world.anchors.push_back(std::move(origin));

  std::vector<Mat> tips;
  const double pi = 3.14159265358979323846;
  for (int i = 0; i < n_concepts; ++i) {
    double angle = (pi / 2.0) * (static_cast<double>(i) / (n_concepts - 1));
    Mat tip = point2(0.8 * std::cos(angle), 0.8 * std::sin(angle));
    SyntheticAnchor anchor;
    anchor.prompt = "vertex " + std::to_string(i);
    anchor.center = tip;
    world.anchors.push_back(std::move(anchor));
    tips.push_back(tip);
  }
  for (int i = 0; i < static_cast<int>(world.anchors.size()); ++i) world.se_set.push_back(i);
  scenario.planted_concept = 1;
  world.success_anchor = 1 + scenario.planted_concept;
  validate_world(world);

  scenario.dictionary = dictionary_toward(world, point2(0.0, 0.0), tips);
  scenario.x0 = scenario_question(world.anchors[0].prompt);
  return scenario;
}

} // namespace sled
