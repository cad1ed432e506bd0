#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <sled/attack.hpp>
#include <sled/dataset.hpp>
#include <sled/dictionary.hpp>
#include <sled/evaluation.hpp>
#include <sled/oracles.hpp>

namespace sled {

// Everything a campaign run depends on. Fields that cannot change the
// produced artifacts (workers, resume, out_dir) stay out of the config hash.
struct RunConfig {
  std::filesystem::path dataset_path;
  std::filesystem::path out_dir;
  std::string oracle_bundle = "synthetic";
  PLDConfig pld;
  int k_trials = 3;
  std::uint64_t seed = 0;
  bool resume = false;
  int workers = 1;
  // A trial counts as a success when its SE-accepted best objective is at or
  // below this value.
  double success_objective = 0.5;
  // y* = (answer_index + target_offset) mod 4.
  int target_offset = 1;
  // ASR@K columns; empty means {1, k_trials}.
  std::vector<int> asr_ks;
  int eval_resamples = 10000;
  double sce_gamma = 60.0;
};

// Empty string when the config is runnable, otherwise a message naming the
// bad field.
std::string validate_run_config(const RunConfig& config);

// Hex digest over the canonical serialization of every result-affecting
// field. Stamped into traces, outcome files, and reports; resume refuses to
// continue under a different hash.
std::string config_hash(const RunConfig& config);

// The fixed wrong option the attack steers toward.
int target_option(const QuestionRecord& question, int offset = 1);

// Per-trial attack inputs for one question: the starting record, the edit
// dictionary, and the oracle endpoints to drive.
struct QuestionPlan {
  QuestionRecord attack_x0;
  EditDictionary dictionary;
  OracleBundle bundle;
};

// Builds the plan for one dataset question. Must be safe to call from
// multiple threads when workers > 1.
using PlanFactory = std::function<QuestionPlan(const QuestionRecord&)>;

// Self-contained world per question: deterministic flat-grid landscape with
// a planted success cell, keyed to the dataset record's id and subject.
PlanFactory synthetic_plan_factory();

struct CampaignResult {
  int questions_total = 0;
  int questions_run = 0;
  int questions_skipped = 0;
  int trials_run = 0;
  int trials_skipped = 0;
  int hard_failures = 0;
  EvalReport report;
  std::vector<std::string> flags;
};

// Runs k_trials attacks per dataset question, persists one trace file per
// (question, trial) plus an append-only outcomes file, then writes the
// evaluation report. Resume skips fully committed questions; a question that
// throws is flagged and excluded without stopping the others.
CampaignResult run_campaign(const RunConfig& config, const PlanFactory& factory);

}  // namespace sled
