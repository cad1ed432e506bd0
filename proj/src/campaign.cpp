#include <sled/campaign.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include <sled/common.hpp>
#include <sled/synthetic.hpp>

namespace sled {

namespace {

namespace fs = std::filesystem;

PLDConfig effective_pld(const RunConfig& config) {
  PLDConfig pld = config.pld;
  if (!pld.success_threshold) pld.success_threshold = config.success_objective;
  return pld;
}

std::vector<int> effective_ks(const RunConfig& config) {
  if (!config.asr_ks.empty()) return config.asr_ks;
  std::vector<int> ks{1};
  if (config.k_trials != 1) ks.push_back(config.k_trials);
  return ks;
}

nlohmann::json canonical_config(const RunConfig& config) {
  PLDConfig pld = effective_pld(config);
  return nlohmann::json{
      {"dataset", config.dataset_path.generic_string()},
      {"oracle_bundle", config.oracle_bundle},
      {"k_trials", config.k_trials},
      {"seed", config.seed},
      {"success_objective", config.success_objective},
      {"target_offset", config.target_offset},
      {"asr_ks", effective_ks(config)},
      {"eval_resamples", config.eval_resamples},
      {"sce_gamma", config.sce_gamma},
      {"pld",
       {{"step_size", pld.step_size},
        {"initial_temperature", pld.initial_temperature},
        {"decay", pld.decay},
        {"budget", pld.budget},
        {"max_iters_per_init", pld.max_iters_per_init},
        {"num_inits", pld.num_inits},
        {"mode", gradient_mode_name(pld.mode)},
        {"fd_step", pld.fd_step},
        {"success_threshold", *pld.success_threshold}}}};
}

std::string safe_file_stem(const std::string& id) {
  std::string out;
  bool changed = false;
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '-' || c == '_') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('_');
      changed = true;
    }
  }
  // A mangled stem gets a hash suffix so distinct ids cannot collide.
  if (out.empty() || changed) out += "-" + hex64(hash_str64(id)).substr(0, 8);
  return out;
}

fs::path trace_path(const fs::path& out_dir, const std::string& question_id, int trial) {
  return out_dir / "traces" / (safe_file_stem(question_id) + "_t" + std::to_string(trial) + ".jsonl");
}

nlohmann::json outcome_header_json(const RunConfig& config, const std::string& hash) {
  return nlohmann::json{{"type", "outcome_header"},
                        {"version", kArtifactVersion},
                        {"seed", config.seed},
                        {"config_hash", hash}};
}

struct ResumeState {
  std::vector<TrialOutcome> outcomes;
  std::set<std::string> done;
  bool has_header = false;
};

// Reads a previous run's outcome file, keeping only the provenance header and
// whole committed question blocks. A partially written tail (a cut line or an
// incomplete block) is dropped and the file rewritten; damage anywhere else
// is corruption and throws.
ResumeState load_resume_state(const fs::path& path, const std::vector<QuestionRecord>& questions,
                              int k_trials, const std::string& hash,
                              std::vector<std::string>* flags) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open outcomes file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string content = buffer.str();
  in.close();

  ResumeState state;
  bool rewrite = false;
  if (!content.empty() && content.back() != '\n') {
    size_t cut = content.find_last_of('\n');
    content = cut == std::string::npos ? std::string() : content.substr(0, cut + 1);
    rewrite = true;
    if (flags) flags->push_back("outcomes file ended mid-line; dropped the partial trailing line");
  }

  std::vector<std::string> lines;
  {
    std::istringstream stream(content);
    std::string line;
    while (std::getline(stream, line)) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
    }
  }
  if (lines.empty()) {
    if (rewrite) std::ofstream(path, std::ios::binary | std::ios::trunc);
    return state;
  }

  nlohmann::json header = nlohmann::json::parse(lines[0], nullptr, false);
  if (header.is_discarded() || !header.is_object() || !header.contains("type") ||
      header["type"] != "outcome_header")
    throw std::runtime_error("outcomes file " + path.string() +
                             " lacks its provenance header; refusing to resume over it");
  std::string stored_version = header.value("version", std::string());
  if (stored_version != kArtifactVersion)
    throw std::runtime_error("outcomes file was written by artifact version '" + stored_version +
                             "'; this binary writes '" + kArtifactVersion + "'");
  std::string stored_hash = header.value("config_hash", std::string());
  if (stored_hash != hash)
    throw std::runtime_error("outcomes file was produced under config hash " + stored_hash +
                             " but this run hashes to " + hash + "; refusing to mix campaigns");
  state.has_header = true;

  std::vector<TrialOutcome> parsed;
  for (size_t i = 1; i < lines.size(); ++i) {
    nlohmann::json j = nlohmann::json::parse(lines[i], nullptr, false);
    bool ok = !j.is_discarded();
    TrialOutcome outcome;
    if (ok) {
      try {
        outcome = outcome_from_json(j);
        ok = validate_outcome(outcome).empty();
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      if (i + 1 == lines.size()) {
        rewrite = true;
        if (flags) flags->push_back("dropped one malformed trailing outcome line");
        break;
      }
      throw std::runtime_error("outcomes file is corrupt at line " + std::to_string(i + 1));
    }
    parsed.push_back(std::move(outcome));
  }

  std::map<std::string, const QuestionRecord*> by_id;
  for (const QuestionRecord& q : questions) by_id[q.question_id] = &q;

  size_t committed = 0;
  std::set<std::string> seen;
  size_t i = 0;
  while (i < parsed.size()) {
    const std::string qid = parsed[i].question_id;
    auto found = by_id.find(qid);
    if (found == by_id.end())
      throw std::runtime_error("outcomes file names question '" + qid +
                               "' which is not in the dataset");
    if (!seen.insert(qid).second)
      throw std::runtime_error("outcomes file holds a second block for question '" + qid + "'");

    size_t run = 0;
    while (i + run < parsed.size() && run < static_cast<size_t>(k_trials) &&
           parsed[i + run].question_id == qid)
      ++run;
    if (run < static_cast<size_t>(k_trials)) {
      if (i + run != parsed.size())
        throw std::runtime_error("question '" + qid + "' has only " + std::to_string(run) +
                                 " committed trials mid-file; expected " +
                                 std::to_string(k_trials));
      rewrite = true;
      if (flags)
        flags->push_back("dropped " + std::to_string(run) +
                         " uncommitted trial lines for question '" + qid + "'");
      break;
    }
    for (size_t t = 0; t < run; ++t) {
      if (parsed[i + t].trial_index != static_cast<int>(t) + 1)
        throw std::runtime_error("trial sequence for question '" + qid + "' is broken");
      if (parsed[i + t].subject != found->second->subject)
        throw std::runtime_error("outcomes file records question '" + qid + "' under subject '" +
                                 parsed[i + t].subject + "' but the dataset says '" +
                                 found->second->subject + "'");
    }
    state.done.insert(qid);
    i += run;
    committed = i;
  }
  parsed.resize(committed);
  state.outcomes = std::move(parsed);

  if (rewrite) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot rewrite outcomes file " + path.string());
    out << lines[0] << "\n";
    for (size_t n = 0; n < committed; ++n) out << lines[1 + n] << "\n";
    out.flush();
    if (!out) throw std::runtime_error("short rewrite of " + path.string());
  }
  return state;
}

struct QuestionOutput {
  std::vector<TrialOutcome> outcomes;
  std::vector<std::string> flags;
  bool failed = false;
  std::string error;
};

QuestionOutput run_question(const RunConfig& config, const PLDConfig& pld, const std::string& hash,
                            const PlanFactory& factory, const QuestionRecord& question) {
  QuestionOutput out;
  try {
    QuestionPlan plan = factory(question);
    std::vector<AttackTrace> traces;
    traces.reserve(static_cast<size_t>(config.k_trials));
    for (int t = 1; t <= config.k_trials; ++t) {
      std::uint64_t trial_seed =
          mix64(mix64(config.seed, hash_str64(question.question_id)), static_cast<std::uint64_t>(t));
      AttackTrace trace = run_attack(plan.attack_x0, plan.dictionary, plan.bundle, pld, trial_seed);
      trace.config_hash = hash;
      save_trace(trace, trace_path(config.out_dir, question.question_id, t));
      traces.push_back(std::move(trace));
    }

    int best = -1;
    for (int i = 0; i < static_cast<int>(traces.size()); ++i) {
      if (!traces[i].best_delta) continue;
      if (best < 0 || traces[i].best_objective < traces[best].best_objective) best = i;
    }
    for (int i = 0; i < static_cast<int>(traces.size()); ++i) {
      TrialOutcome outcome;
      outcome.question_id = question.question_id;
      outcome.trial_index = i + 1;
      outcome.subject = question.subject;
      outcome.success =
          traces[i].best_delta.has_value() && traces[i].best_objective <= config.success_objective;
      out.outcomes.push_back(std::move(outcome));
    }

    if (best < 0) {
      out.flags.push_back("question " + question.question_id +
                          ": no trial produced an SE-accepted candidate");
      return out;
    }
    // The best-attack row carries the quality metrics for its question.
    TrialOutcome& row = out.outcomes[static_cast<size_t>(best)];
    const std::string& prompt = traces[static_cast<size_t>(best)].best_prompt;
    if (plan.bundle.se_check) {
      try {
        SeVerdict verdict = plan.bundle.se_check(plan.attack_x0, prompt);
        if (!verdict.parse_failed) row.se_error = see(verdict.value);
      } catch (const std::exception& e) {
        out.flags.push_back("question " + question.question_id +
                            ": SE check on the best attack failed: " + e.what());
      }
    }
    if (plan.bundle.sc_check) {
      try {
        int sc = plan.bundle.sc_check(prompt);
        if (sc >= 1 && sc <= 3)
          row.sc_score = sc;
        else
          out.flags.push_back("question " + question.question_id + ": SC checker returned " +
                              std::to_string(sc) + ", outside {1,2,3}; dropped");
      } catch (const std::exception& e) {
        out.flags.push_back("question " + question.question_id +
                            ": SC check on the best attack failed: " + e.what());
      }
    }
    if (plan.bundle.ppl) {
      try {
        double ppl = plan.bundle.ppl(prompt);
        if (std::isfinite(ppl) && ppl > 0)
          row.ppl = ppl;
        else
          out.flags.push_back("question " + question.question_id + ": perplexity oracle returned " +
                              std::to_string(ppl) + "; dropped");
      } catch (const std::exception& e) {
        out.flags.push_back("question " + question.question_id +
                            ": perplexity on the best attack failed: " + e.what());
      }
    }
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
    out.outcomes.clear();
  }
  return out;
}

}  // namespace

std::string validate_run_config(const RunConfig& config) {
  if (config.dataset_path.empty()) return "dataset_path: must be non-empty";
  if (config.out_dir.empty()) return "out_dir: must be non-empty";
  if (config.oracle_bundle.empty()) return "oracle_bundle: must be non-empty";
  if (config.k_trials < 1) return "k_trials: must be at least 1";
  if (config.workers < 1) return "workers: must be at least 1";
  if (!std::isfinite(config.success_objective)) return "success_objective: must be finite";
  if (config.target_offset % 4 == 0)
    return "target_offset: must not be 0 mod 4; the target has to differ from the truth";
  for (int k : config.asr_ks)
    if (k < 1) return "asr_ks: every entry must be at least 1";
  if (config.eval_resamples < 1) return "eval_resamples: must be at least 1";
  if (!(config.sce_gamma >= 0) || !std::isfinite(config.sce_gamma))
    return "sce_gamma: must be a non-negative real";
  try {
    validate_pld_config(effective_pld(config));
  } catch (const std::exception& e) {
    return std::string("pld: ") + e.what();
  }
  return "";
}

std::string config_hash(const RunConfig& config) {
  return hex64(hash_str64(canonical_config(config).dump()));
}

int target_option(const QuestionRecord& question, int offset) {
  if (offset % 4 == 0)
    throw std::invalid_argument("target offset must not be 0 mod 4; the target would be the truth");
  int target = (question.answer_index + offset) % 4;
  if (target < 0) target += 4;
  return target;
}

PlanFactory synthetic_plan_factory() {
  return [](const QuestionRecord& question) {
    SyntheticScenario scenario = make_flat_grid_scenario();
    QuestionPlan plan;
    plan.attack_x0 = scenario.x0;
    plan.attack_x0.question_id = question.question_id;
    plan.attack_x0.subject = question.subject;
    plan.dictionary = scenario.dictionary;
    plan.bundle = make_world_bundle(scenario.world, scenario.x0.question);
    return plan;
  };
}

CampaignResult run_campaign(const RunConfig& config, const PlanFactory& factory) {
  std::string problem = validate_run_config(config);
  if (!problem.empty()) throw std::invalid_argument(problem);
  if (!factory) throw std::invalid_argument("run_campaign needs a plan factory");

  std::vector<QuestionRecord> questions = load_dataset(config.dataset_path);
  if (questions.empty())
    throw std::runtime_error("dataset " + config.dataset_path.string() + " holds no questions");
  {
    std::set<std::string> ids;
    for (const QuestionRecord& q : questions)
      if (!ids.insert(q.question_id).second)
        throw std::runtime_error("dataset repeats question id '" + q.question_id + "'");
  }

  const std::string hash = config_hash(config);
  const PLDConfig pld = effective_pld(config);

  fs::create_directories(config.out_dir / "traces");
  const fs::path outcomes_path = config.out_dir / "outcomes.jsonl";
  const fs::path manifest_path = config.out_dir / "campaign.json";

  CampaignResult result;
  result.questions_total = static_cast<int>(questions.size());

  ResumeState state;
  if (fs::exists(outcomes_path)) {
    if (!config.resume)
      throw std::runtime_error("output directory already holds campaign outcomes (" +
                               outcomes_path.string() +
                               "); pass resume or point at a fresh directory");
    state = load_resume_state(outcomes_path, questions, config.k_trials, hash, &result.flags);
  }
  if (config.resume && fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    nlohmann::json stored = nlohmann::json::parse(in, nullptr, false);
    std::string stored_hash =
        stored.is_object() ? stored.value("config_hash", std::string()) : std::string();
    if (stored_hash != hash)
      throw std::runtime_error("campaign manifest was built under config hash " + stored_hash +
                               " but this run hashes to " + hash);
  }
  {
    nlohmann::json manifest{{"version", kArtifactVersion},
                            {"seed", config.seed},
                            {"config_hash", hash},
                            {"questions", static_cast<int>(questions.size())},
                            {"config", canonical_config(config)}};
    std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + manifest_path.string());
    out << manifest.dump(2) << "\n";
  }

  std::ofstream out(outcomes_path, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot open " + outcomes_path.string() + " for append");
  if (!state.has_header) {
    out << outcome_header_json(config, hash).dump() << "\n";
    out.flush();
  }

  std::vector<TrialOutcome> all_outcomes = state.outcomes;
  result.trials_skipped = static_cast<int>(state.outcomes.size());
  result.questions_skipped = static_cast<int>(state.done.size());

  std::vector<const QuestionRecord*> todo;
  for (const QuestionRecord& q : questions)
    if (!state.done.count(q.question_id)) todo.push_back(&q);

  auto commit = [&](const QuestionRecord& q, QuestionOutput&& output) {
    if (output.failed) {
      ++result.hard_failures;
      result.flags.push_back("question " + q.question_id + " failed and was excluded: " +
                             output.error);
      return;
    }
    std::string block;
    for (const TrialOutcome& outcome : output.outcomes)
      block += outcome_to_json(outcome).dump() + "\n";
    out << block;
    out.flush();
    if (!out) throw std::runtime_error("short write to " + outcomes_path.string());
    for (TrialOutcome& outcome : output.outcomes) all_outcomes.push_back(std::move(outcome));
    result.trials_run += config.k_trials;
    ++result.questions_run;
    for (std::string& flag : output.flags) result.flags.push_back(std::move(flag));
  };

  const size_t workers = static_cast<size_t>(config.workers);
  for (size_t start = 0; start < todo.size(); start += workers) {
    size_t end = std::min(start + workers, todo.size());
    if (end - start == 1) {
      commit(*todo[start], run_question(config, pld, hash, factory, *todo[start]));
      continue;
    }
    std::vector<std::future<QuestionOutput>> batch;
    for (size_t i = start; i < end; ++i) {
      const QuestionRecord* q = todo[i];
      batch.push_back(std::async(std::launch::async, [&, q] {
        return run_question(config, pld, hash, factory, *q);
      }));
    }
    for (size_t i = start; i < end; ++i) commit(*todo[i], batch[i - start].get());
  }
  out.close();

  if (all_outcomes.empty()) {
    result.flags.push_back("no outcomes were produced; skipping the report");
    return result;
  }

  EvalConfig eval;
  eval.ks = effective_ks(config);
  eval.resamples = config.eval_resamples;
  eval.seed = config.seed;
  eval.sce_gamma = config.sce_gamma;
  result.report = build_report(all_outcomes, eval);

  nlohmann::json report_json = report_to_json(result.report);
  report_json["config_hash"] = hash;
  {
    std::ofstream rj(config.out_dir / "report.json", std::ios::binary | std::ios::trunc);
    if (!rj) throw std::runtime_error("cannot write report.json");
    rj << report_json.dump(2) << "\n";
  }
  {
    std::ofstream rc(config.out_dir / "report.csv", std::ios::binary | std::ios::trunc);
    if (!rc) throw std::runtime_error("cannot write report.csv");
    rc << "# version=" << kArtifactVersion << " seed=" << config.seed << " config_hash=" << hash
       << "\n"
       << report_to_csv(result.report);
  }
  return result;
}

}  // namespace sled
