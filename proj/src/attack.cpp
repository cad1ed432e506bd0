#include "sled/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include <json.hpp>

namespace sled {

void validate_pld_config(const PLDConfig& config) {
  if (!(config.step_size > 0.0)) throw std::invalid_argument("step_size must be positive");
  if (!(config.initial_temperature >= 0.0))
    throw std::invalid_argument("initial_temperature must be nonnegative");
  if (config.decay < 0.0 || config.decay > 1.0)
    throw std::invalid_argument("decay must be in [0, 1]");
  if (!(config.budget > 0.0)) throw std::invalid_argument("budget must be positive");
  if (config.max_iters_per_init < 1)
    throw std::invalid_argument("max_iters_per_init must be >= 1");
  if (config.num_inits < 1) throw std::invalid_argument("num_inits must be >= 1");
  if (!(config.fd_step > 0.0)) throw std::invalid_argument("fd_step must be positive");
}

double temperature(int k, double t0, double gamma) {
  if (k < 0) throw std::invalid_argument("iteration index must be nonnegative");
  return t0 * std::pow(gamma, k);
}

PldStepResult pld_step(const EditStrength& delta, const std::vector<double>& gradient,
                       double eta, double temp, Rng& rng) {
  if (gradient.size() != delta.coefficients.size())
    throw std::invalid_argument("gradient length " + std::to_string(gradient.size()) +
                                " does not match delta length " +
                                std::to_string(delta.coefficients.size()));
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (temp < 0.0) throw std::invalid_argument("temperature must be nonnegative");

  bool discarded = false;
  for (double g : gradient) {
    if (!std::isfinite(g)) {
      discarded = true;
      break;
    }
  }

  PldStepResult result;
  result.gradient_discarded = discarded;
  result.noise.resize(delta.coefficients.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& x : result.noise) x = normal(rng);

  double noise_scale = std::sqrt(2.0 * eta * temp);
  std::vector<double> moved(delta.coefficients.size());
  for (size_t i = 0; i < moved.size(); ++i) {
    double grad_term = discarded ? 0.0 : eta * gradient[i];
    moved[i] = delta.coefficients[i] - grad_term + noise_scale * result.noise[i];
  }
  result.delta = EditStrength{project_simplex(moved, delta.budget), delta.budget};
  return result;
}

GumbelSample gumbel_soft_sample(const Mat& logits, double tau_gumbel, Rng& rng) {
  if (!(tau_gumbel > 0.0)) throw std::invalid_argument("tau_gumbel must be positive");
  if (logits.rows < 1 || logits.cols < 1)
    throw std::invalid_argument("logits must be a nonempty matrix");
  for (double x : logits.data) {
    if (!std::isfinite(x)) throw std::invalid_argument("logits must be finite");
  }

  GumbelSample sample;
  sample.gumbel_temperature = tau_gumbel;
  sample.soft = Mat(logits.rows, logits.cols);
  sample.hard.resize(static_cast<size_t>(logits.rows));
  std::uniform_real_distribution<double> uniform(1e-12, 1.0 - 1e-12);

  for (int t = 0; t < logits.rows; ++t) {
    std::vector<double> scaled(static_cast<size_t>(logits.cols));
    double max_scaled = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < logits.cols; ++v) {
      double u = uniform(rng);
      double gumbel = -std::log(-std::log(u));
      scaled[static_cast<size_t>(v)] = (logits(t, v) + gumbel) / tau_gumbel;
      max_scaled = std::max(max_scaled, scaled[static_cast<size_t>(v)]);
    }
    double sum = 0.0;
    for (int v = 0; v < logits.cols; ++v) {
      double e = std::exp(scaled[static_cast<size_t>(v)] - max_scaled);
      sample.soft(t, v) = e;
      sum += e;
    }
    int arg = 0;
    for (int v = 0; v < logits.cols; ++v) {
      sample.soft(t, v) /= sum;
      if (sample.soft(t, v) > sample.soft(t, arg)) arg = v;
    }
    sample.hard[static_cast<size_t>(t)] = arg;
  }
  return sample;
}

namespace {

EditStrength vertex_delta(int index, int n, double budget) {
  std::vector<double> coeffs(static_cast<size_t>(n), 0.0);
  coeffs[static_cast<size_t>(index)] = budget;
  return EditStrength{std::move(coeffs), budget};
}

void note(std::vector<std::string>* sink, const std::string& message) {
  if (sink) sink->push_back(message);
}

} // namespace

std::vector<InitCandidate> single_concept_init(const EditDictionary& dictionary,
                                               const OracleBundle& oracles,
                                               const PLDConfig& config, QueryCount* queries,
                                               std::vector<std::string>* diagnostics) {
  validate_pld_config(config);
  if (dictionary.n() < 1) throw std::invalid_argument("dictionary has no directions");

  std::vector<InitCandidate> candidates;
  std::string last_failure;
  for (int i = 0; i < dictionary.n(); ++i) {
    InitCandidate candidate;
    candidate.concept_index = i;
    candidate.delta = vertex_delta(i, dictionary.n(), config.budget);
    try {
      LatentRep z = apply_edit(dictionary, candidate.delta);
      if (queries) ++queries->decoder;
      candidate.prompt = oracles.decode(z);
      if (queries) ++queries->target;
      candidate.objective = oracles.objective(candidate.prompt);
    } catch (const oracle_error& e) {
      last_failure = e.what();
      note(diagnostics, "concept " + std::to_string(i) + " (" +
                            dictionary.entries[static_cast<size_t>(i)].keyword +
                            ") excluded from init: " + e.what());
      continue;
    }
    if (!std::isfinite(candidate.objective)) {
      candidate.objective = std::numeric_limits<double>::infinity();
      candidate.objective_flagged = true;
      note(diagnostics, "concept " + std::to_string(i) + " init objective non-finite");
    }
    candidates.push_back(std::move(candidate));
  }

  if (candidates.empty())
    throw oracle_error(oracle_fault::unavailable,
                       "every concept failed during initialization; last failure: " +
                           last_failure);

  std::sort(candidates.begin(), candidates.end(),
            [](const InitCandidate& a, const InitCandidate& b) {
              if (a.objective != b.objective) return a.objective < b.objective;
              return a.concept_index < b.concept_index;
            });
  if (static_cast<int>(candidates.size()) > config.num_inits)
    candidates.resize(static_cast<size_t>(config.num_inits));
  return candidates;
}

std::vector<double> estimate_gradient(const EditStrength& delta, AttackContext& context,
                                      gradient_mode mode) {
  const size_t n = delta.coefficients.size();
  std::vector<double> zero(n, 0.0);
  const OracleBundle& oracles = *context.oracles;

  auto discard = [&](const std::string& why) {
    note(context.flags, "gradient discarded (" + std::string(gradient_mode_name(mode)) +
                            "): " + why);
    return zero;
  };

  switch (mode) {
    case gradient_mode::exact: {
      std::vector<double> g;
      try {
        g = oracles.grad(delta.coefficients);
      } catch (const oracle_error& e) {
        return discard(e.what());
      }
      if (g.size() != n) return discard("gradient endpoint returned wrong length");
      for (double x : g) {
        if (!std::isfinite(x)) return discard("non-finite gradient entry");
      }
      return g;
    }
    case gradient_mode::surrogate_weighted: {
      std::string response;
      double judge_score = 0.0;
      std::vector<double> g;
      try {
        if (context.queries) ++context.queries->target;
        response = oracles.respond(context.current_prompt);
        if (context.queries) ++context.queries->judge;
        judge_score = oracles.judge_weight(context.current_prompt, response);
        g = oracles.surrogate_grad(delta.coefficients);
      } catch (const oracle_error& e) {
        return discard(e.what());
      }
      if (!std::isfinite(judge_score)) return discard("non-finite judge score");
      if (g.size() != n) return discard("surrogate gradient has wrong length");
      for (double& x : g) {
        if (!std::isfinite(x)) return discard("non-finite surrogate gradient entry");
        x *= -judge_score;
      }
      return g;
    }
    case gradient_mode::finite_difference: {
      const EditDictionary& dictionary = *context.dictionary;
      double h = context.config->fd_step;
      std::vector<double> g(n, 0.0);
      for (size_t i = 0; i < n; ++i) {
        auto probe = [&](double sign) -> double {
          std::vector<double> moved = delta.coefficients;
          moved[i] += sign * h;
          std::vector<double> projected = project_simplex(moved, delta.budget);
          LatentRep z = apply_edit(dictionary, EditStrength{projected, delta.budget});
          if (context.queries) ++context.queries->decoder;
          std::string prompt = oracles.decode(z);
          if (context.queries) ++context.queries->target;
          return oracles.objective(prompt);
        };
        double f_plus = 0.0, f_minus = 0.0;
        try {
          f_plus = probe(+1.0);
          f_minus = probe(-1.0);
        } catch (const oracle_error& e) {
          return discard(e.what());
        }
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
          return discard("non-finite probe objective");
        g[i] = (f_plus - f_minus) / (2.0 * h);
      }
      return g;
    }
  }
  return zero;
}

AttackTrace run_attack(const QuestionRecord& x0, const EditDictionary& dictionary,
                       const OracleBundle& oracles, const PLDConfig& config,
                       std::uint64_t rng_seed) {
  validate_pld_config(config);
  std::string missing = validate_bundle(oracles, config.mode);
  if (!missing.empty()) throw std::invalid_argument(missing);

  AttackTrace trace;
  trace.seed = rng_seed;
  trace.budget = config.budget;
  trace.best_prompt = x0.question;
  Rng rng = make_rng(rng_seed);

  std::vector<InitCandidate> candidates;
  try {
    candidates = single_concept_init(dictionary, oracles, config, &trace.queries, &trace.flags);
  } catch (const oracle_error& e) {
    trace.flags.push_back(std::string("attack aborted at initialization: ") + e.what());
    trace.completed = false;
    return trace;
  }

  std::map<std::string, SeVerdict> se_memo;
  bool stop = false;

  for (size_t rank = 0; rank < candidates.size() && !stop; ++rank) {
    EditStrength delta = candidates[rank].delta;
    for (int k = 0; k < config.max_iters_per_init; ++k) {
      IterationRecord rec;
      rec.candidate_rank = static_cast<int>(rank);
      rec.concept_index = candidates[rank].concept_index;
      rec.iteration = k;
      rec.delta = delta.coefficients;
      rec.temp = temperature(k, config.initial_temperature, config.decay);

      try {
        LatentRep z = apply_edit(dictionary, delta);
        ++trace.queries.decoder;
        rec.prompt = oracles.decode(z);
        ++trace.queries.target;
        rec.objective = oracles.objective(rec.prompt);
      } catch (const oracle_error& e) {
        trace.flags.push_back("oracle outage at candidate " + std::to_string(rank) +
                              " iteration " + std::to_string(k) + ": " + e.what());
        trace.completed = false;
        trace.resume_candidate = static_cast<int>(rank);
        trace.resume_iteration = k;
        return trace;
      }
      if (!std::isfinite(rec.objective)) {
        rec.objective = std::numeric_limits<double>::infinity();
        rec.flags.push_back("non-finite objective treated as +inf");
      }

      auto memo = se_memo.find(rec.prompt);
      if (memo != se_memo.end()) {
        rec.se_verdict = memo->second.value;
        rec.se_parse_failed = memo->second.parse_failed;
        rec.se_from_cache = true;
      } else {
        SeVerdict verdict;
        try {
          ++trace.queries.se_checker;
          verdict = oracles.se_check(x0, rec.prompt);
        } catch (const oracle_error& e) {
          verdict = SeVerdict{0, true};
          rec.flags.push_back(std::string("se check failed: ") + e.what());
        }
        if (verdict.parse_failed) {
          verdict.value = 0;
          rec.flags.push_back("se parse failure treated as SE=0");
        } else {
          se_memo[rec.prompt] = verdict;
        }
        rec.se_verdict = verdict.value;
        rec.se_parse_failed = verdict.parse_failed;
      }

      if (rec.se_verdict == 1 && rec.objective < trace.best_objective) {
        trace.best_objective = rec.objective;
        trace.best_delta = delta;
        trace.best_prompt = rec.prompt;
      }

      if (config.success_threshold && trace.best_delta &&
          trace.best_objective <= *config.success_threshold) {
        rec.flags.push_back("early stop: objective reached the success threshold");
        trace.iterations.push_back(std::move(rec));
        stop = true;
        break;
      }

      std::vector<double> gradient(delta.coefficients.size(), 0.0);
      if (rec.se_verdict == 1) {
        AttackContext context;
        context.dictionary = &dictionary;
        context.oracles = &oracles;
        context.config = &config;
        context.x0 = &x0;
        context.current_prompt = rec.prompt;
        context.queries = &trace.queries;
        context.flags = &rec.flags;
        gradient = estimate_gradient(delta, context, config.mode);
      }

      PldStepResult step = pld_step(delta, gradient, config.step_size, rec.temp, rng);
      rec.noise = step.noise;
      rec.gradient_discarded = step.gradient_discarded;
      delta = step.delta;
      trace.iterations.push_back(std::move(rec));
    }
  }

  return trace;
}

namespace {

nlohmann::json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double null_or_inf(const nlohmann::json& j) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

} // namespace

void save_trace(const AttackTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open trace file for writing: " + path.string());

  nlohmann::json header{{"type", "header"},
                        {"version", kArtifactVersion},
                        {"seed", trace.seed},
                        {"budget", trace.budget},
                        {"config_hash", trace.config_hash}};
  out << header.dump() << "\n";

  for (const IterationRecord& rec : trace.iterations) {
    nlohmann::json line{{"type", "iteration"},
                        {"candidate_rank", rec.candidate_rank},
                        {"concept_index", rec.concept_index},
                        {"iteration", rec.iteration},
                        {"delta", rec.delta},
                        {"prompt", rec.prompt},
                        {"objective", finite_or_null(rec.objective)},
                        {"se_verdict", rec.se_verdict},
                        {"se_parse_failed", rec.se_parse_failed},
                        {"se_from_cache", rec.se_from_cache},
                        {"temperature", rec.temp},
                        {"noise", rec.noise},
                        {"gradient_discarded", rec.gradient_discarded},
                        {"flags", rec.flags}};
    out << line.dump() << "\n";
  }

  nlohmann::json summary{{"type", "summary"},
                         {"best_objective", finite_or_null(trace.best_objective)},
                         {"best_prompt", trace.best_prompt},
                         {"queries",
                          {{"decoder", trace.queries.decoder},
                           {"target", trace.queries.target},
                           {"judge", trace.queries.judge},
                           {"se_checker", trace.queries.se_checker}}},
                         {"flags", trace.flags},
                         {"completed", trace.completed},
                         {"resume_candidate", trace.resume_candidate},
                         {"resume_iteration", trace.resume_iteration}};
  if (trace.best_delta) {
    summary["best_delta"] = trace.best_delta->coefficients;
  } else {
    summary["best_delta"] = nullptr;
  }
  out << summary.dump() << "\n";
  if (!out) throw std::runtime_error("short write to " + path.string());
}

AttackTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace file: " + path.string());

  AttackTrace trace;
  trace.completed = false;
  bool saw_header = false;
  bool saw_summary = false;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("type"))
      throw std::runtime_error("trace line " + std::to_string(line_no) + " is malformed");
    std::string type = j["type"].get<std::string>();
    if (type == "header") {
      saw_header = true;
      trace.seed = j["seed"].get<std::uint64_t>();
      trace.budget = j["budget"].get<double>();
      if (j.contains("config_hash")) trace.config_hash = j["config_hash"].get<std::string>();
    } else if (type == "iteration") {
      IterationRecord rec;
      rec.candidate_rank = j["candidate_rank"].get<int>();
      rec.concept_index = j["concept_index"].get<int>();
      rec.iteration = j["iteration"].get<int>();
      rec.delta = j["delta"].get<std::vector<double>>();
      rec.prompt = j["prompt"].get<std::string>();
      rec.objective = null_or_inf(j["objective"]);
      rec.se_verdict = j["se_verdict"].get<int>();
      rec.se_parse_failed = j["se_parse_failed"].get<bool>();
      rec.se_from_cache = j["se_from_cache"].get<bool>();
      rec.temp = j["temperature"].get<double>();
      rec.noise = j["noise"].get<std::vector<double>>();
      rec.gradient_discarded = j["gradient_discarded"].get<bool>();
      rec.flags = j["flags"].get<std::vector<std::string>>();
      trace.iterations.push_back(std::move(rec));
    } else if (type == "summary") {
      saw_summary = true;
      trace.best_objective = null_or_inf(j["best_objective"]);
      trace.best_prompt = j["best_prompt"].get<std::string>();
      trace.queries.decoder = j["queries"]["decoder"].get<long>();
      trace.queries.target = j["queries"]["target"].get<long>();
      trace.queries.judge = j["queries"]["judge"].get<long>();
      trace.queries.se_checker = j["queries"]["se_checker"].get<long>();
      trace.flags = j["flags"].get<std::vector<std::string>>();
      trace.completed = j["completed"].get<bool>();
      trace.resume_candidate = j["resume_candidate"].get<int>();
      trace.resume_iteration = j["resume_iteration"].get<int>();
      if (!j["best_delta"].is_null())
        trace.best_delta =
            EditStrength{j["best_delta"].get<std::vector<double>>(), trace.budget};
    } else {
      throw std::runtime_error("trace line " + std::to_string(line_no) +
                               " has unknown type '" + type + "'");
    }
  }
  if (!saw_header) throw std::runtime_error("trace file has no header: " + path.string());
  if (!saw_summary) trace.flags.push_back("trace has no summary line; run was interrupted");
  return trace;
}

} // namespace sled
