#include <doctest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <sled/attack.hpp>
#include <sled/campaign.hpp>
#include <sled/common.hpp>
#include <sled/dataset.hpp>
#include <sled/evaluation.hpp>

#include "test_util.hpp"

namespace {

namespace fs = std::filesystem;

fs::path fixture_path() {
  return sled_test::test_data_dir() / "fixtures" / "questions_mmlu5.jsonl";
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing file " << path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::istringstream stream(slurp(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(stream, line)) lines.push_back(line);
  return lines;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

// Relative path -> file bytes, for whole-directory equality checks.
std::map<std::string, std::string> dir_snapshot(const fs::path& root) {
  std::map<std::string, std::string> snap;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file())
      snap[fs::relative(entry.path(), root).generic_string()] = slurp(entry.path());
  }
  return snap;
}

void check_same_dir(const fs::path& a, const fs::path& b) {
  auto snap_a = dir_snapshot(a);
  auto snap_b = dir_snapshot(b);
  std::set<std::string> names;
  for (const auto& [name, bytes] : snap_a) names.insert(name);
  for (const auto& [name, bytes] : snap_b) names.insert(name);
  for (const std::string& name : names) {
    CAPTURE(name);
    REQUIRE(snap_a.count(name) == 1);
    REQUIRE(snap_b.count(name) == 1);
    CHECK(snap_a[name] == snap_b[name]);
  }
}

sled::RunConfig base_config(const fs::path& out_dir, std::uint64_t seed = 7) {
  sled::RunConfig config;
  config.dataset_path = fixture_path();
  config.out_dir = out_dir;
  config.k_trials = 3;
  config.seed = seed;
  config.eval_resamples = 400;
  return config;
}

// Simulates a kill: keeps the header plus the first N outcome lines, then an
// optional partially written tail.
void truncate_outcomes(const fs::path& out_dir, size_t keep, const std::string& tail = "") {
  fs::path path = out_dir / "outcomes.jsonl";
  std::vector<std::string> lines = read_lines(path);
  REQUIRE(lines.size() >= 1 + keep);
  std::string content = lines[0] + "\n";
  for (size_t i = 0; i < keep; ++i) content += lines[1 + i] + "\n";
  content += tail;
  write_text(path, content);
}

sled::PlanFactory failing_factory(const std::string& bad_id) {
  sled::PlanFactory good = sled::synthetic_plan_factory();
  return [good, bad_id](const sled::QuestionRecord& q) {
    if (q.question_id == bad_id) throw std::runtime_error("endpoint exploded");
    return good(q);
  };
}

const sled::MetricCell* find_cell(const sled::EvalReport& report, const std::string& subject,
                                  const std::string& metric, int k) {
  for (const sled::MetricCell& cell : report.cells) {
    if (cell.subject == subject && cell.metric == metric && cell.k == k) return &cell;
  }
  return nullptr;
}

}  // namespace

TEST_SUITE("campaign") {
  TEST_CASE("target_option picks the fixed wrong answer") {
    sled::QuestionRecord q;
    q.answer_index = 2;
    CHECK(sled::target_option(q, 1) == 3);
    q.answer_index = 3;
    CHECK(sled::target_option(q, 1) == 0);
    q.answer_index = 0;
    CHECK(sled::target_option(q, 2) == 2);
    CHECK(sled::target_option(q, -1) == 3);
    CHECK(sled::target_option(q, 5) == 1);
    CHECK_THROWS_AS(sled::target_option(q, 0), std::invalid_argument);
    CHECK_THROWS_AS(sled::target_option(q, 4), std::invalid_argument);
    CHECK_THROWS_AS(sled::target_option(q, -8), std::invalid_argument);
  }

  TEST_CASE("validate_run_config names the offending field") {
    sled_test::TempDir tmp;
    sled::RunConfig good = base_config(tmp.path / "out");
    CHECK(sled::validate_run_config(good) == "");

    sled::RunConfig bad = good;
    bad.dataset_path.clear();
    CHECK(sled::validate_run_config(bad) == "dataset_path: must be non-empty");
    bad = good;
    bad.out_dir.clear();
    CHECK(sled::validate_run_config(bad) == "out_dir: must be non-empty");
    bad = good;
    bad.oracle_bundle.clear();
    CHECK(sled::validate_run_config(bad) == "oracle_bundle: must be non-empty");
    bad = good;
    bad.k_trials = 0;
    CHECK(sled::validate_run_config(bad) == "k_trials: must be at least 1");
    bad = good;
    bad.workers = 0;
    CHECK(sled::validate_run_config(bad) == "workers: must be at least 1");
    bad = good;
    bad.success_objective = std::numeric_limits<double>::infinity();
    CHECK(sled::validate_run_config(bad) == "success_objective: must be finite");
    bad = good;
    bad.target_offset = 4;
    CHECK(sled::validate_run_config(bad) ==
          "target_offset: must not be 0 mod 4; the target has to differ from the truth");
    bad = good;
    bad.asr_ks = {1, 0};
    CHECK(sled::validate_run_config(bad) == "asr_ks: every entry must be at least 1");
    bad = good;
    bad.eval_resamples = 0;
    CHECK(sled::validate_run_config(bad) == "eval_resamples: must be at least 1");
    bad = good;
    bad.sce_gamma = -1.0;
    CHECK(sled::validate_run_config(bad) == "sce_gamma: must be a non-negative real");
    bad = good;
    bad.pld.decay = 1.5;
    CHECK(sled::validate_run_config(bad).substr(0, 5) == "pld: ");
  }

  TEST_CASE("config_hash covers results, not plumbing") {
    sled_test::TempDir tmp;
    sled::RunConfig config = base_config(tmp.path / "a");
    std::string hash = sled::config_hash(config);
    CHECK(hash.size() == 16);
    CHECK(hash.find_first_not_of("0123456789abcdef") == std::string::npos);

    sled::RunConfig same = config;
    same.out_dir = tmp.path / "elsewhere";
    same.workers = 4;
    same.resume = true;
    CHECK(sled::config_hash(same) == hash);

    sled::RunConfig reseeded = config;
    reseeded.seed = 8;
    CHECK(sled::config_hash(reseeded) != hash);
    sled::RunConfig more_trials = config;
    more_trials.k_trials = 4;
    CHECK(sled::config_hash(more_trials) != hash);
    sled::RunConfig wider = config;
    wider.pld.budget = 0.7;
    CHECK(sled::config_hash(wider) != hash);
    sled::RunConfig stricter = config;
    stricter.success_objective = 0.25;
    CHECK(sled::config_hash(stricter) != hash);
  }

  TEST_CASE("synthetic campaign produces the full artifact set") {
    sled_test::TempDir tmp;
    sled::RunConfig config = base_config(tmp.path / "run");
    sled::CampaignResult result = sled::run_campaign(config, sled::synthetic_plan_factory());

    CHECK(result.questions_total == 5);
    CHECK(result.questions_run == 5);
    CHECK(result.questions_skipped == 0);
    CHECK(result.trials_run == 15);
    CHECK(result.trials_skipped == 0);
    CHECK(result.hard_failures == 0);
    CHECK(result.flags.empty());

    std::vector<std::string> lines = read_lines(config.out_dir / "outcomes.jsonl");
    REQUIRE(lines.size() == 16);
    nlohmann::json header = nlohmann::json::parse(lines[0]);
    CHECK(header["type"] == "outcome_header");
    CHECK(header["version"] == sled::kArtifactVersion);
    CHECK(header["seed"] == 7);
    CHECK(header["config_hash"] == sled::config_hash(config));

    std::vector<sled::TrialOutcome> outcomes =
        sled::load_outcomes(config.out_dir / "outcomes.jsonl");
    REQUIRE(outcomes.size() == 15);
    std::map<std::string, int> per_question;
    int quality_rows = 0;
    for (const sled::TrialOutcome& outcome : outcomes) {
      ++per_question[outcome.question_id];
      if (outcome.se_error) {
        ++quality_rows;
        CHECK(*outcome.se_error == 0);
        REQUIRE(outcome.sc_score.has_value());
        CHECK(*outcome.sc_score == 1);
        REQUIRE(outcome.ppl.has_value());
        CHECK(*outcome.ppl == 10.0);
      }
    }
    CHECK(per_question.size() == 5);
    for (const auto& [qid, count] : per_question) CHECK(count == 3);
    CHECK(quality_rows == 5);

    for (const sled::QuestionRecord& q : sled::load_dataset(config.dataset_path)) {
      for (int t = 1; t <= 3; ++t) {
        fs::path trace_file =
            config.out_dir / "traces" / (q.question_id + "_t" + std::to_string(t) + ".jsonl");
        REQUIRE_MESSAGE(fs::exists(trace_file), trace_file.string());
        sled::AttackTrace trace = sled::load_trace(trace_file);
        CHECK(trace.config_hash == sled::config_hash(config));
        CHECK(trace.seed == sled::mix64(sled::mix64(config.seed, sled::hash_str64(q.question_id)),
                                        static_cast<std::uint64_t>(t)));
      }
    }

    nlohmann::json manifest = nlohmann::json::parse(slurp(config.out_dir / "campaign.json"));
    CHECK(manifest["version"] == sled::kArtifactVersion);
    CHECK(manifest["seed"] == 7);
    CHECK(manifest["config_hash"] == sled::config_hash(config));
    CHECK(manifest["questions"] == 5);
    CHECK(manifest["config"]["k_trials"] == 3);
    CHECK(manifest["config"]["pld"]["num_inits"] == 10);

    nlohmann::json report = nlohmann::json::parse(slurp(config.out_dir / "report.json"));
    CHECK(report["config_hash"] == sled::config_hash(config));
    CHECK(report["seed"] == 7);
    CHECK(report["version"] == sled::kArtifactVersion);
    CHECK(report["cells"].is_array());

    std::string csv = slurp(config.out_dir / "report.csv");
    std::string expected_prefix =
        "# version=" + std::string(sled::kArtifactVersion) + " seed=7 config_hash=";
    CHECK(csv.substr(0, expected_prefix.size()) == expected_prefix);
    CHECK(csv.find("subject,metric,k,mean,std,unit,available,questions") != std::string::npos);

    const sled::MetricCell* asr1 = find_cell(result.report, "all", "asr", 1);
    const sled::MetricCell* asr3 = find_cell(result.report, "all", "asr", 3);
    REQUIRE(asr1 != nullptr);
    REQUIRE(asr3 != nullptr);
    CHECK(asr1->available);
    CHECK(asr3->available);
    CHECK(asr1->mean <= asr3->mean);
    CHECK(asr3->mean > 0.0);
    std::set<std::string> subjects;
    for (const sled::MetricCell& cell : result.report.cells) subjects.insert(cell.subject);
    CHECK(subjects == std::set<std::string>{"all", "CS", "Cli", "Law", "Phy", "Psy"});
    const sled::MetricCell* see_all = find_cell(result.report, "all", "see", 0);
    REQUIRE(see_all != nullptr);
    CHECK(see_all->mean == 0.0);
    CHECK(see_all->questions == 5);
  }

  TEST_CASE("two fresh runs are byte-identical, workers included") {
    sled_test::TempDir tmp;
    sled::RunConfig first = base_config(tmp.path / "a");
    sled::RunConfig second = base_config(tmp.path / "b");
    sled::RunConfig parallel = base_config(tmp.path / "c");
    parallel.workers = 3;

    sled::run_campaign(first, sled::synthetic_plan_factory());
    sled::run_campaign(second, sled::synthetic_plan_factory());
    sled::run_campaign(parallel, sled::synthetic_plan_factory());

    check_same_dir(first.out_dir, second.out_dir);
    check_same_dir(first.out_dir, parallel.out_dir);

    sled::RunConfig reseeded = base_config(tmp.path / "d", 8);
    sled::run_campaign(reseeded, sled::synthetic_plan_factory());
    CHECK(slurp(first.out_dir / "outcomes.jsonl") !=
          slurp(reseeded.out_dir / "outcomes.jsonl"));
  }

  TEST_CASE("resume over a finished campaign skips everything") {
    sled_test::TempDir tmp;
    sled::RunConfig config = base_config(tmp.path / "run");
    sled::run_campaign(config, sled::synthetic_plan_factory());
    auto before = dir_snapshot(config.out_dir);

    config.resume = true;
    sled::CampaignResult result = sled::run_campaign(config, sled::synthetic_plan_factory());
    CHECK(result.questions_run == 0);
    CHECK(result.questions_skipped == 5);
    CHECK(result.trials_run == 0);
    CHECK(result.trials_skipped == 15);
    CHECK(result.hard_failures == 0);

    auto after = dir_snapshot(config.out_dir);
    CHECK(before == after);
    const sled::MetricCell* asr = find_cell(result.report, "all", "asr", 3);
    REQUIRE(asr != nullptr);
    CHECK(asr->questions == 5);
  }

  TEST_CASE("kill and resume reproduces the uninterrupted run byte for byte") {
    sled_test::TempDir tmp;
    sled::RunConfig reference = base_config(tmp.path / "ref");
    sled::run_campaign(reference, sled::synthetic_plan_factory());

    SUBCASE("cut mid-line inside the third question") {
      sled::RunConfig config = base_config(tmp.path / "killed");
      sled::run_campaign(config, sled::synthetic_plan_factory());
      // Keep q1+q2 blocks and one committed q3 trial, then a half-written line.
      truncate_outcomes(config.out_dir, 7, R"({"question_id":"law-00)");
      fs::remove(config.out_dir / "report.json");
      fs::remove(config.out_dir / "report.csv");
      fs::remove(config.out_dir / "traces" / "law-0001_t3.jsonl");
      fs::remove(config.out_dir / "traces" / "phy-0001_t1.jsonl");
      fs::remove(config.out_dir / "traces" / "psy-0001_t2.jsonl");

      config.resume = true;
      sled::CampaignResult result = sled::run_campaign(config, sled::synthetic_plan_factory());
      CHECK(result.questions_skipped == 2);
      CHECK(result.questions_run == 3);
      CHECK(result.trials_skipped == 6);
      CHECK(result.trials_run == 9);
      REQUIRE(result.flags.size() == 2);
      CHECK(result.flags[0] ==
            "outcomes file ended mid-line; dropped the partial trailing line");
      CHECK(result.flags[1] == "dropped 1 uncommitted trial lines for question 'law-0001'");
      check_same_dir(reference.out_dir, config.out_dir);
    }

    SUBCASE("cut exactly at a question boundary") {
      sled::RunConfig config = base_config(tmp.path / "killed2");
      sled::run_campaign(config, sled::synthetic_plan_factory());
      truncate_outcomes(config.out_dir, 6);

      config.resume = true;
      sled::CampaignResult result = sled::run_campaign(config, sled::synthetic_plan_factory());
      CHECK(result.questions_skipped == 2);
      CHECK(result.questions_run == 3);
      CHECK(result.flags.empty());
      check_same_dir(reference.out_dir, config.out_dir);
    }

    SUBCASE("killed before the first outcome line") {
      sled::RunConfig config = base_config(tmp.path / "killed3");
      sled::run_campaign(config, sled::synthetic_plan_factory());
      truncate_outcomes(config.out_dir, 0);
      fs::remove(config.out_dir / "report.json");
      fs::remove(config.out_dir / "report.csv");

      config.resume = true;
      sled::CampaignResult result = sled::run_campaign(config, sled::synthetic_plan_factory());
      CHECK(result.questions_run == 5);
      CHECK(result.trials_skipped == 0);
      check_same_dir(reference.out_dir, config.out_dir);
    }

    SUBCASE("resume over an empty outcomes file acts like a fresh run") {
      sled::RunConfig config = base_config(tmp.path / "killed4");
      fs::create_directories(config.out_dir);
      write_text(config.out_dir / "outcomes.jsonl", "");
      config.resume = true;
      sled::CampaignResult result = sled::run_campaign(config, sled::synthetic_plan_factory());
      CHECK(result.questions_run == 5);
      check_same_dir(reference.out_dir, config.out_dir);
    }
  }

  TEST_CASE("resume refuses foreign or damaged state") {
    sled_test::TempDir tmp;
    sled::RunConfig config = base_config(tmp.path / "run");
    sled::run_campaign(config, sled::synthetic_plan_factory());

    SUBCASE("rerun without resume") {
      CHECK_THROWS_WITH_AS(sled::run_campaign(config, sled::synthetic_plan_factory()),
                           doctest::Contains("already holds campaign outcomes"),
                           std::runtime_error);
    }

    SUBCASE("resume under a different seed") {
      sled::RunConfig reseeded = config;
      reseeded.seed = 99;
      reseeded.resume = true;
      CHECK_THROWS_WITH_AS(sled::run_campaign(reseeded, sled::synthetic_plan_factory()),
                           doctest::Contains("refusing to mix campaigns"), std::runtime_error);
    }

    SUBCASE("interior corruption is fatal") {
      fs::path path = config.out_dir / "outcomes.jsonl";
      std::vector<std::string> lines = read_lines(path);
      lines[3] = "not json at all";
      std::string content;
      for (const std::string& line : lines) content += line + "\n";
      write_text(path, content);
      config.resume = true;
      CHECK_THROWS_WITH_AS(sled::run_campaign(config, sled::synthetic_plan_factory()),
                           doctest::Contains("corrupt at line 4"), std::runtime_error);
    }

    SUBCASE("headerless outcome files are rejected") {
      fs::path path = config.out_dir / "outcomes.jsonl";
      std::vector<std::string> lines = read_lines(path);
      std::string content;
      for (size_t i = 1; i < lines.size(); ++i) content += lines[i] + "\n";
      write_text(path, content);
      config.resume = true;
      CHECK_THROWS_WITH_AS(sled::run_campaign(config, sled::synthetic_plan_factory()),
                           doctest::Contains("lacks its provenance header"), std::runtime_error);
    }

    SUBCASE("unknown question ids are rejected") {
      fs::path path = config.out_dir / "outcomes.jsonl";
      std::vector<std::string> lines = read_lines(path);
      std::string content = lines[0] + "\n";
      content += R"({"question_id":"ghost-1","trial_index":1,"success":false,"subject":"CS"})";
      content += "\n";
      write_text(path, content);
      config.resume = true;
      CHECK_THROWS_WITH_AS(sled::run_campaign(config, sled::synthetic_plan_factory()),
                           doctest::Contains("not in the dataset"), std::runtime_error);
    }
  }

  TEST_CASE("a failing question is isolated and recoverable") {
    sled_test::TempDir tmp;
    sled::RunConfig config = base_config(tmp.path / "run");
    sled::CampaignResult broken = sled::run_campaign(config, failing_factory("law-0001"));

    CHECK(broken.hard_failures == 1);
    CHECK(broken.questions_run == 4);
    CHECK(broken.trials_run == 12);
    REQUIRE(broken.flags.size() == 1);
    CHECK(broken.flags[0] ==
          "question law-0001 failed and was excluded: endpoint exploded");
    CHECK(find_cell(broken.report, "Law", "asr", 1) == nullptr);
    const sled::MetricCell* all_asr = find_cell(broken.report, "all", "asr", 3);
    REQUIRE(all_asr != nullptr);
    CHECK(all_asr->questions == 4);
    CHECK(sled::load_outcomes(config.out_dir / "outcomes.jsonl").size() == 12);

    config.resume = true;
    sled::CampaignResult healed = sled::run_campaign(config, sled::synthetic_plan_factory());
    CHECK(healed.hard_failures == 0);
    CHECK(healed.questions_skipped == 4);
    CHECK(healed.questions_run == 1);
    CHECK(sled::load_outcomes(config.out_dir / "outcomes.jsonl").size() == 15);
    const sled::MetricCell* law = find_cell(healed.report, "Law", "asr", 3);
    REQUIRE(law != nullptr);
    CHECK(law->questions == 1);
  }

  TEST_CASE("a campaign where every question fails skips the report") {
    sled_test::TempDir tmp;
    sled::RunConfig config = base_config(tmp.path / "run");
    sled::CampaignResult result = sled::run_campaign(config, [](const sled::QuestionRecord&) {
      throw std::runtime_error("nothing works");
      return sled::QuestionPlan{};
    });
    CHECK(result.hard_failures == 5);
    CHECK(result.questions_run == 0);
    REQUIRE(result.flags.size() == 6);
    CHECK(result.flags.back() == "no outcomes were produced; skipping the report");
    CHECK_FALSE(fs::exists(config.out_dir / "report.json"));
    CHECK_FALSE(fs::exists(config.out_dir / "report.csv"));
  }

  TEST_CASE("awkward question ids get collision-proof trace names") {
    sled_test::TempDir tmp;
    std::vector<sled::QuestionRecord> questions;
    sled::QuestionRecord q;
    q.question_id = "public/means:q 1";
    q.subject = "CS";
    q.question = "placeholder";
    q.choices = {"a", "b", "c", "d"};
    q.answer_index = 0;
    questions.push_back(q);
    q.question_id = "public_means_q-1";
    questions.push_back(q);
    fs::path dataset = tmp.path / "weird.jsonl";
    sled::save_dataset(questions, dataset);

    sled::RunConfig config = base_config(tmp.path / "run");
    config.dataset_path = dataset;
    config.k_trials = 1;
    sled::CampaignResult result = sled::run_campaign(config, sled::synthetic_plan_factory());
    CHECK(result.questions_run == 2);

    std::set<std::string> names;
    for (const auto& entry : fs::directory_iterator(config.out_dir / "traces"))
      names.insert(entry.path().filename().string());
    REQUIRE(names.size() == 2);
    std::string mangled =
        "public_means_q_1-" + sled::hex64(sled::hash_str64("public/means:q 1")).substr(0, 8) +
        "_t1.jsonl";
    CHECK(names.count(mangled) == 1);
    CHECK(names.count("public_means_q-1_t1.jsonl") == 1);
  }

  TEST_CASE("load_outcomes honors the provenance header rules") {
    sled_test::TempDir tmp;
    fs::path path = tmp.path / "outcomes.jsonl";
    std::string row =
        R"({"question_id":"q1","trial_index":1,"success":true,"subject":"Bio"})";
    std::string header = R"({"type":"outcome_header","version":"x","seed":1,"config_hash":"y"})";

    write_text(path, header + "\n" + row + "\n");
    CHECK(sled::load_outcomes(path).size() == 1);

    write_text(path, row + "\n" + header + "\n");
    CHECK_THROWS_WITH_AS(sled::load_outcomes(path),
                         doctest::Contains("unexpected typed line 'outcome_header'"),
                         std::runtime_error);

    write_text(path, header + "\n" + header + "\n" + row + "\n");
    CHECK_THROWS_WITH_AS(sled::load_outcomes(path), doctest::Contains("unexpected typed line"),
                         std::runtime_error);
  }
}
