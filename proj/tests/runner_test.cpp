#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "asmb/runner.hpp"
#include "asmb/synth.hpp"

using namespace asmb;

namespace {

RunConfig default_config() {
  RunConfig c;
  c.context_budget = 2048;
  return c;
}

SynthConfig gap10_config() {
  SynthConfig c;
  c.gap_min = 10;
  c.gap_max = 10;
  return c;
}

}  // namespace

TEST_CASE("the oracle reproduces the ground truth in every mode") {
  SynthConfig sc;
  Task task = generate_task(derive_task_seed(1, 0), sc, 0);
  OraclePolicy oracle;
  for (HistoryMode mode : {HistoryMode::Raw, HistoryMode::Summary, HistoryMode::Asm}) {
    RunRecord rec = run_task(task, oracle, mode, default_config());
    REQUIRE(rec.steps.size() == task.steps.size());
    for (size_t i = 0; i < rec.steps.size(); ++i) {
      CHECK(rec.steps[i].predicted == task.steps[i].action);
      CHECK(rec.steps[i].gt == task.steps[i].action);  // teacher forcing
    }
    CHECK(ams(rec, task) == doctest::Approx(100.0));
    CHECK(evaluate_task(task, rec).success);
  }
}

TEST_CASE("a task without anchors runs clean in asm mode") {
  Task t;
  t.id = "t_plain";
  t.instruction = "scroll around";
  t.apps = {"a"};
  for (int i = 0; i < 6; ++i) {
    Step s;
    s.state.step_index = i;
    s.state.screenshot_ref = "s";
    s.state.app = "a";
    s.action = Action::swipe(500, 500, SwipeDirection::Up);
    t.steps.push_back(s);
  }
  OraclePolicy oracle;
  RunRecord rec = run_task(t, oracle, HistoryMode::Asm, default_config());
  CHECK(rec.final_bank.empty());
  CHECK(rec.errors.empty());
  for (const auto& s : rec.steps) CHECK(s.proposal_outcome == "none");
}

TEST_CASE("forgetful(5) misses the value in raw mode and only there") {
  Task task = generate_task(derive_task_seed(6, 0), gap10_config(), 0);
  ForgetfulPolicy forgetful(5);

  int reuse_step = -1;
  std::string value;
  for (const Anchor* a : task.all_anchors()) {
    if (a->type == AnchorType::Dependency) {
      reuse_step = a->predicate->step_lo;
      for (const auto& e : a->evidence) {
        if (!e.extracted_value.empty()) value = e.extracted_value;
      }
    }
  }
  REQUIRE(reuse_step >= 0);
  REQUIRE(!value.empty());

  RunRecord raw = run_task(task, forgetful, HistoryMode::Raw, default_config());
  for (size_t i = 0; i < raw.steps.size(); ++i) {
    if (static_cast<int>(i) == reuse_step) {
      CHECK(raw.steps[i].predicted.value == "UNKNOWN");
    } else {
      CHECK(raw.steps[i].predicted == task.steps[i].action);
    }
  }
  CHECK(!evaluate_task(task, raw).success);

  RunRecord asm_rec = run_task(task, forgetful, HistoryMode::Asm, default_config());
  CHECK(asm_rec.steps[reuse_step].predicted.value == value);
  CHECK(evaluate_task(task, asm_rec).success);
}

TEST_CASE("asm runs snapshot the bank and record proposal outcomes") {
  Task task = generate_task(derive_task_seed(6, 1), gap10_config(), 1);
  OraclePolicy oracle;
  RunRecord rec = run_task(task, oracle, HistoryMode::Asm, default_config());
  CHECK(rec.final_bank.size() == task.all_anchors().size());
  int accepted = 0;
  for (const auto& s : rec.steps) accepted += s.proposal_outcome == "accepted";
  CHECK(accepted == static_cast<int>(task.all_anchors().size()));
}

TEST_CASE("run_suite executes the full matrix") {
  SynthConfig sc;
  sc.num_tasks = 1;
  GeneratedSuite suite = generate_suite(sc);
  auto oracle = std::make_shared<OraclePolicy>();
  SuiteRunResult result = run_suite(
      suite.tasks, {oracle},
      {HistoryMode::Raw, HistoryMode::Summary, HistoryMode::Asm}, default_config());
  CHECK(result.records.size() == 3);
  CHECK(result.report.cells.size() == 3);
  CHECK(result.report.failures.empty());
}

TEST_CASE("identical configs give byte-identical records for scripted policies") {
  SynthConfig sc;
  sc.num_tasks = 4;
  sc.seed = 17;
  GeneratedSuite suite = generate_suite(sc);
  auto forgetful = std::make_shared<ForgetfulPolicy>(5);
  const std::vector<HistoryMode> modes = {HistoryMode::Raw, HistoryMode::Summary,
                                          HistoryMode::Asm};
  SuiteRunResult a = run_suite(suite.tasks, {forgetful}, modes, default_config());
  SuiteRunResult b = run_suite(suite.tasks, {forgetful}, modes, default_config());
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(run_record_to_json(a.records[i]).dump() ==
          run_record_to_json(b.records[i]).dump());
  }
}

TEST_CASE("concurrency does not change results") {
  SynthConfig sc;
  sc.num_tasks = 6;
  sc.seed = 23;
  GeneratedSuite suite = generate_suite(sc);
  auto oracle = std::make_shared<OraclePolicy>();
  RunConfig serial = default_config();
  RunConfig parallel = default_config();
  parallel.concurrency = 4;
  const std::vector<HistoryMode> modes = {HistoryMode::Raw, HistoryMode::Asm};
  SuiteRunResult a = run_suite(suite.tasks, {oracle}, modes, serial);
  SuiteRunResult b = run_suite(suite.tasks, {oracle}, modes, parallel);
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(run_record_to_json(a.records[i]).dump() ==
          run_record_to_json(b.records[i]).dump());
  }
}

TEST_CASE("persisted runs resume instead of re-executing") {
  namespace fs = std::filesystem;
  const std::string dir =
      (fs::temp_directory_path() / "asmb_resume_test").string();
  fs::remove_all(dir);

  SynthConfig sc;
  sc.num_tasks = 2;
  GeneratedSuite suite = generate_suite(sc);
  auto oracle = std::make_shared<OraclePolicy>();
  RunConfig config = default_config();
  SuiteRunResult first = run_suite(suite.tasks, {oracle}, {HistoryMode::Raw},
                                   config, dir);
  CHECK(first.report.executed == 2);
  CHECK(first.report.resumed == 0);
  SuiteRunResult second = run_suite(suite.tasks, {oracle}, {HistoryMode::Raw},
                                    config, dir);
  CHECK(second.report.executed == 0);
  CHECK(second.report.resumed == 2);

  // Changing the config hash invalidates the resume.
  RunConfig other = config;
  other.context_budget = 512;
  SuiteRunResult third = run_suite(suite.tasks, {oracle}, {HistoryMode::Raw},
                                   other, dir);
  CHECK(third.report.executed == 2);
  fs::remove_all(dir);
}

TEST_CASE("step accounting: wall-time sums and token means line up") {
  SynthConfig sc;
  sc.num_tasks = 3;
  GeneratedSuite suite = generate_suite(sc);
  auto oracle = std::make_shared<OraclePolicy>();
  SuiteRunResult result =
      run_suite(suite.tasks, {oracle}, {HistoryMode::Raw}, default_config());
  double per_step_tokens = 0;
  long steps = 0;
  for (const auto& rec : result.records) {
    double sum = 0;
    for (const auto& s : rec.steps) {
      sum += s.wall_time_seconds;
      per_step_tokens += static_cast<double>(s.usage.total());
      ++steps;
    }
    CHECK(sum <= rec.total_wall_seconds + 1e-12);
  }
  REQUIRE(result.report.cells.size() == 1);
  const double reported = result.report.cells[0].avg_tokens;
  CHECK(std::abs(reported - per_step_tokens / static_cast<double>(steps)) < 1e-9);
}

TEST_CASE("asm context stays cheaper than raw on long tasks") {
  SynthConfig sc;
  sc.num_tasks = 4;
  sc.len_min = 30;
  sc.len_max = 40;
  sc.seed = 33;
  GeneratedSuite suite = generate_suite(sc);
  auto oracle = std::make_shared<OraclePolicy>();
  for (const auto& task : suite.tasks) {
    RunRecord raw = run_task(task, *oracle, HistoryMode::Raw, default_config());
    RunRecord asm_rec = run_task(task, *oracle, HistoryMode::Asm, default_config());
    double raw_mean = 0, asm_mean = 0;
    for (const auto& s : raw.steps) raw_mean += static_cast<double>(s.context_tokens);
    for (const auto& s : asm_rec.steps) asm_mean += static_cast<double>(s.context_tokens);
    CHECK(asm_mean < raw_mean);
  }
}

TEST_CASE("run_suite quarantines failing cells instead of aborting") {
  class ExplodingPolicy : public Policy {
   public:
    std::string name() const override { return "exploding"; }
    PolicyResult decide(const PromptBundle&, const StepView& view) override {
      if (view.task->id.find("_1") != std::string::npos) {
        throw std::runtime_error("synthetic blowup");
      }
      PolicyResult res;
      res.decision.action = view.task->steps[view.step_index].action;
      return res;
    }
  };
  SynthConfig sc;
  sc.num_tasks = 3;
  GeneratedSuite suite = generate_suite(sc);
  auto policy = std::make_shared<ExplodingPolicy>();
  SuiteRunResult result =
      run_suite(suite.tasks, {policy}, {HistoryMode::Raw}, default_config());
  CHECK(result.records.size() == 2);
  REQUIRE(result.report.failures.size() == 1);
  CHECK(result.report.failures[0].error.find("synthetic blowup") != std::string::npos);
}

TEST_CASE("evaluate_cell flags suite tasks without a record") {
  SynthConfig sc;
  sc.num_tasks = 3;
  GeneratedSuite suite = generate_suite(sc);
  auto oracle = std::make_shared<OraclePolicy>();
  SuiteRunResult result =
      run_suite(suite.tasks, {oracle}, {HistoryMode::Raw}, default_config());
  std::vector<RunRecord> partial = {result.records[0], result.records[2]};
  MetricReport rep = evaluate_cell(suite.tasks, partial);
  REQUIRE(rep.missing_tasks.size() == 1);
  CHECK(rep.missing_tasks[0] == suite.tasks[1].id);
  CHECK(rep.overall.tasks == 2);
}

TEST_CASE("llm summary carry-forward is logged when summary_en is absent") {
  // A policy that never writes summaries while claiming model summaries.
  class NoSummaryPolicy : public Policy {
   public:
    std::string name() const override { return "nosummary"; }
    bool scripted_summary() const override { return false; }
    PolicyResult decide(const PromptBundle&, const StepView& view) override {
      PolicyResult res;
      res.decision.action = view.task->steps[view.step_index].action;
      return res;
    }
  };
  SynthConfig sc;
  Task task = generate_task(derive_task_seed(2, 0), sc, 0);
  NoSummaryPolicy policy;
  RunRecord rec = run_task(task, policy, HistoryMode::Summary, default_config());
  int carried = 0;
  for (const auto& e : rec.errors) carried += e.kind == "summary_carry_forward";
  CHECK(carried == task.length());
}
