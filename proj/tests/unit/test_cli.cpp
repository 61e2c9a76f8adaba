#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>

#include <unistd.h>

#include "connectoflow/commands.hpp"
#include "connectoflow/errors.hpp"
#include "connectoflow/io.hpp"
#include "doctest.h"

using namespace connectoflow;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("connectoflow_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

RunConfig small_run() {
  RunConfig c;
  c.seed = 3;
  c.folds = 2;
  c.synth.n_stable = 8;
  c.synth.n_progressive = 6;
  c.synth.nodes = 21;
  c.synth.samples = 12;
  c.synth.max_visits = 3;
  c.synth.planted_rois = {0, 1, 2};
  c.synth.planted_edges = {{3, 4}, {6, 7}};
  c.synth.seed = c.seed;
  c.train.model.hidden = 4;
  c.train.model.head_hidden1 = 8;
  c.train.model.head_hidden2 = 4;
  c.train.model.sde_hidden = 4;
  c.train.epochs = 2;
  c.train.batch = 4;
  c.recon.epochs = 1;
  c.recon.latent = 4;
  c.recon.encoder_hidden = 8;
  c.recon.decoder_hidden = 8;
  c.recon.sde_hidden = 4;
  c.rnn_hidden = 4;
  c.interpret.top_rois = 5;
  c.interpret.top_edges = 5;
  return c;
}

std::string slurp(const std::string& path) { return read_text(path); }

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST_CASE("default config synthesizes 180 subjects on disk") {
  TempDir tmp("default");
  const auto manifest = cmd_synth(RunConfig{}, tmp / "cohort");
  CHECK(manifest["subjects"].size() == 180);
  std::size_t subject_manifests = 0;
  for (const auto& e : fs::directory_iterator(tmp.path / "cohort" / "subjects"))
    if (e.path().extension() == ".json") ++subject_manifests;
  CHECK(subject_manifests == 180);
  CHECK(fs::exists(tmp.path / "cohort" / "truth.json"));
}

TEST_CASE("synth is deterministic and refuses a missing parent") {
  TempDir tmp("synth");
  const RunConfig c = small_run();
  const auto a = cmd_synth(c, tmp / "a");
  const auto b = cmd_synth(c, tmp / "b");
  CHECK(a["files"] == b["files"]);
  try {
    cmd_synth(c, tmp / "no/such/dir");
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(exit_code_for(e) == 2);
  }
}

TEST_CASE("exit code mapping") {
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(InputError("x")) == 2);
  CHECK(exit_code_for(StateError("x")) == 3);
  CHECK(exit_code_for(DivergenceError("x")) == 4);
  CHECK(exit_code_for(TrainingError("x")) == 4);
}

TEST_CASE("train writes every table, is reproducible and resumes from fold checkpoints") {
  TempDir tmp("train");
  const RunConfig c = small_run();
  cmd_synth(c, tmp / "cohort");
  std::vector<std::string> lines;
  const TrainOutcome first = cmd_train(tmp / "cohort", c, tmp / "run", [&](const std::string& l) { lines.push_back(l); });
  CHECK(first.run.folds.size() == 2);
  for (double s : first.run.scores) CHECK(std::isfinite(s));

  const std::regex kv(R"(^event=\w+( \w+=("[^"]*"|\S+))*$)");
  std::size_t epochs = 0;
  for (const std::string& l : lines) {
    CHECK(std::regex_match(l, kv));
    if (l.rfind("event=epoch ", 0) == 0) ++epochs;
  }
  CHECK(epochs == c.folds * c.train.epochs);

  const std::string metrics = slurp(tmp / "run/metrics.csv");
  CHECK(metrics.rfind("fold,accuracy,roc_auc,sensitivity,specificity\n", 0) == 0);
  CHECK(count_lines(metrics) == 1 + c.folds + 1);
  CHECK(count_lines(slurp(tmp / "run/scores.csv")) == 1 + 14);
  CHECK(count_lines(slurp(tmp / "run/roi_scores.csv")) == 1 + 21);
  CHECK(count_lines(slurp(tmp / "run/edges.csv")) == 1 + 21 * 20 / 2);
  CHECK(slurp(tmp / "run/edges.csv").rfind("i,j,t,p,p_adj,significant\n", 0) == 0);
  CHECK(count_lines(slurp(tmp / "run/heatmap.csv")) == 1 + 49);
  CHECK(count_lines(slurp(tmp / "run/training_log.csv")) == 1 + c.folds * c.train.epochs);
  const auto report = nlohmann::json::parse(slurp(tmp / "run/report.json"));
  CHECK(report["folds"].size() == c.folds);
  CHECK(report["complete"] == true);

  const char* tables[] = {"metrics.csv", "scores.csv", "roi_scores.csv", "edges.csv", "heatmap.csv",
                          "training_log.csv"};
  std::map<std::string, std::string> before;
  for (const char* t : tables) before[t] = slurp((tmp.path / "run" / t).string());

  SUBCASE("fresh rerun in a new directory is byte-identical") {
    cmd_train(tmp / "cohort", c, tmp / "run2");
    for (const char* t : tables) CHECK(slurp((tmp.path / "run2" / t).string()) == before[t]);
  }
  SUBCASE("rerun in place resumes every fold with identical output") {
    std::vector<std::string> again;
    const TrainOutcome second =
        cmd_train(tmp / "cohort", c, tmp / "run", [&](const std::string& l) { again.push_back(l); });
    for (const FoldResult& f : second.run.folds) CHECK(f.resumed);
    for (const std::string& l : again) CHECK(l.rfind("event=epoch ", 0) != 0);
    for (const char* t : tables) CHECK(slurp((tmp.path / "run" / t).string()) == before[t]);
  }
  SUBCASE("a killed run resumes at the next fold") {
    fs::remove_all(tmp.path / "run" / "checkpoints" / "fold_1");
    fs::remove(tmp.path / "run" / "report.json");
    const TrainOutcome second = cmd_train(tmp / "cohort", c, tmp / "run");
    CHECK(second.run.folds[0].resumed);
    CHECK_FALSE(second.run.folds[1].resumed);
    for (const char* t : tables) CHECK(slurp((tmp.path / "run" / t).string()) == before[t]);
  }
  SUBCASE("a different config in the same directory is a state error") {
    RunConfig other = c;
    other.train.epochs = 3;
    CHECK_THROWS_AS(cmd_train(tmp / "cohort", other, tmp / "run"), StateError);
  }
  SUBCASE("the input cohort is left untouched") {
    const auto manifest = nlohmann::json::parse(slurp(tmp / "cohort/manifest.json"));
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(tmp.path / "cohort"))
      if (e.is_regular_file()) ++files;
    CHECK(files == manifest["files"].size() + 1);
    CHECK_NOTHROW(read_cohort(tmp / "cohort"));
  }
}

TEST_CASE("folds on several threads match the single-threaded run") {
  TempDir tmp("threads");
  RunConfig c = small_run();
  c.folds = 3;
  cmd_synth(c, tmp / "cohort");
  const CohortFiles cohort = read_cohort(tmp / "cohort");
  const PassThroughCompleter pass;
  const auto graphs = build_graphs(cohort.subjects, pass, c);
  const RunResult one = cross_validate(graphs, c, "", 1);
  const RunResult three = cross_validate(graphs, c, "", 3);
  REQUIRE(one.scores.size() == three.scores.size());
  for (std::size_t k = 0; k < one.scores.size(); ++k) CHECK(one.scores[k] == three.scores[k]);
}

TEST_CASE("divergent folds are recorded and flagged") {
  TempDir tmp("diverge");
  RunConfig c = small_run();
  c.train.lr = 1e300;
  cmd_synth(c, tmp / "cohort");
  const CohortFiles cohort = read_cohort(tmp / "cohort");
  const PassThroughCompleter pass;
  const auto graphs = build_graphs(cohort.subjects, pass, c);
  try {
    cross_validate(graphs, c, "", 1);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(exit_code_for(e) == 4);
  }
}

TEST_CASE("masked cohort: every reconstruction arm fills the gaps; the mean arm trains nothing") {
  TempDir tmp("masked");
  RunConfig c = small_run();
  c.missing_rate = 0.5;
  cmd_synth(c, tmp / "cohort");
  const CohortFiles cohort = read_cohort(tmp / "cohort");
  for (const char* method : {"sde", "rnn", "mean"}) {
    RunConfig arm = c;
    arm.recon_method = method;
    const Completion completion = fit_completion(cohort.subjects, arm);
    CHECK(completion.completer->name() == method);
    CHECK((completion.model == nullptr) == (std::string(method) == "mean"));
    const Visit& v = cohort.subjects[0].visits[0];
    const Matrix filled = completion.completer->complete(v);
    for (std::size_t col = 0; col < v.present.size(); ++col)
      for (std::size_t r = 0; r < filled.rows(); ++r) {
        CHECK(std::isfinite(filled(r, col)));
        if (v.present[col]) CHECK(filled(r, col) == v.signals(r, col));
      }
  }
  // nothing missing: no training at all
  RunConfig full = small_run();
  full.recon_method = "sde";
  cmd_synth(full, tmp / "full");
  CHECK_FALSE(fit_completion(read_cohort(tmp / "full").subjects, full).trained);
}

TEST_CASE("ablation arms and tables") {
  const RunConfig base = small_run();
  auto names = [](const std::vector<Arm>& arms) {
    std::vector<std::string> out;
    for (const Arm& a : arms) out.push_back(a.name);
    return out;
  };
  CHECK(names(ablation_arms("recon", base, 6)) == std::vector<std::string>{"sde", "rnn", "mean"});
  CHECK(names(ablation_arms("timepoints=1,6", base, 6)) == std::vector<std::string>{"t1", "t6"});
  CHECK(ablation_arms("timepoints", base, 3).size() == 3);
  CHECK(ablation_arms("timepoints=1,6", base, 6)[1].config.timepoints == 6);
  CHECK_THROWS_AS(ablation_arms("depth", base, 6), ConfigError);
  CHECK_THROWS_AS(ablation_arms("recon=sde", base, 6), ConfigError);
  CHECK_THROWS_AS(ablation_arms("recon=sde,ode", base, 6), ConfigError);
  CHECK_THROWS_AS(ablation_arms("timepoints=0,2", base, 6), ConfigError);

  TempDir tmp("ablate");
  cmd_synth(base, tmp / "cohort");
  const AblationOutcome out = cmd_ablate(tmp / "cohort", base, "timepoints=1,3", tmp / "abl");
  const std::string table = slurp(tmp / "abl/ablation.csv");
  CHECK(count_lines(table) == 1 + 2 * base.folds);
  CHECK(table.rfind("arm,fold,accuracy,roc_auc,sensitivity,specificity\n", 0) == 0);
  CHECK(count_lines(slurp(tmp / "abl/delong.csv")) == 2);
  REQUIRE(out.delong.size() == 1);
  CHECK(out.delong[0].p >= 0.0);
  CHECK(out.delong[0].p <= 1.0);
}

TEST_CASE("report emits 49 heatmap cells and labels that match the CSVs") {
  TempDir tmp("report");
  const RunConfig c = small_run();
  cmd_synth(c, tmp / "cohort");
  CHECK_THROWS_AS(cmd_report(tmp / "nothing", tmp / "fig0"), StateError);
  cmd_train(tmp / "cohort", c, tmp / "run");
  cmd_report(tmp / "run", tmp / "fig");
  const std::string heat = slurp(tmp / "fig/heatmap.svg");
  std::size_t cells = 0;
  for (std::size_t pos = heat.find("class=\"cell\""); pos != std::string::npos;
       pos = heat.find("class=\"cell\"", pos + 1))
    ++cells;
  CHECK(cells == 49);
  const std::string metrics_svg = slurp(tmp / "fig/metrics.svg");
  std::istringstream csv(slurp(tmp / "fig/metrics.csv"));
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    const std::string value = line.substr(line.find(',') + 1);
    CHECK(metrics_svg.find(">" + value + "</text>") != std::string::npos);
  }
  fs::remove(tmp.path / "run" / "edges.csv");
  CHECK_THROWS_AS(cmd_report(tmp / "run", tmp / "fig2"), StateError);
}
