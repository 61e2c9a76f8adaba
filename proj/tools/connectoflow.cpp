#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "connectoflow/commands.hpp"
#include "connectoflow/config.hpp"
#include "connectoflow/errors.hpp"

using namespace connectoflow;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string cohort;
  std::string axis;
  std::string run;
};

RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.synth.seed = *o.seed;
  }
  validate(c);
  return c;
}

void print_line(const std::string& line) { std::cout << line << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"connectoflow: SDE-guided spatio-temporal GNN for longitudinal connectomes"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "run config JSON (defaults apply to missing keys)");
    sub->add_option("--seed", o.seed, "overrides the config seed");
  };

  CLI::App* synth = app.add_subcommand("synth", "write a synthetic cohort with planted ground truth");
  common(synth);
  synth->add_option("--out", o.out, "cohort directory (its parent must exist)")->required();

  CLI::App* train = app.add_subcommand("train", "reconstruct, build graphs, cross-validate, interpret");
  common(train);
  train->add_option("--cohort", o.cohort, "cohort directory written by synth")->required();
  train->add_option("--out", o.out, "run directory; rerunning resumes after the last finished fold")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "compare reconstruction arms or timepoint counts");
  common(ablate);
  ablate->add_option("--cohort", o.cohort, "cohort directory written by synth")->required();
  ablate->add_option("--out", o.out, "ablation directory")->required();
  ablate->add_option("--axis", o.axis, "recon[=sde,rnn,mean] or timepoints[=1,6]")->required();

  CLI::App* report = app.add_subcommand("report", "SVG figures and CSV tables for a finished run");
  report->add_option("run", o.run, "run directory written by train")->required();
  report->add_option("--out", o.out, "figure directory (default <run>/figures)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      const auto manifest = cmd_synth(resolve(o), o.out);
      print_line("event=synth_done subjects=" + std::to_string(manifest["subjects"].size()) +
                 " files=" + std::to_string(manifest["files"].size()) + " out=" + o.out);
    } else if (train->parsed()) {
      cmd_train(o.cohort, resolve(o), o.out, print_line);
    } else if (ablate->parsed()) {
      const AblationOutcome r = cmd_ablate(o.cohort, resolve(o), o.axis, o.out, print_line);
      for (std::size_t k = 0; k < r.pairs.size(); ++k)
        print_line("event=delong arm_a=" + r.arms[r.pairs[k].first] + " arm_b=" + r.arms[r.pairs[k].second] +
                   " auc_a=" + format_double(r.delong[k].auc_a) + " auc_b=" + format_double(r.delong[k].auc_b) +
                   " p=" + format_double(r.delong[k].p));
    } else if (report->parsed()) {
      const std::string out = o.out.empty() ? o.run + "/figures" : o.out;
      cmd_report(o.run, out);
      print_line("event=report_done out=" + out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return exit_code_for(e);
  }
  return 0;
}
