// Acceptance checks. Prints one PASS/FAIL line per check (also kept in DIR/results.txt)
// and exits nonzero if any check fails that is not listed as a known failure.
//   acceptance --work DIR [--only name,name] [--known-failures name,name]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"

#include "connectoflow/commands.hpp"
#include "connectoflow/errors.hpp"
#include "connectoflow/graph.hpp"
#include "connectoflow/interpret.hpp"
#include "connectoflow/io.hpp"
#include "connectoflow/losses.hpp"
#include "connectoflow/sde.hpp"
#include "connectoflow/stats.hpp"
#include "connectoflow/stgnn.hpp"
#include "connectoflow/synth.hpp"
#include "gradcheck.hpp"

using namespace connectoflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << x;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void log_line(const std::string& line) { std::cerr << "  " << line << "\n"; }

// Only the per-fold lines; epoch lines would swamp the log.
void quiet_progress(const std::string& line) {
  if (line.rfind("event=epoch", 0) == 0 || line.rfind("event=recon_epoch", 0) == 0) return;
  log_line(line);
}

// ---- gradient integrity --------------------------------------------------

Outcome gradient_integrity() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  auto note = [&](const std::string& name, const gradcheck::Report& r) {
    if (r.max_rel_error > worst || std::isnan(r.max_rel_error)) {
      worst = std::isnan(r.max_rel_error) ? INFINITY : r.max_rel_error;
      worst_name = name + " " + r.worst;
    }
  };

  using Op = std::function<Var(Tape&, Var, Var)>;
  struct Case {
    std::string name;
    Op op;
    bool positive = false;
    std::size_t rows_b = 3, cols_b = 4;
  };
  const Matrix support{{1, 0, 1, 1}, {0, 1, 1, 0}, {1, 1, 0, 1}};
  const std::vector<Case> cases = {
      {"add", [](Tape&, Var a, Var b) { return add(a, b); }},
      {"sub", [](Tape&, Var a, Var b) { return sub(a, b); }},
      {"mul", [](Tape&, Var a, Var b) { return mul(a, b); }},
      {"neg", [](Tape&, Var a, Var) { return neg(a); }},
      {"scale", [](Tape&, Var a, Var) { return scale(a, -1.7); }},
      {"add_scalar", [](Tape&, Var a, Var) { return add_scalar(a, 0.3); }},
      {"sigmoid", [](Tape&, Var a, Var) { return sigmoid(a); }},
      {"tanh", [](Tape&, Var a, Var) { return tanh(a); }},
      {"relu", [](Tape&, Var a, Var) { return relu(a); }},
      {"softplus", [](Tape&, Var a, Var) { return softplus(a); }},
      {"log", [](Tape&, Var a, Var) { return log(a); }, true},
      {"exp", [](Tape&, Var a, Var) { return exp(a); }},
      {"square", [](Tape&, Var a, Var) { return square(a); }},
      {"pow", [](Tape&, Var a, Var) { return pow(a, -0.5); }, true},
      {"clamp", [](Tape&, Var a, Var) { return clamp(a, -1.0, 1.0); }},
      {"sum", [](Tape&, Var a, Var) { return sum(a); }},
      {"mean", [](Tape&, Var a, Var) { return mean(a); }},
      {"row_sum", [](Tape&, Var a, Var) { return row_sum(a); }},
      {"col_max", [](Tape&, Var a, Var) { return col_max(a); }},
      {"col_mean", [](Tape&, Var a, Var) { return col_mean(a); }},
      {"transpose", [](Tape&, Var a, Var) { return transpose(a); }},
      {"reshape", [](Tape&, Var a, Var) { return reshape(a, 2, 6); }},
      {"concat_cols", [](Tape&, Var a, Var b) { return concat_cols(a, b); }},
      {"slice_cols", [](Tape&, Var a, Var) { return slice_cols(a, 1, 2); }},
      {"stack_rows", [](Tape&, Var a, Var b) { Var parts[] = {a, b, a}; return stack_rows(parts); }},
      {"matmul", [](Tape&, Var a, Var b) { return matmul(a, b); }, false, 4, 2},
      {"add_row", [](Tape&, Var a, Var b) { return add_row(a, b); }, false, 1, 4},
      {"mul_col", [](Tape&, Var a, Var b) { return mul_col(a, b); }, false, 3, 1},
      {"outer_sum", [](Tape&, Var a, Var b) { return outer_sum(slice_cols(a, 0, 1), slice_cols(b, 0, 1)); }},
      {"gather_rows",
       [](Tape&, Var a, Var) {
         static const std::vector<std::size_t> idx = {2, 0, static_cast<std::size_t>(-1), 2};
         return gather_rows(a, idx);
       }},
      {"binary_entropy", [](Tape&, Var a, Var) { return binary_entropy(sigmoid(a)); }},
      {"binary_entropy_support", [&](Tape&, Var a, Var) { return binary_entropy(sigmoid(a), support); }},
      {"edge_probability",
       [](Tape&, Var a, Var b) { return edge_probability_matrix(a, sigmoid(scale(a, 0.7)), b); }, false, 8, 1},
      {"normalize_adjacency",
       [](Tape&, Var a, Var) {
         Var sq = slice_cols(a, 0, 3);
         return normalize_adjacency(square(sq) + transpose(square(sq)));
       }},
  };
  RandomStream rng(17);
  for (const Case& c : cases)
    for (int trial = 0; trial < 3; ++trial) {
      ParamStore store;
      const double lo = c.positive ? 0.2 : -2.0;
      Parameter& a = store.add("a", rng.uniform_matrix(3, 4, lo, 2.0));
      Parameter& b = store.add("b", rng.uniform_matrix(c.rows_b, c.cols_b, lo, 2.0));
      if (c.name == "relu" || c.name == "clamp")
        for (double& v : a.value.data())
          if (std::abs(v) < 0.05 || std::abs(std::abs(v) - 1.0) < 0.05) v += 0.2;
      auto build = [&](Tape& t) {
        Var out = c.op(t, t.param(a), t.param(b));
        RandomStream wr(99);
        return sum(mul(out, t.constant(wr.uniform_matrix(out.rows(), out.cols(), -1, 1))));
      };
      note(c.name, gradcheck::check(store, build));
    }

  // SDE endpoint, drift and diffusion both learned.
  {
    ParamStore store;
    RandomStream init(4);
    MlpSde sde(store, "sde", 3, 5, NoiseType::diagonal, init, 1.0, -1.0);
    Parameter& z0 = store.add("z0", init.normal_matrix(1, 3));
    auto build = [&](Tape& t) {
      RandomStream noise(8);
      return sum(square(integrate(sde, t.param(z0), 0.0, 1.0, 6, &noise)));
    };
    note("sde_integrate", gradcheck::check(store, build, 1e-6));
  }

  // Full loss on one subject with two timepoints and five nodes. Eval mode switches the
  // diffusion term off; train mode keeps it with a fixed noise stream.
  for (Mode mode : {Mode::eval, Mode::train}) {
    RandomStream rng2(38);
    StgnnConfig cfg;
    cfg.hidden = 3;
    cfg.head_hidden1 = 12;
    cfg.head_hidden2 = 8;
    cfg.sde_hidden = 4;
    StgnnModel model(5, 4, cfg, 9);
    model.params().get("masks.px_logits").value = rng2.normal_matrix(5, 4);
    model.params().get("masks.v").value = rng2.normal_matrix(8, 1);
    model.params().get("head.0.bias").value.fill(1.0);
    model.params().get("head.1.bias").value.fill(1.0);
    DynamicGraph g;
    g.subject_id = "S0";
    for (double month : {3.0, 15.0}) {
      GraphSnapshot s;
      s.month = month;
      s.features = rng2.normal_matrix(5, 4);
      s.adjacency = Matrix(5, 5);
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = i + 1; j < 5; ++j)
          if (rng2.uniform() < 0.5) s.adjacency(i, j) = s.adjacency(j, i) = rng2.uniform(0.05, 1.0);
      g.snapshots.push_back(std::move(s));
    }
    auto build = [&](Tape& tape) {
      RandomStream noise(17);
      SubjectForward f = model.forward(tape, g, mode, mode == Mode::train ? &noise : nullptr);
      Var px = model.masks().px(tape);
      SubjectEdgeMasks subjects[] = {f.edge_masks};
      LossComponents parts{ce_loss(f.probability, 1), mi_loss(f.probability, 1), sparsity_loss(px, subjects),
                           entropy_loss(px, subjects)};
      return total_loss(parts, LossWeights{});
    };
    note(mode == Mode::eval ? "end_to_end_zero_diffusion" : "end_to_end_fixed_noise",
         gradcheck::check(model.params(), build, 1e-6));
  }

  const double secs = seconds_since(t0);
  const bool pass = worst < 1e-3 && secs < 60.0;
  return {pass, "max_rel_error=" + fmt(worst, 8) + " (worst: " + worst_name + ") runtime_s=" + fmt(secs, 1)};
}

// ---- SDE solver ----------------------------------------------------------

Outcome sde_solver() {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;

  FunctionSde linear([](Tape&, Var z) { return scale(z, -0.5); }, [](Tape&, Var z) { return scale(z, 0.0); },
                     NoiseType::zero);
  const double exact = std::exp(-0.5);
  auto err = [&](int steps) {
    Tape tape;
    return std::abs(integrate(linear, tape.constant(Matrix(1, 1, 1.0)), 0.0, 1.0, steps, nullptr).scalar() - exact);
  };
  detail += "halving_ratios=";
  for (int steps : {10, 20, 40, 80, 160}) {
    const double ratio = err(steps) / err(2 * steps);
    detail += fmt(ratio, 3) + (steps == 160 ? " " : ",");
    pass = pass && ratio >= 1.6 && ratio <= 2.4;
  }

  // dz = -θ z dt + σ dW from z0 = 1 over [0, 2].
  const std::size_t paths = 20000;
  const double theta = 1.0, sigma = 1.0, t_end = 2.0;
  FunctionSde ou([theta](Tape&, Var z) { return scale(z, -theta); },
                 [sigma](Tape& t, Var z) { return t.constant(Matrix(z.rows(), z.cols(), sigma)); },
                 NoiseType::diagonal);
  Tape tape;
  RandomStream rng(2024);
  const Matrix end = integrate(ou, tape.constant(Matrix(1, paths, 1.0)), 0.0, t_end, 200, &rng).value();
  double mean = 0.0, var = 0.0;
  for (double v : end.data()) mean += v;
  mean /= paths;
  for (double v : end.data()) var += (v - mean) * (v - mean);
  var /= paths - 1.0;
  const double mean_exact = std::exp(-theta * t_end);
  const double var_exact = sigma * sigma * (1.0 - std::exp(-2.0 * theta * t_end)) / (2.0 * theta);
  const double se_mean = std::sqrt(var_exact / paths);
  const double se_var = var_exact * std::sqrt(2.0 / (paths - 1.0));
  const double z_mean = (mean - mean_exact) / se_mean, z_var = (var - var_exact) / se_var;
  pass = pass && std::abs(z_mean) < 3.0 && std::abs(z_var) < 3.0;
  const double secs = seconds_since(t0);
  pass = pass && secs < 60.0;
  detail += "ou_mean_z=" + fmt(z_mean, 2) + " ou_var_z=" + fmt(z_var, 2) + " runtime_s=" + fmt(secs, 1);
  return {pass, detail};
}

// ---- graph construction --------------------------------------------------

Outcome graph_construction() {
  const auto t0 = std::chrono::steady_clock::now();
  RandomStream rng(2024);
  const double densities[] = {0.1, 0.2, 0.25, 0.5, 0.9, 1.0};
  std::size_t mismatches = 0, isolated = 0, density_off = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.index(11);
    Matrix c(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      c(i, i) = 1.0;
      for (std::size_t j = i + 1; j < n; ++j) c(i, j) = c(j, i) = std::round(rng.uniform(-1.0, 1.0) * 8.0) / 8.0;
    }
    const double density = densities[rng.index(6)];

    // Brute force: every positive pair sorted by (−value, i, j), first k kept.
    std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (c(i, j) > 0) pairs.emplace_back(-c(i, j), i, j);
    std::sort(pairs.begin(), pairs.end());
    const double total = static_cast<double>(n * (n - 1) / 2);
    std::size_t k = 0;
    while (static_cast<double>(k) < density * total - 1e-9) ++k;
    Matrix brute(n, n);
    for (std::size_t r = 0; r < std::min(k, pairs.size()); ++r) {
      const auto [v, i, j] = pairs[r];
      brute(i, j) = brute(j, i) = -v;
    }

    const ThresholdResult t = threshold_top_positive(c, density);
    if (!(t.adjacency == brute)) ++mismatches;
    std::size_t edges = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) edges += t.adjacency(i, j) != 0.0;
    // Target density up to rounding, unless there are too few positive pairs.
    const std::size_t expected = std::min(k, pairs.size());
    if (edges != expected || std::abs(static_cast<double>(k) - density * total) >= 1.0) ++density_off;

    const RepairResult repaired = repair_isolated(t.adjacency, c);
    for (std::size_t i = 0; i < n; ++i)
      if (degree(repaired.adjacency, i) < 1) {
        ++isolated;
        break;
      }
  }
  const double secs = seconds_since(t0);
  const bool pass = mismatches == 0 && isolated == 0 && density_off == 0 && secs < 30.0;
  return {pass, "matrices=1000 mismatches=" + std::to_string(mismatches) + " isolated_graphs=" +
                    std::to_string(isolated) + " density_off=" + std::to_string(density_off) +
                    " runtime_s=" + fmt(secs, 1)};
}

// ---- statistics oracles --------------------------------------------------

Outcome statistics_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  RandomStream rng(31);

  std::size_t auc_mismatch = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.index(199);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(rng.uniform() * 20.0) / 20.0;
      y[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (y[i] == 1 && y[j] == 0) {
          pairs += 1.0;
          wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    if (roc_auc(s, y) != wins / pairs) ++auc_mismatch;
  }

  // Every m ≤ 8 vector over a p-value grid that straddles the step-up cutoffs.
  const double grid[] = {0.001, 0.00625, 0.0125, 0.02, 0.05, 0.3};
  std::size_t bh_cases = 0, bh_mismatch = 0;
  for (std::size_t m = 1; m <= 8; ++m) {
    std::vector<std::size_t> digits(m, 0);
    while (true) {
      std::vector<double> p(m);
      for (std::size_t i = 0; i < m; ++i) p[i] = grid[digits[i]];
      std::vector<double> sorted = p;
      std::sort(sorted.begin(), sorted.end());
      std::size_t k = 0;
      for (std::size_t i = 1; i <= m; ++i)
        if (sorted[i - 1] * static_cast<double>(m) / static_cast<double>(i) < 0.05) k = i;
      std::vector<std::uint8_t> expect(m, 0);
      if (k > 0)
        for (std::size_t i = 0; i < m; ++i) expect[i] = p[i] <= sorted[k - 1] ? 1 : 0;
      if (bh_fdr(p, 0.05).rejected != expect) ++bh_mismatch;
      ++bh_cases;
      std::size_t pos = 0;
      while (pos < m && ++digits[pos] == std::size(grid)) digits[pos++] = 0;
      if (pos == m) break;
    }
  }

  // Welch p against the Monte-Carlo null distribution of the same statistic. The
  // Satterthwaite degrees of freedom are an approximation that drifts by a couple of
  // percent at five per group, so the designs stay at edge-test group sizes.
  double welch_worst = 0.0;
  struct Design {
    std::size_t na, nb;
    double sd_b;
  };
  for (const Design d : {Design{8, 13, 3.0}, Design{20, 6, 0.5}, Design{96, 48, 1.5}}) {
    const int draws = 20000;
    std::vector<double> null_t(draws);
    for (double& t : null_t) {
      std::vector<double> a(d.na), b(d.nb);
      for (double& v : a) v = rng.normal();
      for (double& v : b) v = d.sd_b * rng.normal();
      t = std::abs(welch_t(a, b).t);
    }
    std::vector<double> a(d.na), b(d.nb);
    for (int probe = 0; probe < 5; ++probe) {
      for (double& v : a) v = rng.normal() + 0.4 * probe;
      for (double& v : b) v = d.sd_b * rng.normal();
      const TTestResult r = welch_t(a, b);
      const double mc =
          static_cast<double>(std::count_if(null_t.begin(), null_t.end(), [&](double t) { return t >= std::abs(r.t); })) /
          draws;
      welch_worst = std::max(welch_worst, std::abs(r.p - mc));
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = auc_mismatch == 0 && bh_mismatch == 0 && welch_worst < 0.01 && secs < 120.0;
  return {pass, "auc_mismatch=" + std::to_string(auc_mismatch) + "/500 bh_mismatch=" + std::to_string(bh_mismatch) +
                    "/" + std::to_string(bh_cases) + " welch_max_gap=" + fmt(welch_worst) +
                    " runtime_s=" + fmt(secs, 1)};
}

// ---- end-to-end runs -----------------------------------------------------

struct Workspace {
  fs::path root;
  fs::path path(const std::string& name) const { return root / name; }
  // Every run starts from an empty directory so nothing is resumed from a previous invocation.
  std::string fresh(const std::string& name) const {
    fs::remove_all(path(name));
    return path(name).string();
  }
};

RunConfig default_config(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.synth.seed = seed;
  return c;
}

struct PlantedRun {
  TrainOutcome outcome;
  Recovery recovery;
  double seconds = 0.0;
};

PlantedRun planted_run(const Workspace& ws, const std::string& tag, const RunConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string cohort = ws.fresh(tag + "_cohort");
  const std::string run = ws.fresh(tag + "_run");
  cmd_synth(config, cohort);
  PlantedRun out;
  out.outcome = cmd_train(cohort, config, run, quiet_progress);
  const CohortFiles files = read_cohort(cohort);
  if (!files.truth) throw StateError("cohort has no ground truth");
  if (out.outcome.run.biomarkers_valid) out.recovery = score_recovery(out.outcome.run.biomarkers, *files.truth);
  out.seconds = seconds_since(t0);
  return out;
}

Outcome planted_recovery(const Workspace& ws) {
  const PlantedRun r = planted_run(ws, "planted", default_config(7));
  const MetricSet& m = r.outcome.run.mean;
  const bool pass = m.accuracy >= 0.90 && m.roc_auc >= 0.90 && r.outcome.run.biomarkers_valid &&
                    r.recovery.roi_precision >= 0.8 && r.recovery.edge_recall >= 0.8 && r.seconds < 15 * 60;
  return {pass, "accuracy=" + fmt(m.accuracy) + " roc_auc=" + fmt(m.roc_auc) + " roi_precision=" +
                    fmt(r.recovery.roi_precision) + " edge_recall=" + fmt(r.recovery.edge_recall) +
                    " runtime_s=" + fmt(r.seconds, 1)};
}

Outcome longitudinal_advantage(const Workspace& ws) {
  const RunConfig config = default_config(7);
  const std::string cohort = ws.fresh("timepoints_cohort");
  cmd_synth(config, cohort);
  const std::size_t visits = config.synth.max_visits;
  const AblationOutcome r = cmd_ablate(cohort, config, "timepoints=1," + std::to_string(visits),
                                       ws.fresh("timepoints_ablation"), quiet_progress);
  const DeLongResult& d = r.delong.at(0);
  const double gain = d.auc_b - d.auc_a;
  const bool pass = gain > 0.0 && d.p < 0.05 && !d.degenerate;
  return {pass, "auc_t1=" + fmt(d.auc_a) + " auc_t" + std::to_string(visits) + "=" + fmt(d.auc_b) +
                    " gain=" + fmt(gain) + " delong_p=" + fmt(d.p, 6)};
}

const std::uint64_t kSeeds[] = {7, 8, 9};

Outcome reconstruction_ordering(const Workspace& ws) {
  double sde_sum = 0.0, mean_sum = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : kSeeds) {
    RunConfig config = default_config(seed);
    config.missing_rate = 0.5;
    const std::string tag = "masked_s" + std::to_string(seed);
    const std::string cohort = ws.fresh(tag + "_cohort");
    cmd_synth(config, cohort);
    const AblationOutcome r = cmd_ablate(cohort, config, "recon=sde,mean", ws.fresh(tag + "_ablation"), quiet_progress);
    const double sde = r.runs.at(0).run.mean.accuracy, mean = r.runs.at(1).run.mean.accuracy;
    sde_sum += sde;
    mean_sum += mean;
    per_seed += " seed" + std::to_string(seed) + "=" + fmt(sde, 3) + "/" + fmt(mean, 3);
  }
  const double n = static_cast<double>(std::size(kSeeds));
  const double gap = sde_sum / n - mean_sum / n;
  return {gap >= 0.03, "sde_accuracy=" + fmt(sde_sum / n) + " mean_accuracy=" + fmt(mean_sum / n) +
                           " gap=" + fmt(gap) + " (sde/mean" + per_seed + ")"};
}

Outcome null_control(const Workspace& ws) {
  double auc_sum = 0.0;
  std::size_t clean = 0;
  std::string per_seed;
  for (std::uint64_t seed : kSeeds) {
    RunConfig config = default_config(seed);
    config.synth.effect_size = 0.0;
    const PlantedRun r = planted_run(ws, "null_s" + std::to_string(seed), config);
    const CohortFiles files = read_cohort(ws.path("null_s" + std::to_string(seed) + "_cohort").string());
    std::size_t planted_hits = 0;
    for (const EdgeStat& e : r.outcome.run.biomarkers.edges) {
      if (!e.significant) continue;
      for (const NodePair& p : files.truth->planted_edges)
        if ((e.i == p.first && e.j == p.second) || (e.i == p.second && e.j == p.first)) ++planted_hits;
    }
    clean += planted_hits == 0;
    auc_sum += r.outcome.run.mean.roc_auc;
    per_seed += " seed" + std::to_string(seed) + ":auc=" + fmt(r.outcome.run.mean.roc_auc, 3) +
                ",planted_significant=" + std::to_string(planted_hits);
  }
  const double auc = auc_sum / static_cast<double>(std::size(kSeeds));
  const bool pass = auc >= 0.4 && auc <= 0.6 && clean >= 2;
  return {pass, "mean_auc=" + fmt(auc) + " clean_seeds=" + std::to_string(clean) + "/3" + per_seed};
}

Outcome determinism(const Workspace& ws) {
  // Needs the planted run; redo it if it was skipped or came from an older build.
  if (!fs::exists(ws.path("planted_run") / "report.json")) planted_run(ws, "planted", default_config(7));
  planted_run(ws, "planted_again", default_config(7));
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::recursive_directory_iterator(ws.path("planted_run"))) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    const fs::path rel = fs::relative(entry.path(), ws.path("planted_run"));
    const fs::path other = ws.path("planted_again_run") / rel;
    ++compared;
    if (!fs::exists(other) || read_text(entry.path().string()) != read_text(other.string()))
      differing.push_back(rel.string());
  }
  std::size_t other_count = 0;
  for (const auto& entry : fs::recursive_directory_iterator(ws.path("planted_again_run")))
    other_count += entry.is_regular_file() && entry.path().extension() == ".csv";
  std::string detail = "csv_files=" + std::to_string(compared) + " differing=" + std::to_string(differing.size());
  for (const auto& d : differing) detail += " " + d;
  if (other_count != compared) detail += " file_count_mismatch=" + std::to_string(other_count);
  return {compared > 0 && differing.empty() && other_count == compared, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string work;
  std::vector<std::string> only, known;
  app.add_option("--work", work, "scratch directory for cohorts and runs")->required();
  app.add_option("--only", only, "run only these checks")->delimiter(',');
  app.add_option("--known-failures", known, "checks whose FAIL does not change the exit status")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const Workspace ws{fs::absolute(work)};
  fs::create_directories(ws.root);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"gradient_integrity", gradient_integrity},
      {"sde_solver", sde_solver},
      {"graph_construction", graph_construction},
      {"statistics_oracles", statistics_oracles},
      {"planted_recovery", [&] { return planted_recovery(ws); }},
      {"longitudinal_advantage", [&] { return longitudinal_advantage(ws); }},
      {"reconstruction_ordering", [&] { return reconstruction_ordering(ws); }},
      {"null_control", [&] { return null_control(ws); }},
      {"determinism", [&] { return determinism(ws); }},
  };
  for (const std::string& name : only)
    if (std::none_of(checks.begin(), checks.end(), [&](const auto& c) { return c.first == name; })) {
      std::cerr << "unknown check " << name << "\n";
      return 2;
    }
  for (const std::string& name : known)
    if (std::none_of(checks.begin(), checks.end(), [&](const auto& c) { return c.first == name; })) {
      std::cerr << "unknown check " << name << "\n";
      return 2;
    }

  std::ofstream results(ws.root / "results.txt");
  int failed = 0;
  for (const auto& [name, run] : checks) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    std::cerr << "running " << name << "\n";
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const bool excused = std::find(known.begin(), known.end(), name) != known.end();
    failed += o.pass || excused ? 0 : 1;
    std::ostringstream line;
    line << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << (!o.pass && excused ? " (known failure)" : "");
    std::cout << line.str() << std::endl;
    results << line.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
