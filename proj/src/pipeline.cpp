#include "connectoflow/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "connectoflow/checkpoint.hpp"
#include "connectoflow/errors.hpp"
#include "connectoflow/interpret.hpp"
#include "connectoflow/io.hpp"
#include "connectoflow/random.hpp"
#include "connectoflow/reconstruct.hpp"

namespace connectoflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kReconTag = 0x5EC0;
constexpr std::uint64_t kModelTag = 0xF01D00;
constexpr std::uint64_t kTrainTag = 0x7A1400;

void emit(const ProgressSink& sink, const std::string& line) {
  if (sink) sink(line);
}

bool anything_missing(const std::vector<SubjectRecord>& subjects) {
  for (const SubjectRecord& s : subjects)
    for (const Visit& v : s.visits)
      if (!v.complete()) return true;
  return false;
}

std::string fold_dir(const std::string& root, std::size_t fold) {
  return (fs::path(root) / ("fold_" + std::to_string(fold))).string();
}

json history_json(const std::vector<EpochStats>& history) {
  json out = json::array();
  for (const EpochStats& e : history)
    out.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"ce", e.ce}, {"px_entropy", e.px_entropy}});
  return out;
}

std::vector<EpochStats> history_from_json(const json& j) {
  std::vector<EpochStats> out;
  for (const json& e : j) out.push_back({e.at("epoch"), e.at("loss"), e.at("ce"), e.at("px_entropy")});
  return out;
}

// Scores, P_X and edge summaries of a trained fold model.
void evaluate_fold(const StgnnModel& model, const std::vector<DynamicGraph>& graphs, FoldResult& r) {
  r.scores.clear();
  r.edge_summaries.clear();
  std::vector<int> labels;
  for (std::size_t idx : r.test) {
    r.scores.push_back(model.predict(graphs[idx]));
    r.edge_summaries.push_back(edge_summary(model, graphs[idx]));
    labels.push_back(graphs[idx].label);
  }
  r.metrics = evaluate(r.scores, labels);
  r.px = model.masks().px_value();
}

FoldResult run_fold(const std::vector<DynamicGraph>& graphs, const FoldPlan& plan, std::size_t fold,
                    const RunConfig& config, const json& config_echo, const std::string& checkpoint_dir,
                    const ProgressSink& progress) {
  FoldResult r;
  r.fold = fold;
  r.test = plan.test_indices(fold);
  const RandomStream root(config.seed);
  const std::uint64_t model_seed = root.derive(kModelTag + fold).next_u64();
  const std::uint64_t train_seed = root.derive(kTrainTag + fold).next_u64();
  StgnnModel model(graphs.front().nodes(), graphs.front().features(), config.train.model, model_seed);

  const std::string dir = checkpoint_dir.empty() ? "" : fold_dir(checkpoint_dir, fold);
  if (!dir.empty() && fs::exists(fs::path(dir) / "manifest.json")) {
    const json meta = load_checkpoint(dir, model.params());
    if (meta.at("config") != config_echo)
      throw StateError("checkpoint in " + dir + " was written with a different config");
    r.history = history_from_json(meta.at("history"));
    r.resumed = true;
    evaluate_fold(model, graphs, r);
    emit(progress, "event=fold_resumed fold=" + std::to_string(fold) +
                       " accuracy=" + format_double(r.metrics.accuracy) + " roc_auc=" + format_double(r.metrics.roc_auc));
    return r;
  }

  std::vector<const DynamicGraph*> train;
  for (std::size_t idx : plan.train_indices(fold)) train.push_back(&graphs[idx]);
  emit(progress, "event=fold_start fold=" + std::to_string(fold) + " train=" + std::to_string(train.size()) +
                     " test=" + std::to_string(r.test.size()));
  try {
    r.history = train_stgnn(model, train, config.train, train_seed, [&](const EpochStats& e) {
      emit(progress, "event=epoch fold=" + std::to_string(fold) + " epoch=" + std::to_string(e.epoch) +
                         " loss=" + format_double(e.loss) + " ce=" + format_double(e.ce) +
                         " px_entropy=" + format_double(e.px_entropy));
    });
    evaluate_fold(model, graphs, r);
    for (double s : r.scores)
      if (!std::isfinite(s)) throw TrainingError("non-finite prediction");
  } catch (const DivergenceError& e) {
    r.diverged = true;
    r.error = e.what();
    r.scores.assign(r.test.size(), std::numeric_limits<double>::quiet_NaN());
    r.edge_summaries.clear();
    emit(progress, "event=fold_diverged fold=" + std::to_string(fold) + " error=\"" + r.error + "\"");
    return r;
  }
  if (!dir.empty())
    save_checkpoint(dir, model.params(),
                    {{"config", config_echo}, {"fold", fold}, {"seed", model_seed}, {"history", history_json(r.history)}});
  emit(progress, "event=fold_done fold=" + std::to_string(fold) + " accuracy=" + format_double(r.metrics.accuracy) +
                     " roc_auc=" + format_double(r.metrics.roc_auc));
  return r;
}

}  // namespace

std::size_t thread_budget() {
  if (const char* env = std::getenv("CONNECTOFLOW_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
  }
  return 1;
}

Completion fit_completion(const std::vector<SubjectRecord>& subjects, const RunConfig& config,
                          const ProgressSink& progress) {
  Completion c;
  c.method = config.recon_method;
  if (!anything_missing(subjects)) {
    c.completer = std::make_unique<PassThroughCompleter>();
    emit(progress, "event=reconstruction method=" + c.method + " skipped=1");
    return c;
  }
  c.trained = true;
  const std::uint64_t seed = RandomStream(config.seed).derive(kReconTag).next_u64();
  const double spacing = config.recon.sample_spacing;
  if (c.method == "mean") {
    c.trained = false;
    c.completer = std::make_unique<MeanCompleter>();
    emit(progress, "event=reconstruction method=mean");
    return c;
  }
  const std::vector<IrregularSeries> series = cohort_series(subjects, spacing);
  if (series.empty()) throw InputError("no observed samples to train reconstruction on");
  const std::size_t nodes = series.front().nodes();
  auto log_epoch = [&](std::size_t epoch, double loss) {
    c.loss_history.push_back(loss);
    emit(progress, "event=recon_epoch method=" + c.method + " epoch=" + std::to_string(epoch) +
                       " loss=" + format_double(loss));
  };
  if (c.method == "sde") {
    auto model = std::make_shared<ReconModel>(nodes, config.recon, seed);
    train_recon(*model, series, config.recon.epochs, seed, log_epoch);
    c.completer = std::make_unique<SdeCompleter>(*model);
    c.model = model;
  } else if (c.method == "rnn") {
    auto model = std::make_shared<RnnImputer>(nodes, config.rnn_hidden, seed);
    train_rnn(*model, series, config.recon.epochs, config.recon.batch, config.recon.learning_rate, seed, log_epoch);
    c.completer = std::make_unique<RnnCompleter>(*model, spacing);
    c.model = model;
  } else {
    throw ConfigError("unknown reconstruction method " + c.method);
  }
  return c;
}

std::vector<DynamicGraph> build_graphs(const std::vector<SubjectRecord>& subjects, const SignalCompleter& completer,
                                       const RunConfig& config, const std::string& cache_dir) {
  std::vector<DynamicGraph> graphs;
  graphs.reserve(subjects.size());
  const PassThroughCompleter filled;
  for (const SubjectRecord& s : subjects) {
    SubjectRecord complete = config.timepoints > 0 ? s.truncated(config.timepoints) : s;
    for (std::size_t k = 0; k < complete.visits.size(); ++k) {
      Visit& v = complete.visits[k];
      v.signals = completer.complete(v);
      std::fill(v.present.begin(), v.present.end(), std::uint8_t{1});
      if (!cache_dir.empty()) {
        const fs::path dir = fs::path(cache_dir) / s.id;
        fs::create_directories(dir);
        write_text((dir / ("v" + std::to_string(k) + ".csv")).string(), to_csv(v.signals));
      }
    }
    graphs.push_back(build_dynamic_graph(complete, filled, config.graph));
  }
  return graphs;
}

RunResult cross_validate(const std::vector<DynamicGraph>& graphs, const RunConfig& config,
                         const std::string& checkpoint_dir, std::size_t threads, const ProgressSink& progress) {
  if (graphs.empty()) throw InputError("no subjects to train on");
  RunResult run;
  for (const DynamicGraph& g : graphs) {
    if (g.nodes() != graphs.front().nodes() || g.features() != graphs.front().features())
      throw InputError("subject " + g.subject_id + " differs in shape from " + graphs.front().subject_id);
    run.subject_ids.push_back(g.subject_id);
    run.labels.push_back(g.label);
  }
  const FoldPlan plan = stratified_kfold(run.labels, config.folds, config.seed);
  const json echo = config_to_json(config);
  if (!checkpoint_dir.empty()) fs::create_directories(checkpoint_dir);

  std::mutex lock;
  ProgressSink sink = [&](const std::string& line) {
    std::lock_guard<std::mutex> guard(lock);
    emit(progress, line);
  };
  run.folds.resize(config.folds);
  std::vector<std::exception_ptr> failures(config.folds);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t f = next++; f < config.folds; f = next++) {
      try {
        run.folds[f] = run_fold(graphs, plan, f, config, echo, checkpoint_dir, sink);
      } catch (...) {
        failures[f] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, config.folds));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const auto& e : failures)
    if (e) std::rethrow_exception(e);

  run.scores.assign(graphs.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<const FoldResult*> done;
  for (const FoldResult& f : run.folds) {
    for (std::size_t k = 0; k < f.test.size(); ++k) run.scores[f.test[k]] = f.scores[k];
    if (!f.diverged) done.push_back(&f);
  }
  if (done.empty()) throw DivergenceError("training diverged in every fold");

  for (const FoldResult* f : done) {
    run.mean.accuracy += f->metrics.accuracy;
    run.mean.roc_auc += f->metrics.roc_auc;
    run.mean.sensitivity += f->metrics.sensitivity;
    run.mean.specificity += f->metrics.specificity;
  }
  const double n = static_cast<double>(done.size());
  run.mean = {run.mean.accuracy / n, run.mean.roc_auc / n, run.mean.sensitivity / n, run.mean.specificity / n};

  // ROI scores from the fold-averaged P_X; edge tests on out-of-fold summaries.
  BiomarkerReport& report = run.biomarkers;
  report.roi_scores.assign(graphs.front().nodes(), 0.0);
  for (const FoldResult* f : done) {
    const std::vector<double> s = roi_scores(f->px);
    for (std::size_t i = 0; i < s.size(); ++i) report.roi_scores[i] += s[i] / n;
  }
  report.ranked_rois = rank_descending(report.roi_scores, config.interpret.top_rois);
  std::vector<Matrix> summaries;
  std::vector<int> labels;
  for (const FoldResult* f : done)
    for (std::size_t k = 0; k < f->test.size(); ++k) {
      summaries.push_back(f->edge_summaries[k]);
      labels.push_back(run.labels[f->test[k]]);
    }
  try {
    edge_group_test(summaries, labels, {config.interpret.fdr_q, config.interpret.top_edges, config.synth.networks},
                    report);
    run.biomarkers_valid = true;
  } catch (const StatsError& e) {
    run.biomarker_error = e.what();
  }
  return run;
}

namespace {

std::string metrics_row(const std::string& fold, const MetricSet& m) {
  return fold + "," + format_double(m.accuracy) + "," + format_double(m.roc_auc) + "," +
         format_double(m.sensitivity) + "," + format_double(m.specificity) + "\n";
}

json metrics_json(const MetricSet& m) {
  return {{"accuracy", m.accuracy}, {"roc_auc", m.roc_auc}, {"sensitivity", m.sensitivity},
          {"specificity", m.specificity}};
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

void write_run_outputs(const std::string& dir, const RunResult& run, const RunConfig& config,
                       const RunTiming& timing) {
  fs::create_directories(dir);
  auto path = [&](const char* name) { return (fs::path(dir) / name).string(); };

  std::string metrics = "fold,accuracy,roc_auc,sensitivity,specificity\n";
  for (const FoldResult& f : run.folds)
    if (!f.diverged) metrics += metrics_row(std::to_string(f.fold), f.metrics);
  metrics += metrics_row("mean", run.mean);
  write_text(path("metrics.csv"), metrics);

  std::vector<std::size_t> fold_of(run.scores.size(), 0);
  for (const FoldResult& f : run.folds)
    for (std::size_t idx : f.test) fold_of[idx] = f.fold;
  std::string scores = "subject,label,fold,score\n";
  for (std::size_t k = 0; k < run.scores.size(); ++k)
    scores += run.subject_ids[k] + "," + std::to_string(run.labels[k]) + "," + std::to_string(fold_of[k]) + "," +
              (std::isfinite(run.scores[k]) ? format_double(run.scores[k]) : std::string("nan")) + "\n";
  write_text(path("scores.csv"), scores);

  const BiomarkerReport& b = run.biomarkers;
  std::vector<std::size_t> full_rank = rank_descending(b.roi_scores, b.roi_scores.size());
  std::vector<std::size_t> rank_of(b.roi_scores.size());
  for (std::size_t r = 0; r < full_rank.size(); ++r) rank_of[full_rank[r]] = r + 1;
  std::string rois = "roi,score,rank\n";
  for (std::size_t i = 0; i < b.roi_scores.size(); ++i)
    rois += std::to_string(i) + "," + format_double(b.roi_scores[i]) + "," + std::to_string(rank_of[i]) + "\n";
  write_text(path("roi_scores.csv"), rois);

  std::string edges = "i,j,t,p,p_adj,significant\n";
  for (const EdgeStat& e : b.edges)
    edges += std::to_string(e.i) + "," + std::to_string(e.j) + "," + format_double(e.t) + "," + format_double(e.p) +
             "," + format_double(e.p_adj) + "," + (e.significant ? "1" : "0") + "\n";
  write_text(path("edges.csv"), edges);

  std::string heat = "row,col,mean_abs_t,empty\n";
  const std::size_t nets = b.network_heatmap.rows();
  for (std::size_t r = 0; r < nets; ++r)
    for (std::size_t c = 0; c < nets; ++c)
      heat += std::to_string(r) + "," + std::to_string(c) + "," + format_double(b.network_heatmap(r, c)) + "," +
              (b.heatmap_empty[r * nets + c] ? "1" : "0") + "\n";
  write_text(path("heatmap.csv"), heat);

  std::string log = "fold,epoch,loss,ce,px_entropy\n";
  for (const FoldResult& f : run.folds)
    for (const EpochStats& e : f.history)
      log += std::to_string(f.fold) + "," + std::to_string(e.epoch) + "," + format_double(e.loss) + "," +
             format_double(e.ce) + "," + format_double(e.px_entropy) + "\n";
  write_text(path("training_log.csv"), log);

  json folds = json::array();
  for (const FoldResult& f : run.folds) {
    json entry = {{"fold", f.fold}, {"diverged", f.diverged}, {"test_subjects", f.test.size()},
                  {"resumed", f.resumed}};
    if (f.diverged) entry["error"] = f.error;
    else entry["metrics"] = metrics_json(f.metrics);
    folds.push_back(std::move(entry));
  }
  json ranked_edges = json::array();
  for (const EdgeStat& e : b.ranked_edges)
    ranked_edges.push_back({{"i", e.i}, {"j", e.j}, {"t", number_or_null(e.t)}, {"p", e.p}, {"p_adj", e.p_adj}});
  std::size_t significant = 0;
  for (const EdgeStat& e : b.edges) significant += e.significant ? 1 : 0;
  json heatmap = json::array();
  for (std::size_t r = 0; r < nets; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < nets; ++c) row.push_back(b.network_heatmap(r, c));
    heatmap.push_back(row);
  }
  std::size_t diverged = 0;
  for (const FoldResult& f : run.folds) diverged += f.diverged ? 1 : 0;
  json report = {
      {"format", "connectoflow-report"},
      {"version", 1},
      {"complete", true},
      {"folds", folds},
      {"diverged_folds", diverged},
      {"mean", metrics_json(run.mean)},
      {"biomarkers",
       {{"valid", run.biomarkers_valid},
        {"roi_scores", b.roi_scores},
        {"ranked_rois", b.ranked_rois},
        {"ranked_edges", ranked_edges},
        {"significant_edges", significant},
        {"network_heatmap", heatmap},
        {"heatmap_empty", std::vector<int>(b.heatmap_empty.begin(), b.heatmap_empty.end())}}},
      {"config", config_to_json(config)},
      {"timing",
       {{"reconstruction_s", timing.reconstruction_s},
        {"graphs_s", timing.graphs_s},
        {"training_s", timing.training_s}}},
  };
  if (!run.biomarkers_valid) report["biomarkers"]["error"] = run.biomarker_error;
  write_text(path("report.json"), report.dump(1) + "\n");
}

std::vector<Arm> ablation_arms(const std::string& axis, const RunConfig& base, std::size_t max_visits) {
  const auto eq = axis.find('=');
  const std::string name = axis.substr(0, eq);
  std::vector<std::string> values;
  if (eq != std::string::npos) {
    std::stringstream ss(axis.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) values.push_back(item);
    if (values.size() < 2) throw ConfigError("axis '" + axis + "' needs at least two arms");
  }
  std::vector<Arm> arms;
  if (name == "recon") {
    if (values.empty()) values = {"sde", "rnn", "mean"};
    for (const std::string& v : values) {
      Arm arm{v, base};
      arm.config.recon_method = v;
      validate(arm.config);
      arms.push_back(std::move(arm));
    }
  } else if (name == "timepoints") {
    if (values.empty())
      for (std::size_t k = 1; k <= max_visits; ++k) values.push_back(std::to_string(k));
    for (const std::string& v : values) {
      std::size_t k = 0;
      try {
        std::size_t used = 0;
        k = std::stoul(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
      } catch (const std::exception&) {
        throw ConfigError("timepoint arm '" + v + "' is not a positive integer");
      }
      if (k == 0) throw ConfigError("timepoint arms must be positive");
      Arm arm{"t" + v, base};
      arm.config.timepoints = k;
      arms.push_back(std::move(arm));
    }
  } else {
    throw ConfigError("unknown ablation axis '" + name + "' (expected recon or timepoints)");
  }
  for (std::size_t a = 0; a < arms.size(); ++a)
    for (std::size_t b = a + 1; b < arms.size(); ++b)
      if (arms[a].name == arms[b].name) throw ConfigError("duplicate ablation arm " + arms[a].name);
  return arms;
}

}  // namespace connectoflow
