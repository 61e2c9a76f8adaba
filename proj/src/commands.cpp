#include "connectoflow/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

#include "connectoflow/errors.hpp"
#include "connectoflow/io.hpp"
#include "connectoflow/random.hpp"
#include "connectoflow/synth.hpp"

namespace connectoflow {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const DivergenceError*>(&e)) return 4;
  if (dynamic_cast<const StateError*>(&e)) return 3;
  if (dynamic_cast<const Error*>(&e)) return 2;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return 2;
  return 1;
}

namespace {

constexpr std::uint64_t kMaskTag = 0xD40B;

void make_output_dir(const std::string& dir) {
  if (dir.empty()) throw InputError("output directory not given");
  fs::path p = fs::absolute(dir).lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  if (!fs::is_directory(p.parent_path()))
    throw InputError("parent of output directory does not exist: " + p.parent_path().string());
  std::error_code ec;
  fs::create_directory(p, ec);
  if (!fs::is_directory(p)) throw InputError("cannot create output directory " + dir);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

json cmd_synth(const RunConfig& config, const std::string& out_dir) {
  validate(config);
  SynthConfig synth = config.synth;
  synth.seed = config.seed;
  Cohort cohort = generate(synth);
  std::vector<SubjectRecord> subjects = std::move(cohort.subjects);
  if (config.missing_rate > 0.0)
    subjects = drop_observations(std::move(subjects), config.missing_rate,
                                 RandomStream(config.seed).derive(kMaskTag).next_u64());
  make_output_dir(out_dir);
  const SynthConfig resolved = resolve_config(synth);
  RunConfig echo = config;
  echo.synth = resolved;
  const json meta = {{"generator", config_to_json(echo)["synth"]},
                     {"seed", config.seed},
                     {"missing_rate", config.missing_rate},
                     {"subjects", subjects.size()}};
  return write_cohort(out_dir, subjects, &cohort.truth, meta);
}

TrainOutcome cmd_train(const std::string& cohort_dir, const RunConfig& config, const std::string& out_dir,
                       const ProgressSink& progress) {
  validate(config);
  const CohortFiles cohort = read_cohort(cohort_dir);
  make_output_dir(out_dir);
  const fs::path out(out_dir);

  const json state = {{"cohort_sha256", sha256_file((fs::path(cohort_dir) / "manifest.json").string())},
                      {"config", config_to_json(config)}};
  const fs::path state_path = out / "run_state.json";
  if (fs::exists(state_path)) {
    json previous;
    try {
      previous = json::parse(read_text(state_path.string()));
    } catch (const json::exception&) {
      throw StateError("unreadable run state in " + out_dir);
    }
    if (previous != state)
      throw StateError("output directory " + out_dir + " holds a run with a different cohort or config");
  } else {
    write_text(state_path.string(), state.dump(1) + "\n");
  }
  fs::remove(out / "report.json");

  TrainOutcome result;
  auto clock = std::chrono::steady_clock::now();
  const Completion completion = fit_completion(cohort.subjects, config, progress);
  result.timing.reconstruction_s = seconds_since(clock);

  clock = std::chrono::steady_clock::now();
  const std::string cache = completion.trained ? (out / "reconstructed").string() : "";
  const std::vector<DynamicGraph> graphs = build_graphs(cohort.subjects, *completion.completer, config, cache);
  result.timing.graphs_s = seconds_since(clock);
  if (progress) progress("event=graphs subjects=" + std::to_string(graphs.size()));

  clock = std::chrono::steady_clock::now();
  result.run = cross_validate(graphs, config, (out / "checkpoints").string(), thread_budget(), progress);
  result.timing.training_s = seconds_since(clock);

  write_run_outputs(out_dir, result.run, config, result.timing);
  if (progress)
    progress("event=run_done accuracy=" + format_double(result.run.mean.accuracy) +
             " roc_auc=" + format_double(result.run.mean.roc_auc));
  return result;
}

AblationOutcome cmd_ablate(const std::string& cohort_dir, const RunConfig& config, const std::string& axis,
                           const std::string& out_dir, const ProgressSink& progress) {
  validate(config);
  make_output_dir(out_dir);
  const std::vector<Arm> arms = ablation_arms(axis, config, config.synth.max_visits);
  AblationOutcome out;
  for (const Arm& arm : arms) {
    if (progress) progress("event=arm_start arm=" + arm.name);
    out.arms.push_back(arm.name);
    out.runs.push_back(cmd_train(cohort_dir, arm.config, (fs::path(out_dir) / ("arm_" + arm.name)).string(),
                                 progress));
  }

  std::string table = "arm,fold,accuracy,roc_auc,sensitivity,specificity\n";
  const std::string nan = "nan";
  for (std::size_t a = 0; a < arms.size(); ++a)
    for (const FoldResult& f : out.runs[a].run.folds) {
      table += arms[a].name + "," + std::to_string(f.fold) + ",";
      if (f.diverged) table += nan + "," + nan + "," + nan + "," + nan + "\n";
      else
        table += format_double(f.metrics.accuracy) + "," + format_double(f.metrics.roc_auc) + "," +
                 format_double(f.metrics.sensitivity) + "," + format_double(f.metrics.specificity) + "\n";
    }
  write_text((fs::path(out_dir) / "ablation.csv").string(), table);

  std::string delong = "arm_a,arm_b,auc_a,auc_b,z,p,degenerate,subjects\n";
  for (std::size_t a = 0; a < arms.size(); ++a)
    for (std::size_t b = a + 1; b < arms.size(); ++b) {
      const RunResult& ra = out.runs[a].run;
      const RunResult& rb = out.runs[b].run;
      std::vector<double> sa, sb;
      std::vector<int> labels;
      for (std::size_t k = 0; k < ra.scores.size(); ++k)
        if (std::isfinite(ra.scores[k]) && std::isfinite(rb.scores[k])) {
          sa.push_back(ra.scores[k]);
          sb.push_back(rb.scores[k]);
          labels.push_back(ra.labels[k]);
        }
      const DeLongResult d = delong_test(sa, sb, labels);
      out.pairs.emplace_back(a, b);
      out.delong.push_back(d);
      delong += arms[a].name + "," + arms[b].name + "," + format_double(d.auc_a) + "," + format_double(d.auc_b) +
                "," + format_double(d.z) + "," + format_double(d.p) + "," + (d.degenerate ? "1" : "0") + "," +
                std::to_string(labels.size()) + "\n";
    }
  write_text((fs::path(out_dir) / "delong.csv").string(), delong);
  return out;
}

namespace {

using Table = std::vector<std::vector<std::string>>;

Table read_table(const fs::path& path) {
  if (!fs::exists(path)) throw StateError("incomplete run: missing " + path.filename().string());
  std::istringstream in(read_text(path.string()));
  std::string line;
  Table rows;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double to_number(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

// Figure labels are fixed-precision strings; the figure CSVs hold the same strings.
std::string label(double x) {
  if (!std::isfinite(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

class Svg {
 public:
  Svg(int width, int height, const std::string& title) {
    body_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
          << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
          << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
          << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    text(width / 2.0, 20, title, "middle", "title", 14);
  }
  void rect(double x, double y, double w, double h, const std::string& fill, const char* cls = "bar") {
    body_ << "<rect class=\"" << cls << "\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h << "\" fill=\"" << fill
          << "\" stroke=\"#444\" stroke-width=\"0.5\"/>\n";
  }
  void text(double x, double y, const std::string& s, const char* anchor = "start", const char* cls = "label",
            int size = 12) {
    body_ << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor << "\" class=\"" << cls
          << "\" font-size=\"" << size << "\">" << escape(s) << "</text>\n";
  }
  std::string str() const { return body_.str() + "</svg>\n"; }

 private:
  std::ostringstream body_;
};

std::string heat_colour(double v, double max) {
  const double f = max > 0.0 ? std::clamp(v / max, 0.0, 1.0) : 0.0;
  const int g = static_cast<int>(std::lround(255.0 * (1.0 - f)));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#ff%02x%02x", g, g);
  return buf;
}

}  // namespace

void cmd_report(const std::string& run_dir, const std::string& out_dir) {
  const fs::path run(run_dir);
  if (!fs::exists(run / "report.json")) throw StateError("incomplete run: no report.json in " + run_dir);
  json report;
  try {
    report = json::parse(read_text((run / "report.json").string()));
  } catch (const json::exception&) {
    throw StateError("incomplete run: unreadable report.json in " + run_dir);
  }
  if (!report.value("complete", false)) throw StateError("incomplete run in " + run_dir);
  const Table metrics = read_table(run / "metrics.csv");
  const Table rois = read_table(run / "roi_scores.csv");
  const Table edges = read_table(run / "edges.csv");
  const Table heat = read_table(run / "heatmap.csv");
  make_output_dir(out_dir);
  const fs::path out(out_dir);
  const json& cfg = report.at("config").at("interpret");
  const std::size_t top_rois = cfg.at("top_rois");
  const std::size_t top_edges = cfg.at("top_edges");

  // Metrics quartet from the "mean" row.
  const char* names[4] = {"accuracy", "roc_auc", "sensitivity", "specificity"};
  std::vector<std::string> quartet;
  for (const auto& row : metrics)
    if (!row.empty() && row[0] == "mean" && row.size() == 5)
      for (int k = 0; k < 4; ++k) quartet.push_back(label(to_number(row[k + 1])));
  if (quartet.size() != 4) throw StateError("incomplete run: metrics.csv has no mean row");
  {
    std::string csv = "metric,value\n";
    Svg svg(440, 300, "Cross-validated metrics (mean over folds)");
    for (int k = 0; k < 4; ++k) {
      csv += std::string(names[k]) + "," + quartet[k] + "\n";
      const double v = std::clamp(to_number(quartet[k]), 0.0, 1.0);
      const double x = 40 + 100 * k, h = 200 * v;
      svg.rect(x, 250 - h, 60, h, "#4a7fb5");
      svg.text(x + 30, 245 - h, quartet[k], "middle", "value");
      svg.text(x + 30, 270, names[k], "middle");
    }
    write_text((out / "metrics.csv").string(), csv);
    write_text((out / "metrics.svg").string(), svg.str());
  }

  {
    std::vector<std::pair<std::size_t, std::string>> ranked;  // rank, row
    for (const auto& row : rois)
      if (row.size() == 3) ranked.emplace_back(std::stoul(row[2]), row[0] + "," + label(to_number(row[1])));
    std::sort(ranked.begin(), ranked.end());
    if (ranked.size() > top_rois) ranked.resize(top_rois);
    std::string csv = "rank,roi,score\n";
    const int height = 50 + 18 * static_cast<int>(ranked.size());
    Svg svg(480, height, "ROI importance (row mean of P_X)");
    double max = 0.0;
    for (const auto& r : ranked) max = std::max(max, to_number(r.second.substr(r.second.find(',') + 1)));
    for (std::size_t k = 0; k < ranked.size(); ++k) {
      const std::string roi = ranked[k].second.substr(0, ranked[k].second.find(','));
      const std::string score = ranked[k].second.substr(ranked[k].second.find(',') + 1);
      csv += std::to_string(ranked[k].first) + "," + roi + "," + score + "\n";
      const double y = 40 + 18 * k;
      const double w = max > 0.0 ? 300 * to_number(score) / max : 0.0;
      svg.text(60, y + 12, "ROI " + roi, "end");
      svg.rect(70, y, w, 14, "#6a9f58");
      svg.text(75 + w, y + 12, score, "start", "value");
    }
    write_text((out / "roi_ranking.csv").string(), csv);
    write_text((out / "roi_ranking.svg").string(), svg.str());
  }

  {
    struct Row {
      std::string i, j, t, p_adj;
      double abs_t;
    };
    std::vector<Row> sig;
    for (const auto& row : edges)
      if (row.size() == 6 && row[5] == "1") {
        const double t = to_number(row[2]);
        sig.push_back({row[0], row[1], label(t), label(to_number(row[4])), std::abs(t)});
      }
    std::stable_sort(sig.begin(), sig.end(), [](const Row& a, const Row& b) { return a.abs_t > b.abs_t; });
    if (sig.size() > top_edges) sig.resize(top_edges);
    std::string csv = "rank,i,j,t,p_adj\n";
    const int height = 70 + 18 * static_cast<int>(sig.size());
    Svg svg(420, height, "FDR-significant edges by |t|");
    const char* head[5] = {"rank", "i", "j", "t", "p_adj"};
    for (int c = 0; c < 5; ++c) svg.text(30 + 80 * c, 45, head[c], "start", "header");
    for (std::size_t k = 0; k < sig.size(); ++k) {
      const std::string rank = std::to_string(k + 1);
      csv += rank + "," + sig[k].i + "," + sig[k].j + "," + sig[k].t + "," + sig[k].p_adj + "\n";
      const double y = 65 + 18 * k;
      const std::string cells[5] = {rank, sig[k].i, sig[k].j, sig[k].t, sig[k].p_adj};
      for (int c = 0; c < 5; ++c) svg.text(30 + 80 * c, y, cells[c], "start", "value");
    }
    if (sig.empty()) svg.text(30, 65, "no significant edges");
    write_text((out / "edges.csv").string(), csv);
    write_text((out / "edges.svg").string(), svg.str());
  }

  {
    std::size_t nets = 0;
    for (const auto& row : heat)
      if (row.size() == 4) nets = std::max(nets, static_cast<std::size_t>(std::stoul(row[0])) + 1);
    double max = 0.0;
    for (const auto& row : heat)
      if (row.size() == 4) max = std::max(max, to_number(label(to_number(row[2]))));
    std::string csv = "row,col,mean_abs_t,empty\n";
    const double cell = 56;
    const int size = static_cast<int>(80 + cell * static_cast<double>(nets));
    Svg svg(size, size, "Network-level mean |t| of significant edges");
    for (std::size_t k = 0; k < nets; ++k) {
      svg.text(60 + cell * k + cell / 2, 48, "N" + std::to_string(k + 1), "middle", "axis");
      svg.text(52, 60 + cell * k + cell / 2 + 4, "N" + std::to_string(k + 1), "end", "axis");
    }
    for (const auto& row : heat) {
      if (row.size() != 4) continue;
      const std::size_t r = std::stoul(row[0]), c = std::stoul(row[1]);
      const std::string v = label(to_number(row[2]));
      csv += row[0] + "," + row[1] + "," + v + "," + row[3] + "\n";
      const double x = 60 + cell * c, y = 60 + cell * r;
      svg.rect(x, y, cell, cell, row[3] == "1" ? "#eeeeee" : heat_colour(to_number(v), max), "cell");
      svg.text(x + cell / 2, y + cell / 2 + 4, v, "middle", "value", 10);
    }
    write_text((out / "heatmap.csv").string(), csv);
    write_text((out / "heatmap.svg").string(), svg.str());
  }
}

}  // namespace connectoflow
