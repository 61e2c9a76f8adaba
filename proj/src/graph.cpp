#include "connectoflow/graph.hpp"

#include <algorithm>
#include <cmath>

#include "connectoflow/errors.hpp"

namespace connectoflow {

Matrix pearson_matrix(const Matrix& signals, std::vector<std::size_t>* zero_variance) {
  const std::size_t N = signals.rows(), D = signals.cols();
  if (D < 3) throw InputError("pearson_matrix: need at least 3 samples, got " + std::to_string(D));
  Matrix centered(N, D);
  std::vector<double> norm(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    double mean = 0.0;
    for (double v : signals.row(i)) mean += v;
    mean /= static_cast<double>(D);
    double ss = 0.0;
    for (std::size_t s = 0; s < D; ++s) {
      centered(i, s) = signals(i, s) - mean;
      ss += centered(i, s) * centered(i, s);
    }
    norm[i] = std::sqrt(ss);
    // Relative floor: a row that is constant up to rounding counts as zero variance.
    double scale = std::abs(mean);
    for (double v : signals.row(i)) scale = std::max(scale, std::abs(v));
    if (norm[i] <= 1e-12 * std::max(1.0, scale) * std::sqrt(static_cast<double>(D))) {
      norm[i] = 0.0;
      if (zero_variance) zero_variance->push_back(i);
    }
  }
  Matrix corr(N, N);
  for (std::size_t i = 0; i < N; ++i) {
    corr(i, i) = 1.0;
    for (std::size_t j = i + 1; j < N; ++j) {
      double r = 0.0;
      if (norm[i] > 0.0 && norm[j] > 0.0) {
        double dot = 0.0;
        for (std::size_t s = 0; s < D; ++s) dot += centered(i, s) * centered(j, s);
        r = std::clamp(dot / (norm[i] * norm[j]), -1.0, 1.0);
      }
      corr(i, j) = r;
      corr(j, i) = r;
    }
  }
  return corr;
}

ThresholdResult threshold_top_positive(const Matrix& corr, double density) {
  if (!(density > 0.0 && density <= 1.0)) throw ConfigError("density must be in (0, 1]");
  if (corr.rows() != corr.cols()) throw ShapeError("threshold: correlation matrix must be square");
  const std::size_t N = corr.rows();
  struct Pair {
    double value;
    std::size_t i, j;
  };
  std::vector<Pair> positive;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j)
      if (corr(i, j) > 0.0) positive.push_back({corr(i, j), i, j});
  std::sort(positive.begin(), positive.end(), [](const Pair& a, const Pair& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  const double pairs = static_cast<double>(N) * static_cast<double>(N - (N > 0 ? 1 : 0)) / 2.0;
  ThresholdResult out;
  out.target = static_cast<std::size_t>(std::ceil(density * pairs - 1e-9));
  out.kept = std::min(out.target, positive.size());
  out.sparsity_warning = positive.size() < out.target;
  out.adjacency = Matrix(N, N);
  for (std::size_t k = 0; k < out.kept; ++k) {
    out.adjacency(positive[k].i, positive[k].j) = positive[k].value;
    out.adjacency(positive[k].j, positive[k].i) = positive[k].value;
  }
  return out;
}

std::size_t degree(const Matrix& adjacency, std::size_t node) {
  std::size_t d = 0;
  for (std::size_t j = 0; j < adjacency.cols(); ++j)
    if (j != node && adjacency(node, j) != 0.0) ++d;
  return d;
}

RepairResult repair_isolated(const Matrix& adjacency, const Matrix& corr) {
  const std::size_t N = adjacency.rows();
  if (N < 2) throw StructuralError("cannot repair isolated nodes in a graph with fewer than 2 nodes");
  if (!corr.same_shape(adjacency)) throw ShapeError("repair: adjacency and correlation shapes differ");
  RepairResult out;
  out.adjacency = adjacency;
  for (std::size_t i = 0; i < N; ++i) {
    if (degree(out.adjacency, i) > 0) continue;
    std::size_t best = N;
    bool any_positive = false;
    for (std::size_t j = 0; j < N; ++j)
      if (j != i && corr(i, j) > 0.0) any_positive = true;
    for (std::size_t j = 0; j < N; ++j) {
      if (j == i) continue;
      const double score = any_positive ? corr(i, j) : std::abs(corr(i, j));
      if (best == N || score > (any_positive ? corr(i, best) : std::abs(corr(i, best)))) best = j;
    }
    const double weight = std::max(std::abs(corr(i, best)), kMinRepairWeight);
    out.adjacency(i, best) = weight;
    out.adjacency(best, i) = weight;
    out.added.emplace_back(std::min(i, best), std::max(i, best));
    out.negative.push_back(any_positive ? 0 : 1);
  }
  return out;
}

DynamicGraph DynamicGraph::truncated(std::size_t k) const {
  DynamicGraph out = *this;
  if (out.snapshots.size() > k) out.snapshots.resize(k);
  return out;
}

DynamicGraph build_dynamic_graph(const SubjectRecord& subject, const SignalCompleter& completer,
                                 const GraphConfig& config) {
  try {
    validate_subject(subject);
    DynamicGraph graph;
    graph.subject_id = subject.id;
    graph.label = subject.label;
    for (const Visit& visit : subject.visits) {
      GraphSnapshot snap;
      snap.month = visit.month;
      snap.features = completer.complete(visit);
      std::vector<std::size_t> zero_var;
      Matrix corr = pearson_matrix(snap.features, &zero_var);
      for (std::size_t z : zero_var)
        if (std::find(graph.zero_variance_nodes.begin(), graph.zero_variance_nodes.end(), z) ==
            graph.zero_variance_nodes.end())
          graph.zero_variance_nodes.push_back(z);
      ThresholdResult thr = threshold_top_positive(corr, config.density);
      graph.sparsity_warning = graph.sparsity_warning || thr.sparsity_warning;
      RepairResult rep = repair_isolated(thr.adjacency, corr);
      graph.repair_edges += rep.added.size();
      snap.adjacency = std::move(rep.adjacency);
      if (config.binarize)
        for (double& v : snap.adjacency.data()) v = v != 0.0 ? 1.0 : 0.0;
      graph.snapshots.push_back(std::move(snap));
    }
    std::sort(graph.zero_variance_nodes.begin(), graph.zero_variance_nodes.end());
    return graph;
  } catch (const DivergenceError& e) {
    throw DivergenceError("subject " + subject.id + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError("subject " + subject.id + ": " + e.what());
  } catch (const Error& e) {
    throw InputError("subject " + subject.id + ": " + e.what());
  }
}

}  // namespace connectoflow
