#include "connectoflow/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "connectoflow/errors.hpp"
#include "connectoflow/stats.hpp"

namespace connectoflow {

ImportanceMasks::ImportanceMasks(ParamStore& store, std::size_t nodes, std::size_t features, double init_logit)
    : logits_(&store.add("masks.px_logits", Matrix(nodes, features, init_logit))),
      v_(&store.add("masks.v", Matrix(2 * features, 1))) {}

Var ImportanceMasks::px(Tape& tape) const { return sigmoid(tape.param(*logits_)); }
Var ImportanceMasks::v(Tape& tape) const { return tape.param(*v_); }

Matrix ImportanceMasks::px_value() const {
  Tape tape;
  return px(tape).value();
}

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double edge_probability(std::span<const double> x_i, std::span<const double> x_j, std::span<const double> p_i,
                        std::span<const double> p_j, std::span<const double> v) {
  const std::size_t d = x_i.size();
  if (x_j.size() != d || p_i.size() != d || p_j.size() != d || v.size() != 2 * d)
    throw ShapeError("edge_probability: inconsistent vector lengths");
  double forward = 0.0, backward = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    forward += v[k] * x_i[k] * p_i[k] + v[d + k] * x_j[k] * p_j[k];
    backward += v[k] * x_j[k] * p_j[k] + v[d + k] * x_i[k] * p_i[k];
  }
  return 0.5 * (stable_sigmoid(forward) + stable_sigmoid(backward));
}

namespace {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// P = (S + Sᵀ)/2 with S_ij = σ(a_i + b_j), as one tape node.
Var symmetric_sigmoid_outer(Var a, Var b) {
  const std::size_t n = a.rows();
  if (a.cols() != 1 || b.cols() != 1 || b.rows() != n) throw ShapeError("edge logits must be matching columns");
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = logistic(a.value()(i, 0) + b.value()(j, 0));
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = 0.5 * (s(i, j) + s(j, i));
  return a.tape().record("edge_probability", std::move(out), {a, b},
                         [a, b, s = std::move(s)](const Matrix& adj, AdjointSink& sink) {
                           const std::size_t n = s.rows();
                           Matrix ga(n, 1), gb(n, 1);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < n; ++j) {
                               const double d = 0.5 * (adj(i, j) + adj(j, i)) * s(i, j) * (1.0 - s(i, j));
                               ga(i, 0) += d;
                               gb(j, 0) += d;
                             }
                           if (sink.wants(a)) sink.at(a) += ga;
                           if (sink.wants(b)) sink.at(b) += gb;
                         });
}

}  // namespace

Var edge_probability_matrix(Var features, Var px, Var v) {
  const std::size_t d = features.cols();
  if (v.rows() != 2 * d || v.cols() != 1) throw ShapeError("edge vector must be 2D×1");
  Var weighted = mul(features, px);
  Var v_rows = transpose(v);  // 1×2D
  Var a = matmul(weighted, transpose(slice_cols(v_rows, 0, d)));
  Var b = matmul(weighted, transpose(slice_cols(v_rows, d, d)));
  return symmetric_sigmoid_outer(a, b);
}

MaskedSlice apply_masks(Tape& tape, const Matrix& adjacency, const Matrix& features, Var px, Var pa) {
  if (adjacency.rows() != features.rows() || adjacency.cols() != adjacency.rows())
    throw ShapeError("mask inputs: adjacency " + adjacency.shape_string() + " vs features " + features.shape_string());
  if (!px.value().same_shape(features) || !pa.value().same_shape(adjacency))
    throw ShapeError("mask inputs: mask shapes do not match the graph");
  MaskedSlice out;
  out.features = mul(tape.constant(features), px);
  out.pa = pa;
  out.support = Matrix(adjacency.rows(), adjacency.cols());
  for (std::size_t k = 0; k < adjacency.size(); ++k) out.support.data()[k] = adjacency.data()[k] != 0.0 ? 1.0 : 0.0;
  out.adjacency = mul(tape.constant(adjacency), pa);
  return out;
}

MaskedSlice mask_inputs(Tape& tape, const Matrix& adjacency, const Matrix& features, Var px, Var v) {
  if (adjacency.rows() != features.rows())
    throw ShapeError("mask inputs: adjacency " + adjacency.shape_string() + " vs features " + features.shape_string());
  return apply_masks(tape, adjacency, features, px, edge_probability_matrix(tape.constant(features), px, v));
}

std::vector<double> roi_scores(const Matrix& px) {
  std::vector<double> out(px.rows(), 0.0);
  for (std::size_t i = 0; i < px.rows(); ++i) {
    for (double p : px.row(i)) out[i] += p;
    out[i] /= static_cast<double>(px.cols());
  }
  return out;
}

std::vector<std::size_t> rank_descending(const std::vector<double>& scores, std::size_t top) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  if (order.size() > top) order.resize(top);
  return order;
}

void edge_group_test(const std::vector<Matrix>& subject_edges, const std::vector<int>& labels,
                     const EdgeTestConfig& config, BiomarkerReport& report) {
  if (subject_edges.size() != labels.size()) throw StatsError("edge test: summaries and labels differ in count");
  std::size_t count[2] = {0, 0};
  for (int l : labels) {
    if (l != 0 && l != 1) throw StatsError("edge test: labels must be 0 or 1");
    ++count[l];
  }
  if (count[0] < 2 || count[1] < 2) throw StatsError("edge test needs at least 2 subjects per group");
  const std::size_t n = subject_edges.front().rows();
  for (const Matrix& m : subject_edges)
    if (m.rows() != n || m.cols() != n) throw ShapeError("edge test: summary shapes differ");

  report.edges.clear();
  std::vector<double> p_values;
  std::vector<double> group[2];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      group[0].clear();
      group[1].clear();
      for (std::size_t s = 0; s < subject_edges.size(); ++s) group[labels[s]].push_back(subject_edges[s](i, j));
      // Progressive minus stable.
      TTestResult t = welch_t(group[1], group[0]);
      EdgeStat e;
      e.i = i;
      e.j = j;
      e.t = t.t;
      e.p = t.p;
      report.edges.push_back(e);
      p_values.push_back(t.p);
    }
  FdrResult fdr = bh_fdr(p_values, config.q);
  std::vector<std::size_t> significant;
  for (std::size_t k = 0; k < report.edges.size(); ++k) {
    report.edges[k].p_adj = fdr.adjusted[k];
    report.edges[k].significant = fdr.rejected[k] != 0;
    if (report.edges[k].significant) significant.push_back(k);
  }
  std::stable_sort(significant.begin(), significant.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(report.edges[a].t) > std::abs(report.edges[b].t);
  });
  report.ranked_edges.clear();
  for (std::size_t k = 0; k < std::min(config.top_edges, significant.size()); ++k)
    report.ranked_edges.push_back(report.edges[significant[k]]);

  const std::size_t b = config.networks;
  Matrix total(b, b);
  std::vector<std::size_t> hits(b * b, 0);
  for (std::size_t k : significant) {
    const EdgeStat& e = report.edges[k];
    const std::size_t u = network_of(e.i, n, b), w = network_of(e.j, n, b);
    // Infinite |t| (zero variance, different means) is capped so block means stay finite.
    const double magnitude = std::min(std::abs(e.t), 1e6);
    total(u, w) += magnitude;
    ++hits[u * b + w];
    if (u != w) {
      total(w, u) += magnitude;
      ++hits[w * b + u];
    }
  }
  report.network_heatmap = Matrix(b, b);
  report.heatmap_empty.assign(b * b, 1);
  for (std::size_t u = 0; u < b; ++u)
    for (std::size_t w = 0; w < b; ++w)
      if (hits[u * b + w] > 0) {
        report.network_heatmap(u, w) = total(u, w) / static_cast<double>(hits[u * b + w]);
        report.heatmap_empty[u * b + w] = 0;
      }
}

}  // namespace connectoflow
