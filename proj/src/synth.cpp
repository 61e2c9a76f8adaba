#include "connectoflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <string>

#include "connectoflow/errors.hpp"
#include "connectoflow/random.hpp"

namespace connectoflow {

std::size_t network_of(std::size_t node, std::size_t nodes, std::size_t networks) {
  if (nodes == 0 || networks == 0) return 0;
  return std::min(networks - 1, node * networks / nodes);
}

namespace {

constexpr double kLoadingLo = 0.8;
constexpr double kLoadingHi = 1.2;

std::string subject_id(std::size_t k) {
  std::string digits = std::to_string(k);
  return "sub-" + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

std::vector<std::size_t> nodes_in_network(std::size_t network, std::size_t nodes, std::size_t networks) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < nodes; ++i)
    if (network_of(i, nodes, networks) == network) out.push_back(i);
  return out;
}

// Planted ROI waveform, unit RMS over the window.
double roi_template(std::size_t s, std::size_t samples) {
  const double x = static_cast<double>(s) / static_cast<double>(samples);
  return std::numbers::sqrt2 * std::sin(2.0 * std::numbers::pi * 1.5 * x);
}

}  // namespace

SynthConfig resolve_config(SynthConfig config) {
  if (config.nodes < 2) throw ConfigError("synth: need at least 2 nodes");
  if (config.samples < 3) throw ConfigError("synth: need at least 3 samples per visit");
  if (config.max_visits < 1) throw ConfigError("synth: max_visits must be >= 1");
  if (config.networks < 1 || config.networks > config.nodes) throw ConfigError("synth: bad network count");
  if (!(config.horizon_months > 0.0)) throw ConfigError("synth: horizon must be positive");
  if (!(config.max_conversion_lag_months >= 0.0)) throw ConfigError("synth: conversion lag must be >= 0");
  if (config.n_stable + config.n_progressive == 0) throw ConfigError("synth: empty cohort");
  if (!(config.effect_size >= 0.0 && config.effect_size < 1.0)) throw ConfigError("synth: effect size must be in [0,1)");
  if (!(config.noise_sd >= 0.0)) throw ConfigError("synth: noise_sd must be >= 0");

  const std::size_t roi_network = config.networks > 1 ? 1 : 0;
  if (config.planted_rois.empty()) {
    auto members = nodes_in_network(roi_network, config.nodes, config.networks);
    members.resize(std::min<std::size_t>(10, members.size()));
    config.planted_rois = members;
  }
  std::set<std::size_t> rois(config.planted_rois.begin(), config.planted_rois.end());
  if (rois.size() != config.planted_rois.size()) throw ConfigError("synth: duplicate planted ROI");
  for (std::size_t r : rois)
    if (r >= config.nodes) throw ConfigError("synth: planted ROI out of range");

  if (config.planted_edges.empty()) {
    RandomStream rng = RandomStream(config.seed).derive(0xED6E);
    std::vector<NodePair> candidates;
    for (std::size_t b = 0; b < config.networks; ++b) {
      if (b == roi_network && config.networks > 1) continue;
      auto members = nodes_in_network(b, config.nodes, config.networks);
      std::erase_if(members, [&](std::size_t n) { return rois.count(n) != 0; });
      rng.shuffle(members);
      for (std::size_t k = 0; k + 1 < members.size(); k += 2)
        candidates.emplace_back(std::min(members[k], members[k + 1]), std::max(members[k], members[k + 1]));
    }
    rng.shuffle(candidates);
    candidates.resize(std::min<std::size_t>(10, candidates.size()));
    std::sort(candidates.begin(), candidates.end());
    config.planted_edges = candidates;
  }
  std::set<std::size_t> edge_nodes;
  for (auto& [i, j] : config.planted_edges) {
    if (i >= config.nodes || j >= config.nodes || i == j) throw ConfigError("synth: invalid planted edge");
    if (i > j) std::swap(i, j);
    if (!edge_nodes.insert(i).second || !edge_nodes.insert(j).second)
      throw ConfigError("synth: planted edges must be node-disjoint");
  }
  // The shared component replaces part of each endpoint's noise, so the shift
  // can be at most the noise share of that node's variance.
  const double factor_var_max = kLoadingHi * kLoadingHi;
  const double noise_var = config.noise_sd * config.noise_sd;
  if (!config.planted_edges.empty() && config.effect_size > 0.0 &&
      config.effect_size * (factor_var_max + noise_var) > noise_var)
    throw ConfigError("synth: effect size " + format_double(config.effect_size) +
                      " infeasible for noise_sd " + format_double(config.noise_sd));
  return config;
}

Cohort generate(const SynthConfig& raw) {
  const SynthConfig cfg = resolve_config(raw);
  const std::size_t N = cfg.nodes, D = cfg.samples;
  RandomStream root(cfg.seed);

  RandomStream loading_rng = root.derive(1);
  std::vector<double> loading(N);
  for (double& l : loading) l = loading_rng.uniform(kLoadingLo, kLoadingHi);
  const double noise_var = cfg.noise_sd * cfg.noise_sd;

  std::vector<int> edge_partner(N, -1);
  for (auto [i, j] : cfg.planted_edges) {
    edge_partner[i] = static_cast<int>(j);
    edge_partner[j] = static_cast<int>(i);
  }
  std::vector<std::uint8_t> is_roi(N, 0);
  for (std::size_t r : cfg.planted_rois) is_roi[r] = 1;

  Cohort cohort;
  cohort.truth.planted_rois = cfg.planted_rois;
  cohort.truth.planted_edges = cfg.planted_edges;
  const std::size_t total = cfg.n_stable + cfg.n_progressive;
  for (std::size_t k = 0; k < total; ++k) {
    RandomStream rng = root.derive(1000 + k);
    SubjectRecord subject;
    subject.id = subject_id(k);
    subject.label = k < cfg.n_stable ? stable : progressive;
    subject.group = subject.label == progressive ? "progressive" : "stable";

    const std::size_t n_visits = 1 + rng.index(cfg.max_visits);
    std::vector<double> months(n_visits);
    for (double& m : months) m = std::round(rng.uniform(0.0, cfg.horizon_months) * 100.0) / 100.0;
    std::sort(months.begin(), months.end());
    for (std::size_t v = 1; v < n_visits; ++v)
      if (months[v] <= months[v - 1]) months[v] = months[v - 1] + 0.01;

    // Separate stream so the lag draw leaves the signal noise unchanged.
    const double lag = root.derive(0xC0417 + k).uniform(0.0, cfg.max_conversion_lag_months);
    const double conversion =
        subject.label == progressive ? months.back() + lag : std::numeric_limits<double>::quiet_NaN();
    std::vector<double> phases;
    for (double month : months) {
      Visit visit;
      visit.month = month;
      visit.signals = Matrix(N, D);
      visit.present.assign(D, 1);
      const double phase =
          subject.label == progressive ? std::clamp(1.0 - (conversion - month) / cfg.horizon_months, 0.0, 1.0) : 0.0;
      if (subject.label == progressive) phases.push_back(phase);
      const double shift = cfg.effect_size * phase;
      const double roi_amplitude = cfg.roi_effect_scale * cfg.effect_size * phase;

      // One smooth factor per network at a distinct whole number of cycles per window.
      Matrix factors(cfg.networks, D);
      for (std::size_t b = 0; b < cfg.networks; ++b) {
        const double offset = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double cycles = static_cast<double>(b + 1);
        for (std::size_t s = 0; s < D; ++s)
          factors(b, s) = std::numbers::sqrt2 *
                          std::sin(2.0 * std::numbers::pi * cycles * static_cast<double>(s) / D + offset);
      }
      Matrix shared(N, D);  // per planted edge, indexed by its smaller endpoint
      for (auto [i, j] : cfg.planted_edges)
        for (std::size_t s = 0; s < D; ++s) shared(i, s) = rng.normal();

      for (std::size_t i = 0; i < N; ++i) {
        const std::size_t b = network_of(i, N, cfg.networks);
        double shared_weight = 0.0;
        std::size_t shared_row = i;
        if (edge_partner[i] >= 0 && shift > 0.0) {
          const double total_var = loading[i] * loading[i] + noise_var;
          shared_weight = std::sqrt(shift * total_var);
          shared_row = std::min<std::size_t>(i, static_cast<std::size_t>(edge_partner[i]));
        }
        const double own_noise = std::sqrt(std::max(0.0, noise_var - shared_weight * shared_weight));
        for (std::size_t s = 0; s < D; ++s) {
          double x = loading[i] * factors(b, s) + own_noise * rng.normal();
          if (shared_weight > 0.0) x += shared_weight * shared(shared_row, s);
          if (is_roi[i] && roi_amplitude > 0.0) x += roi_amplitude * roi_template(s, D);
          visit.signals(i, s) = x;
        }
      }
      subject.visits.push_back(std::move(visit));
    }
    cohort.truth.subject_ids.push_back(subject.id);
    cohort.truth.visit_months.push_back(months);
    cohort.truth.progression_phase.push_back(phases);
    cohort.truth.conversion_month.push_back(conversion);
    cohort.subjects.push_back(std::move(subject));
  }
  return cohort;
}

std::vector<SubjectRecord> drop_observations(std::vector<SubjectRecord> subjects, double missing_rate,
                                             std::uint64_t seed) {
  if (!(missing_rate >= 0.0 && missing_rate <= 0.9)) throw ConfigError("missing rate must be in [0, 0.9]");
  if (missing_rate == 0.0) return subjects;
  RandomStream root(seed);
  for (std::size_t k = 0; k < subjects.size(); ++k) {
    RandomStream rng = root.derive(k);
    for (Visit& visit : subjects[k].visits) {
      const std::size_t D = visit.signals.cols();
      if (static_cast<double>(D) * (1.0 - missing_rate) < 3.0 - 1e-9)
        throw ConfigError("missing rate " + format_double(missing_rate) + " leaves fewer than 3 of " +
                          std::to_string(D) + " samples");
      for (std::size_t s = 0; s < D; ++s)
        if (visit.present[s] && rng.uniform() < missing_rate) visit.present[s] = 0;
      while (visit.observed_count() < 3) {
        std::vector<std::size_t> absent;
        for (std::size_t s = 0; s < D; ++s)
          if (!visit.present[s]) absent.push_back(s);
        visit.present[absent[rng.index(absent.size())]] = 1;
      }
      for (std::size_t s = 0; s < D; ++s)
        if (!visit.present[s])
          for (std::size_t i = 0; i < visit.signals.rows(); ++i) visit.signals(i, s) = 0.0;
    }
  }
  return subjects;
}

Recovery score_recovery(const BiomarkerReport& report, const GroundTruth& truth) {
  Recovery out;
  const std::size_t n_rois = truth.planted_rois.size();
  if (n_rois > 0) {
    std::vector<std::size_t> order(report.roi_scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return report.roi_scores[a] > report.roi_scores[b]; });
    std::set<std::size_t> planted(truth.planted_rois.begin(), truth.planted_rois.end());
    std::size_t hits = 0;
    for (std::size_t k = 0; k < std::min(n_rois, order.size()); ++k) hits += planted.count(order[k]);
    out.roi_precision = static_cast<double>(hits) / static_cast<double>(n_rois);
  }
  if (!truth.planted_edges.empty()) {
    std::set<NodePair> significant;
    for (const EdgeStat& e : report.edges)
      if (e.significant) significant.emplace(std::min(e.i, e.j), std::max(e.i, e.j));
    std::size_t hits = 0;
    for (auto [i, j] : truth.planted_edges) hits += significant.count({std::min(i, j), std::max(i, j)});
    out.edge_recall = static_cast<double>(hits) / static_cast<double>(truth.planted_edges.size());
  }
  return out;
}

}  // namespace connectoflow
