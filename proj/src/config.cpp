#include "connectoflow/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>

#include "connectoflow/errors.hpp"

namespace connectoflow {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    if (!known) throw ConfigError("unknown config key " + where + "." + item.key());
  }
}

template <typename T>
void read(const json& j, const std::string& where, const char* key, T& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(where + "." + key + " must be a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
    if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned())
      throw ConfigError(where + "." + key + " must be non-negative");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
  } else {
    if (!v.is_string()) throw ConfigError(where + "." + key + " must be a string");
  }
  out = v.get<T>();
}

void positive(double x, const std::string& key) {
  if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(key + " must be positive");
}

void positive(std::size_t x, const std::string& key) {
  if (x == 0) throw ConfigError(key + " must be positive");
}

}  // namespace

void validate(const RunConfig& c) {
  positive(c.folds, "folds");
  if (c.folds < 2) throw ConfigError("folds must be at least 2");
  if (!(c.missing_rate >= 0.0 && c.missing_rate < 1.0)) throw ConfigError("missing_rate must lie in [0, 1)");
  if (c.recon_method != "sde" && c.recon_method != "rnn" && c.recon_method != "mean")
    throw ConfigError("recon_method must be one of sde, rnn, mean; got '" + c.recon_method + "'");

  positive(c.synth.n_stable, "synth.n_stable");
  positive(c.synth.n_progressive, "synth.n_progressive");
  positive(c.synth.nodes, "synth.nodes");
  if (c.synth.samples < 3) throw ConfigError("synth.samples must be at least 3");
  positive(c.synth.max_visits, "synth.max_visits");
  positive(c.synth.networks, "synth.networks");
  positive(c.synth.horizon_months, "synth.horizon_months");
  positive(c.synth.noise_sd, "synth.noise_sd");
  if (!(c.synth.max_conversion_lag_months >= 0.0)) throw ConfigError("synth.max_conversion_lag_months must be >= 0");
  if (!(c.synth.effect_size >= 0.0)) throw ConfigError("synth.effect_size must be >= 0");
  if (!(c.synth.roi_effect_scale >= 0.0)) throw ConfigError("synth.roi_effect_scale must be >= 0");

  if (!(c.graph.density > 0.0 && c.graph.density <= 1.0)) throw ConfigError("graph.density must lie in (0, 1]");

  positive(c.recon.latent, "recon.latent");
  positive(c.recon.encoder_hidden, "recon.encoder_hidden");
  positive(c.recon.sde_hidden, "recon.sde_hidden");
  positive(c.recon.decoder_hidden, "recon.decoder_hidden");
  if (!(c.recon.kl_weight >= 0.0)) throw ConfigError("recon.kl_weight must be >= 0");
  if (!(c.recon.log_sigma_min < c.recon.log_sigma_max)) throw ConfigError("recon.log_sigma_min must be < max");
  positive(c.recon.sample_spacing, "recon.sample_spacing");
  if (!(c.recon.encoder_holdout >= 0.0 && c.recon.encoder_holdout < 1.0))
    throw ConfigError("recon.encoder_holdout must be in [0, 1)");
  if (c.recon.steps_per_unit < 1) throw ConfigError("recon.steps_per_unit must be positive");
  positive(c.recon.epochs, "recon.epochs");
  positive(c.recon.batch, "recon.batch");
  positive(c.recon.learning_rate, "recon.learning_rate");
  positive(c.rnn_hidden, "recon.rnn_hidden");

  const StgnnConfig& m = c.train.model;
  positive(m.hidden, "model.hidden");
  positive(m.layers, "model.layers");
  positive(m.head_hidden1, "model.head_hidden1");
  positive(m.head_hidden2, "model.head_hidden2");
  positive(m.sde_hidden, "model.sde_hidden");
  if (!(m.dropout >= 0.0 && m.dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  if (m.steps_per_unit < 1) throw ConfigError("model.steps_per_unit must be positive");
  positive(m.months_per_unit, "model.months_per_unit");
  if (!std::isfinite(m.mask_init_logit) || !std::isfinite(m.update_gate_bias))
    throw ConfigError("model biases must be finite");

  positive(c.train.epochs, "train.epochs");
  positive(c.train.batch, "train.batch");
  positive(c.train.lr, "train.lr");
  if (!(c.train.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  const LossWeights& w = c.train.loss;
  if (!(w.lambda1 >= 0.0 && w.lambda2 >= 0.0 && w.lambda3 >= 0.0)) throw ConfigError("train.lambda must be >= 0");

  positive(c.interpret.top_rois, "interpret.top_rois");
  positive(c.interpret.top_edges, "interpret.top_edges");
  if (!(c.interpret.fdr_q > 0.0 && c.interpret.fdr_q < 1.0)) throw ConfigError("interpret.fdr_q must lie in (0, 1)");
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  check_keys(j, "config",
             {"seed", "folds", "timepoints", "missing_rate", "recon_method", "synth", "graph", "recon", "model",
              "train", "interpret"});
  read(j, "config", "seed", c.seed);
  read(j, "config", "folds", c.folds);
  read(j, "config", "timepoints", c.timepoints);
  read(j, "config", "missing_rate", c.missing_rate);
  read(j, "config", "recon_method", c.recon_method);

  if (j.contains("synth")) {
    const json& s = j["synth"];
    check_keys(s, "synth",
               {"n_stable", "n_progressive", "nodes", "samples", "max_visits", "networks", "horizon_months",
                "max_conversion_lag_months", "planted_rois", "planted_edges", "effect_size", "roi_effect_scale",
                "noise_sd"});
    read(s, "synth", "n_stable", c.synth.n_stable);
    read(s, "synth", "n_progressive", c.synth.n_progressive);
    read(s, "synth", "nodes", c.synth.nodes);
    read(s, "synth", "samples", c.synth.samples);
    read(s, "synth", "max_visits", c.synth.max_visits);
    read(s, "synth", "networks", c.synth.networks);
    read(s, "synth", "horizon_months", c.synth.horizon_months);
    read(s, "synth", "max_conversion_lag_months", c.synth.max_conversion_lag_months);
    read(s, "synth", "effect_size", c.synth.effect_size);
    read(s, "synth", "roi_effect_scale", c.synth.roi_effect_scale);
    read(s, "synth", "noise_sd", c.synth.noise_sd);
    try {
      if (s.contains("planted_rois")) c.synth.planted_rois = s["planted_rois"].get<std::vector<std::size_t>>();
      if (s.contains("planted_edges")) c.synth.planted_edges = s["planted_edges"].get<std::vector<NodePair>>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("synth planted sets: ") + e.what());
    }
  }
  if (j.contains("graph")) {
    const json& g = j["graph"];
    check_keys(g, "graph", {"density", "binarize"});
    read(g, "graph", "density", c.graph.density);
    read(g, "graph", "binarize", c.graph.binarize);
  }
  if (j.contains("recon")) {
    const json& r = j["recon"];
    check_keys(r, "recon",
               {"latent", "encoder_hidden", "sde_hidden", "decoder_hidden", "kl_weight", "log_sigma_min",
                "log_sigma_max", "sample_spacing", "steps_per_unit", "linear_drift", "encoder_holdout", "epochs",
                "batch", "learning_rate", "rnn_hidden"});
    read(r, "recon", "latent", c.recon.latent);
    read(r, "recon", "encoder_hidden", c.recon.encoder_hidden);
    read(r, "recon", "sde_hidden", c.recon.sde_hidden);
    read(r, "recon", "decoder_hidden", c.recon.decoder_hidden);
    read(r, "recon", "kl_weight", c.recon.kl_weight);
    read(r, "recon", "log_sigma_min", c.recon.log_sigma_min);
    read(r, "recon", "log_sigma_max", c.recon.log_sigma_max);
    read(r, "recon", "sample_spacing", c.recon.sample_spacing);
    read(r, "recon", "steps_per_unit", c.recon.steps_per_unit);
    read(r, "recon", "linear_drift", c.recon.linear_drift);
    read(r, "recon", "encoder_holdout", c.recon.encoder_holdout);
    read(r, "recon", "epochs", c.recon.epochs);
    read(r, "recon", "batch", c.recon.batch);
    read(r, "recon", "learning_rate", c.recon.learning_rate);
    read(r, "recon", "rnn_hidden", c.rnn_hidden);
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    StgnnConfig& s = c.train.model;
    check_keys(m, "model",
               {"hidden", "layers", "head_hidden1", "head_hidden2", "dropout", "sde_hidden", "steps_per_unit",
                "months_per_unit", "mask_init_logit", "update_gate_bias"});
    read(m, "model", "hidden", s.hidden);
    read(m, "model", "layers", s.layers);
    read(m, "model", "head_hidden1", s.head_hidden1);
    read(m, "model", "head_hidden2", s.head_hidden2);
    read(m, "model", "dropout", s.dropout);
    read(m, "model", "sde_hidden", s.sde_hidden);
    read(m, "model", "steps_per_unit", s.steps_per_unit);
    read(m, "model", "months_per_unit", s.months_per_unit);
    read(m, "model", "mask_init_logit", s.mask_init_logit);
    read(m, "model", "update_gate_bias", s.update_gate_bias);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "train", {"epochs", "batch", "lr", "weight_decay", "lambda"});
    read(t, "train", "epochs", c.train.epochs);
    read(t, "train", "batch", c.train.batch);
    read(t, "train", "lr", c.train.lr);
    read(t, "train", "weight_decay", c.train.weight_decay);
    if (t.contains("lambda")) {
      const json& l = t["lambda"];
      if (!l.is_array() || l.size() != 3 || !std::all_of(l.begin(), l.end(), [](const json& x) { return x.is_number(); }))
        throw ConfigError("train.lambda must be an array of three numbers");
      c.train.loss = {l[0].get<double>(), l[1].get<double>(), l[2].get<double>()};
    }
  }
  if (j.contains("interpret")) {
    const json& i = j["interpret"];
    check_keys(i, "interpret", {"top_rois", "top_edges", "fdr_q"});
    read(i, "interpret", "top_rois", c.interpret.top_rois);
    read(i, "interpret", "top_edges", c.interpret.top_edges);
    read(i, "interpret", "fdr_q", c.interpret.fdr_q);
  }
  c.synth.seed = c.seed;
  validate(c);
  return c;
}

json config_to_json(const RunConfig& c) {
  const StgnnConfig& m = c.train.model;
  return {
      {"seed", c.seed},
      {"folds", c.folds},
      {"timepoints", c.timepoints},
      {"missing_rate", c.missing_rate},
      {"recon_method", c.recon_method},
      {"synth",
       {{"n_stable", c.synth.n_stable},
        {"n_progressive", c.synth.n_progressive},
        {"nodes", c.synth.nodes},
        {"samples", c.synth.samples},
        {"max_visits", c.synth.max_visits},
        {"networks", c.synth.networks},
        {"horizon_months", c.synth.horizon_months},
        {"max_conversion_lag_months", c.synth.max_conversion_lag_months},
        {"planted_rois", c.synth.planted_rois},
        {"planted_edges", c.synth.planted_edges},
        {"effect_size", c.synth.effect_size},
        {"roi_effect_scale", c.synth.roi_effect_scale},
        {"noise_sd", c.synth.noise_sd}}},
      {"graph", {{"density", c.graph.density}, {"binarize", c.graph.binarize}}},
      {"recon",
       {{"latent", c.recon.latent},
        {"encoder_hidden", c.recon.encoder_hidden},
        {"sde_hidden", c.recon.sde_hidden},
        {"decoder_hidden", c.recon.decoder_hidden},
        {"kl_weight", c.recon.kl_weight},
        {"log_sigma_min", c.recon.log_sigma_min},
        {"log_sigma_max", c.recon.log_sigma_max},
        {"sample_spacing", c.recon.sample_spacing},
        {"steps_per_unit", c.recon.steps_per_unit},
        {"linear_drift", c.recon.linear_drift},
        {"encoder_holdout", c.recon.encoder_holdout},
        {"epochs", c.recon.epochs},
        {"batch", c.recon.batch},
        {"learning_rate", c.recon.learning_rate},
        {"rnn_hidden", c.rnn_hidden}}},
      {"model",
       {{"hidden", m.hidden},
        {"layers", m.layers},
        {"head_hidden1", m.head_hidden1},
        {"head_hidden2", m.head_hidden2},
        {"dropout", m.dropout},
        {"sde_hidden", m.sde_hidden},
        {"steps_per_unit", m.steps_per_unit},
        {"months_per_unit", m.months_per_unit},
        {"mask_init_logit", m.mask_init_logit},
        {"update_gate_bias", m.update_gate_bias}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch", c.train.batch},
        {"lr", c.train.lr},
        {"weight_decay", c.train.weight_decay},
        {"lambda", {c.train.loss.lambda1, c.train.loss.lambda2, c.train.loss.lambda3}}}},
      {"interpret",
       {{"top_rois", c.interpret.top_rois}, {"top_edges", c.interpret.top_edges}, {"fdr_q", c.interpret.fdr_q}}},
  };
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace connectoflow
