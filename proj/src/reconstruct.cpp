#include "connectoflow/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "connectoflow/errors.hpp"

namespace connectoflow {

namespace {

// Times enter the recurrent inputs on a compressed scale.
constexpr double kTimeFeatureScale = 0.1;

Matrix input_row(const IrregularSeries& series, std::size_t k) {
  const std::size_t n = series.nodes();
  Matrix x(1, n + 1);
  for (std::size_t i = 0; i < n; ++i) x(0, i) = series.values(k, i);
  x(0, n) = series.times[k] * kTimeFeatureScale;
  return x;
}

Matrix rows_of(const IrregularSeries& series) { return series.values; }

template <typename LossFn>
std::vector<double> train_minibatches(ParamStore& params, std::size_t count, std::size_t epochs, std::size_t batch,
                                      double learning_rate, std::uint64_t seed, LossFn&& loss_of,
                                      const EpochCallback& on_epoch) {
  if (count == 0) throw InputError("training needs at least one series");
  if (batch == 0) throw ConfigError("batch size must be positive");
  AdamWConfig opt;
  opt.lr = learning_rate;
  RandomStream rng(seed);
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;
  Tape tape;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < count; start += batch) {
      const std::size_t stop = std::min(count, start + batch);
      tape.clear();
      std::vector<Var> losses;
      for (std::size_t k = start; k < stop; ++k) {
        RandomStream item_rng = rng.derive(epoch * count + order[k]);
        losses.push_back(loss_of(tape, order[k], item_rng));
      }
      Var batch_loss = losses.front();
      for (std::size_t k = 1; k < losses.size(); ++k) batch_loss = batch_loss + losses[k];
      total += batch_loss.scalar();
      tape.backward(scale(batch_loss, 1.0 / static_cast<double>(losses.size())));
      adamw_step(params, opt);
    }
    history.push_back(total / static_cast<double>(count));
    if (on_epoch) on_epoch(epoch, history.back());
  }
  return history;
}

}  // namespace

void validate_series(const IrregularSeries& series) {
  if (series.times.empty()) throw InputError("series has no observations");
  if (series.values.rows() != series.times.size())
    throw InputError("series values have " + std::to_string(series.values.rows()) + " rows for " +
                     std::to_string(series.times.size()) + " times");
  if (series.values.cols() == 0) throw InputError("series has no nodes");
  for (std::size_t k = 1; k < series.times.size(); ++k)
    if (!(series.times[k] > series.times[k - 1])) throw InputError("series times must be strictly increasing");
  if (series.times.front() < 0.0) throw InputError("series times must be non-negative");
  if (!series.values.all_finite()) throw InputError("series has non-finite observations");
}

std::vector<double> sample_times(std::size_t samples, double spacing) {
  std::vector<double> t(samples);
  for (std::size_t s = 0; s < samples; ++s) t[s] = static_cast<double>(s) * spacing;
  return t;
}

IrregularSeries visit_series(const Visit& visit, double spacing) {
  IrregularSeries out;
  const std::size_t n = visit.signals.rows();
  const std::size_t observed = visit.observed_count();
  out.values = Matrix(observed, n);
  std::size_t row = 0;
  for (std::size_t s = 0; s < visit.signals.cols(); ++s) {
    if (!visit.present[s]) continue;
    out.times.push_back(static_cast<double>(s) * spacing);
    for (std::size_t i = 0; i < n; ++i) out.values(row, i) = visit.signals(i, s);
    ++row;
  }
  return out;
}

Var kl_standard_normal(Var mu, Var log_sigma) {
  Var terms = add_scalar(exp(scale(log_sigma, 2.0)) + square(mu) - scale(log_sigma, 2.0), -1.0);
  return scale(sum(terms), 0.5);
}

Var sample_initial(Tape& tape, const Posterior& posterior, RandomStream* rng) {
  if (!rng) return posterior.mu;
  Var eps = tape.constant(rng->normal_matrix(posterior.mu.rows(), posterior.mu.cols()));
  return posterior.mu + mul(posterior.sigma, eps);
}

ReconModel::ReconModel(std::size_t nodes, const ReconConfig& config, std::uint64_t seed)
    : config_(config), nodes_(nodes) {
  if (nodes == 0) throw ConfigError("reconstruction needs at least one node");
  if (config.latent == 0 || config.encoder_hidden == 0 || config.sde_hidden == 0 || config.decoder_hidden == 0)
    throw ConfigError("reconstruction dimensions must be positive");
  if (!(config.log_sigma_min < config.log_sigma_max)) throw ConfigError("log-sigma clamp range is empty");
  if (!(config.sample_spacing > 0.0) || config.steps_per_unit < 1)
    throw ConfigError("sample spacing and steps per unit must be positive");
  RandomStream rng(seed);
  encoder_ = nn::GruCell(params_, "recon.encoder", nodes + 1, config.encoder_hidden, rng);
  head_ = nn::Linear(params_, "recon.head", config.encoder_hidden, 2 * config.latent, rng);
  sde_ = MlpSde(params_, "recon.sde", config.latent, config.sde_hidden, NoiseType::diagonal, rng);
  if (config.linear_drift) sde_.add_linear_drift(params_, "recon.sde", rng);
  decoder_ = nn::Mlp2(params_, "recon.decoder", config.latent, config.decoder_hidden, nodes,
                      nn::Activation::identity, rng);
}

Posterior ReconModel::encode(Tape& tape, const IrregularSeries& series) const {
  validate_series(series);
  if (series.nodes() != nodes_)
    throw InputError("series has " + std::to_string(series.nodes()) + " nodes, model expects " +
                     std::to_string(nodes_));
  Var h = tape.constant(Matrix(1, config_.encoder_hidden));
  for (std::size_t k = series.length(); k-- > 0;) h = encoder_(tape, tape.constant(input_row(series, k)), h);
  Var out = head_(tape, h);
  Posterior post;
  post.mu = slice_cols(out, 0, config_.latent);
  post.log_sigma = clamp(slice_cols(out, config_.latent, config_.latent), config_.log_sigma_min,
                         config_.log_sigma_max);
  post.sigma = exp(post.log_sigma);
  return post;
}

IrregularSeries ReconModel::encoder_view(const IrregularSeries& series, RandomStream& rng) const {
  if (config_.encoder_holdout <= 0.0 || series.length() < 2) return series;
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < series.length(); ++k)
    if (rng.uniform() >= config_.encoder_holdout) keep.push_back(k);
  if (keep.empty()) keep.push_back(rng.index(series.length()));
  IrregularSeries out;
  out.values = Matrix(keep.size(), series.nodes());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.times.push_back(series.times[keep[r]]);
    for (std::size_t i = 0; i < series.nodes(); ++i) out.values(r, i) = series.values(keep[r], i);
  }
  return out;
}

Var ReconModel::decode(Tape& tape, Var latent_rows) const { return decoder_(tape, latent_rows); }

Var ReconModel::decode_path(Tape& tape, Var z0, const std::vector<double>& times, RandomStream* rng) const {
  if (times.empty()) throw InputError("no query times");
  if (times.front() < 0.0) throw InputError("query times must start at or after 0");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1])) throw InputError("query times must be strictly increasing");
  std::vector<double> schedule;
  const bool anchor = times.front() > 0.0;
  if (anchor) schedule.push_back(0.0);
  schedule.insert(schedule.end(), times.begin(), times.end());
  Trajectory path = integrate_schedule(sde_, z0, schedule, config_.steps_per_unit, rng);
  std::vector<Var> states(path.states.begin() + (anchor ? 1 : 0), path.states.end());
  return decode(tape, stack_rows(states));
}

Var ReconModel::recon_loss(Tape& tape, const IrregularSeries& series, RandomStream* rng) const {
  Posterior post = encode(tape, rng ? encoder_view(series, *rng) : series);
  Var z0 = sample_initial(tape, post, rng);
  Var decoded = decode_path(tape, z0, series.times, rng);
  Var mse = mean(square(decoded - tape.constant(rows_of(series))));
  return mse + scale(kl_standard_normal(post.mu, post.log_sigma), config_.kl_weight);
}

Matrix ReconModel::reconstruct_at(const IrregularSeries& series, const std::vector<double>& query_times,
                                  RandomStream* rng) const {
  Tape tape;
  Posterior post = encode(tape, series);
  Var z0 = sample_initial(tape, post, rng);
  return decode_path(tape, z0, query_times, rng).value();
}

std::vector<double> train_recon(ReconModel& model, const std::vector<IrregularSeries>& data, std::size_t epochs,
                                std::uint64_t seed, const EpochCallback& on_epoch) {
  const ReconConfig& cfg = model.config();
  return train_minibatches(
      model.params(), data.size(), epochs, cfg.batch, cfg.learning_rate, seed,
      [&](Tape& tape, std::size_t k, RandomStream& rng) { return model.recon_loss(tape, data[k], &rng); },
      on_epoch);
}

Matrix mean_impute(const IrregularSeries& series, const std::vector<double>& query_times) {
  validate_series(series);
  Matrix out(query_times.size(), series.nodes());
  for (std::size_t i = 0; i < series.nodes(); ++i) {
    double m = 0.0;
    for (std::size_t k = 0; k < series.length(); ++k) m += series.values(k, i);
    m /= static_cast<double>(series.length());
    for (std::size_t q = 0; q < query_times.size(); ++q) out(q, i) = m;
  }
  return out;
}

RnnImputer::RnnImputer(std::size_t nodes, std::size_t hidden, std::uint64_t seed) : nodes_(nodes) {
  if (nodes == 0 || hidden == 0) throw ConfigError("rnn imputer dimensions must be positive");
  RandomStream rng(seed);
  cell_ = nn::GruCell(params_, "rnn.cell", nodes + 1, hidden, rng);
  head_ = nn::Linear(params_, "rnn.head", hidden + 1, nodes, rng);
}

Var RnnImputer::forecast(Tape& tape, Var hidden, double elapsed) const {
  return head_(tape, concat_cols(hidden, tape.constant(Matrix(1, 1, elapsed * kTimeFeatureScale))));
}

Var RnnImputer::loss(Tape& tape, const IrregularSeries& series) const {
  validate_series(series);
  if (series.nodes() != nodes_) throw InputError("series node count does not match the rnn imputer");
  Var h = tape.constant(Matrix(1, cell_.hidden()));
  double previous = 0.0;
  std::vector<Var> predictions;
  for (std::size_t k = 0; k < series.length(); ++k) {
    predictions.push_back(forecast(tape, h, series.times[k] - previous));
    h = cell_(tape, tape.constant(input_row(series, k)), h);
    previous = series.times[k];
  }
  return mean(square(stack_rows(predictions) - tape.constant(rows_of(series))));
}

Matrix RnnImputer::predict(const IrregularSeries& series, const std::vector<double>& query_times) const {
  validate_series(series);
  if (series.nodes() != nodes_) throw InputError("series node count does not match the rnn imputer");
  std::vector<std::size_t> order(query_times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return query_times[a] < query_times[b]; });
  Tape tape;
  Var h = tape.constant(Matrix(1, cell_.hidden()));
  double previous = 0.0;
  std::size_t consumed = 0;
  Matrix out(query_times.size(), nodes_);
  for (std::size_t q : order) {
    while (consumed < series.length() && series.times[consumed] < query_times[q]) {
      h = cell_(tape, tape.constant(input_row(series, consumed)), h);
      previous = series.times[consumed];
      ++consumed;
    }
    const Matrix pred = forecast(tape, h, query_times[q] - previous).value();
    for (std::size_t i = 0; i < nodes_; ++i) out(q, i) = pred(0, i);
  }
  return out;
}

std::vector<double> train_rnn(RnnImputer& model, const std::vector<IrregularSeries>& data, std::size_t epochs,
                              std::size_t batch, double learning_rate, std::uint64_t seed,
                              const EpochCallback& on_epoch) {
  return train_minibatches(
      model.params(), data.size(), epochs, batch, learning_rate, seed,
      [&](Tape& tape, std::size_t k, RandomStream&) { return model.loss(tape, data[k]); }, on_epoch);
}

Matrix baseline_impute(const std::string& method, const IrregularSeries& series,
                       const std::vector<double>& query_times, const RnnImputer* rnn) {
  if (method == "mean") return mean_impute(series, query_times);
  if (method == "rnn") {
    if (!rnn) throw StateError("rnn baseline requested without a trained imputer");
    return rnn->predict(series, query_times);
  }
  throw ConfigError("unknown baseline '" + method + "' (expected mean or rnn)");
}

namespace {

std::vector<std::size_t> absent_samples(const Visit& visit) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < visit.present.size(); ++s)
    if (!visit.present[s]) out.push_back(s);
  return out;
}

// Write rows of `filled` (one per absent sample) into the absent columns.
Matrix fill_absent(const Visit& visit, const std::vector<std::size_t>& absent, const Matrix& filled) {
  Matrix out = visit.signals;
  for (std::size_t k = 0; k < absent.size(); ++k)
    for (std::size_t i = 0; i < out.rows(); ++i) out(i, absent[k]) = filled(k, i);
  return out;
}

std::vector<double> times_of(const std::vector<std::size_t>& samples, double spacing) {
  std::vector<double> t;
  for (std::size_t s : samples) t.push_back(static_cast<double>(s) * spacing);
  return t;
}

}  // namespace

Matrix MeanCompleter::complete(const Visit& visit) const {
  const auto absent = absent_samples(visit);
  if (absent.empty()) return visit.signals;
  if (visit.observed_count() == 0) throw InputError("visit has no observed samples");
  IrregularSeries series = visit_series(visit, 1.0);
  return fill_absent(visit, absent, mean_impute(series, times_of(absent, 1.0)));
}

Matrix SdeCompleter::complete(const Visit& visit) const {
  const auto absent = absent_samples(visit);
  if (absent.empty()) return visit.signals;
  const double spacing = model_.config().sample_spacing;
  IrregularSeries series = visit_series(visit, spacing);
  return fill_absent(visit, absent, model_.reconstruct_at(series, times_of(absent, spacing)));
}

Matrix RnnCompleter::complete(const Visit& visit) const {
  const auto absent = absent_samples(visit);
  if (absent.empty()) return visit.signals;
  IrregularSeries series = visit_series(visit, spacing_);
  return fill_absent(visit, absent, model_.predict(series, times_of(absent, spacing_)));
}

std::vector<IrregularSeries> cohort_series(const std::vector<SubjectRecord>& subjects, double spacing) {
  std::vector<IrregularSeries> out;
  for (const SubjectRecord& s : subjects)
    for (const Visit& v : s.visits)
      if (v.observed_count() > 0) out.push_back(visit_series(v, spacing));
  return out;
}

}  // namespace connectoflow
