#include "connectoflow/sde.hpp"

#include <cmath>

#include "connectoflow/errors.hpp"

namespace connectoflow {

MlpSde::MlpSde(ParamStore& store, const std::string& name, std::size_t dim, std::size_t hidden, NoiseType noise,
               RandomStream& rng, double drift_scale, double diffusion_bias)
    : drift_(store, name + ".drift", dim, hidden, dim, nn::Activation::identity, rng),
      diffusion_(store, name + ".diffusion", dim, hidden, dim, nn::Activation::softplus, rng),
      noise_(noise),
      dim_(dim) {
  drift_.second().weight().value *= drift_scale;
  diffusion_.second().weight().value *= 0.1;
  diffusion_.second().bias().value.fill(diffusion_bias);
}

void MlpSde::add_linear_drift(ParamStore& store, const std::string& name, RandomStream& rng) {
  linear_ = nn::Linear(store, name + ".linear", dim_, dim_, rng);
  linear_.weight().value.fill(0.0);
  linear_.bias().value.fill(0.0);
  has_linear_ = true;
}

Var MlpSde::drift(Tape& tape, Var state) const {
  Var out = drift_(tape, state);
  return has_linear_ ? out + linear_(tape, state) : out;
}

Var MlpSde::diffusion(Tape& tape, Var state) const { return diffusion_(tape, state); }

std::size_t euler_steps(double span, int steps_per_unit) {
  if (span <= 0.0) return 0;
  const double raw = std::ceil(static_cast<double>(steps_per_unit) * span - 1e-9);
  return raw < 1.0 ? 1 : static_cast<std::size_t>(raw);
}

Var integrate(const NeuralSde& sde, Var z0, double t_start, double t_end, int steps_per_unit, RandomStream* rng) {
  if (!(t_end >= t_start)) throw ScheduleError("integrate: t_end precedes t_start");
  if (steps_per_unit < 1) throw ScheduleError("integrate: steps_per_unit must be >= 1");
  const double span = t_end - t_start;
  const std::size_t steps = euler_steps(span, steps_per_unit);
  if (steps == 0) return z0;
  const double h = span / static_cast<double>(steps);
  const double sqrt_h = std::sqrt(h);
  const bool noisy = sde.noise() == NoiseType::diagonal && rng != nullptr;

  Tape& tape = z0.tape();
  Var z = z0;
  for (std::size_t k = 0; k < steps; ++k) {
    try {
      Var next = z + scale(sde.drift(tape, z), h);
      if (noisy) {
        Matrix eps = rng->normal_matrix(z.rows(), z.cols());
        eps *= sqrt_h;
        next = next + mul(sde.diffusion(tape, z), tape.constant(std::move(eps)));
      }
      z = next;
    } catch (const DomainError& e) {
      throw DivergenceError("SDE state diverged at step " + std::to_string(k) + ": " + e.what());
    } catch (const DivergenceError& e) {
      throw DivergenceError("SDE state diverged at step " + std::to_string(k) + ": " + e.what());
    }
  }
  return z;
}

Trajectory integrate_schedule(const NeuralSde& sde, Var z0, const std::vector<double>& times, int steps_per_unit,
                              RandomStream* rng) {
  if (times.empty()) throw ScheduleError("integrate_schedule: empty schedule");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw ScheduleError("integrate_schedule: times must be strictly increasing");
  Trajectory traj;
  traj.times = times;
  traj.states.reserve(times.size());
  traj.states.push_back(z0);
  for (std::size_t i = 1; i < times.size(); ++i)
    traj.states.push_back(integrate(sde, traj.states.back(), times[i - 1], times[i], steps_per_unit, rng));
  return traj;
}

}  // namespace connectoflow
