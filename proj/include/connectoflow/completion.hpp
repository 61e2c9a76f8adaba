#pragma once

#include <string>

#include "connectoflow/cohort.hpp"

namespace connectoflow {

/// Produces the full N×D window of a visit: observed samples are kept and
/// absent samples are filled by the implementation's estimate.
class SignalCompleter {
 public:
  virtual ~SignalCompleter() = default;
  virtual Matrix complete(const Visit& visit) const = 0;
  virtual std::string name() const = 0;
};

/// Returns the stored window untouched.
class PassThroughCompleter final : public SignalCompleter {
 public:
  Matrix complete(const Visit& visit) const override { return visit.signals; }
  std::string name() const override { return "identity"; }
};

}  // namespace connectoflow
