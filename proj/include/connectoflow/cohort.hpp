#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "connectoflow/matrix.hpp"

namespace connectoflow {

enum Label : int { stable = 0, progressive = 1 };

/// One scan: an N×D window of regional signals acquired at `month`.
struct Visit {
  double month = 0.0;
  Matrix signals;
  /// Per-sample (column) presence flags; absent samples hold no information.
  std::vector<std::uint8_t> present;

  std::size_t observed_count() const;
  bool complete() const { return observed_count() == signals.cols(); }
};

struct SubjectRecord {
  std::string id;
  int label = stable;
  std::string group;
  std::vector<Visit> visits;

  /// Copy restricted to the first `k` visits.
  SubjectRecord truncated(std::size_t k) const;
};

/// Throws InputError when visit times are not strictly increasing, shapes
/// differ between visits, or a presence vector has the wrong length.
void validate_subject(const SubjectRecord& subject);

}  // namespace connectoflow
