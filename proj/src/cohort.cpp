#include "connectoflow/cohort.hpp"

#include <algorithm>

#include "connectoflow/errors.hpp"

namespace connectoflow {

std::size_t Visit::observed_count() const {
  return static_cast<std::size_t>(std::count(present.begin(), present.end(), std::uint8_t{1}));
}

SubjectRecord SubjectRecord::truncated(std::size_t k) const {
  SubjectRecord out = *this;
  if (out.visits.size() > k) out.visits.resize(k);
  return out;
}

void validate_subject(const SubjectRecord& subject) {
  if (subject.visits.empty()) throw InputError("subject " + subject.id + " has no visits");
  const auto& first = subject.visits.front().signals;
  for (std::size_t i = 0; i < subject.visits.size(); ++i) {
    const Visit& v = subject.visits[i];
    if (!v.signals.same_shape(first))
      throw InputError("subject " + subject.id + ": visit " + std::to_string(i) + " has shape " +
                       v.signals.shape_string() + ", expected " + first.shape_string());
    if (v.present.size() != v.signals.cols())
      throw InputError("subject " + subject.id + ": presence mask length mismatch at visit " + std::to_string(i));
    if (i > 0 && !(v.month > subject.visits[i - 1].month))
      throw InputError("subject " + subject.id + ": visit times must be strictly increasing");
  }
}

}  // namespace connectoflow
