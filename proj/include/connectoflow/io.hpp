#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "connectoflow/cohort.hpp"
#include "connectoflow/graph.hpp"
#include "connectoflow/synth.hpp"

namespace connectoflow {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

std::string read_text(const std::string& path);
/// Write through a temporary file and rename, so readers never see a partial file.
void write_text(const std::string& path, const std::string& content);

nlohmann::json truth_to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const nlohmann::json& j);

struct CohortFiles {
  std::vector<SubjectRecord> subjects;
  std::optional<GroundTruth> truth;
  /// Free-form metadata stored by the writer (generator config, missing rate).
  nlohmann::json meta;
};

/// Layout under `dir`:
///   manifest.json           subject list, metadata and SHA-256 of every other file
///   truth.json              planted sets (optional)
///   subjects/<id>.json      label, group, per-visit month, presence flags and signal file
///   subjects/<id>/v<k>.csv  N×D signals; absent samples are stored as 0
/// `dir` is created if its parent exists. Returns the manifest.
nlohmann::json write_cohort(const std::string& dir, const std::vector<SubjectRecord>& subjects,
                            const GroundTruth* truth, const nlohmann::json& meta);

/// Verifies every hash listed in the manifest; throws InputError on any mismatch.
CohortFiles read_cohort(const std::string& dir);

/// One JSON per subject (months, label, file paths) and features/adjacency CSVs per timepoint.
void write_dynamic_graph(const std::string& dir, const DynamicGraph& graph);
DynamicGraph read_dynamic_graph(const std::string& manifest_path);

}  // namespace connectoflow
