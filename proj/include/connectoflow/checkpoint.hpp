#pragma once

#include <string>

#include "json.hpp"

#include "connectoflow/params.hpp"

namespace connectoflow {

/// Writes `dir/manifest.json` (metadata, parameter names, shapes, optimizer steps)
/// and one CSV per parameter value and optimizer moment. Reading back restores
/// identical bits.
void save_checkpoint(const std::string& dir, const ParamStore& store, const nlohmann::json& meta);

/// Restores every parameter of `store` from `dir` and returns the stored metadata.
/// Throws InputError on a missing parameter or a shape mismatch.
nlohmann::json load_checkpoint(const std::string& dir, ParamStore& store);

}  // namespace connectoflow
