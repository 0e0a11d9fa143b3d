#pragma once

#include <optional>
#include <string>

#include "vslcrf/data.hpp"
#include "vslcrf/types.hpp"

namespace vslcrf {

// A trained model plus the feature transform applied before training, if any.
struct SavedModel {
  Model model;
  std::optional<PcaTransform> pca;
};

// Versioned text format: a key-value header, an optional PCA block, then the
// full (both-branch) packed parameter vector, one value per line with 17
// significant digits. Byte-stable for identical inputs.
void save_model(const SavedModel& saved, const std::string& path);
SavedModel load_model(const std::string& path);

}  // namespace vslcrf
