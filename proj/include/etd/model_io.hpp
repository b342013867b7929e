#pragma once

#include <string>

#include "etd/models.hpp"

namespace etd {

/// Versioned binary checkpoint: magic "ETDM", format version, the flat
/// config text, then every parameter slot (including batch-norm running
/// statistics) as 32-bit floats in declaration order.
void save_model(Model<float>& model, const std::string& path);

Model<float> load_model(const std::string& path);

} // namespace etd
