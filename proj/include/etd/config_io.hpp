#pragma once

#include <string>

#include "etd/model_config.hpp"

namespace etd {

std::string architecture_name(Architecture a);
Architecture architecture_from_name(const std::string& s);

std::string ordering_name(Ordering o);
Ordering ordering_from_name(const std::string& s);

/// Flat `key = value` text form of a model configuration. Lists are
/// comma-separated. Only uniform-block configurations are expressible;
/// that covers everything the builders produce.
std::string serialize_config(const ModelConfig& cfg);

/// Inverse of serialize_config. Unknown keys raise parse_error with the
/// offending line number. Keys not present keep the defaults of the
/// architecture named in the file.
ModelConfig parse_config_text(const std::string& text);

ModelConfig load_config_file(const std::string& path);

} // namespace etd
