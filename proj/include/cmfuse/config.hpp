#pragma once

#include <map>
#include <string>

#include "cmfuse/phantom.hpp"
#include "cmfuse/training.hpp"

namespace cmfuse {

// Flat key = value config files: one pair per line, '#' comments, keys named
// exactly after the struct fields (map entries use dotted keys such as
// attenuation.AD; lists are comma-separated).
std::map<std::string, std::string> parse_kv_file(const std::string& path);

// Typed extraction; unknown keys are rejected.
PhantomSpec phantom_spec_from_kv(const std::map<std::string, std::string>& kv);
TrainConfig train_config_from_kv(const std::map<std::string, std::string>& kv);

std::string phantom_spec_to_kv(const PhantomSpec& spec);
std::string train_config_to_kv(const TrainConfig& cfg);

}  // namespace cmfuse
