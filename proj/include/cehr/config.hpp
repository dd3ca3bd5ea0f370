#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "cehr/experiment.hpp"

namespace cehr {

/// Flat "section.key = value" text. '#' starts a comment; blank lines are
/// ignored. Lists are comma separated. Throws ParseError with the line number
/// for malformed lines and for keys that are not recognised.
std::map<std::string, std::string> parse_key_values(std::istream& in);

/// Overlays parsed entries on `config`. Unknown keys and bad values throw
/// ParseError naming the key.
void apply_entries(ExperimentConfig& config, const std::map<std::string, std::string>& entries);

ExperimentConfig load_config(const std::string& path);

/// Every key with its resolved value; feeding this back through
/// apply_entries reproduces the same config.
std::map<std::string, std::string> config_entries(const ExperimentConfig& config);

void write_config(std::ostream& out, const ExperimentConfig& config);

}  // namespace cehr
