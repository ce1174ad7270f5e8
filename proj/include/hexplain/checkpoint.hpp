#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hexplain/autodiff.hpp"

namespace hexplain {

// Binary checkpoint: magic + version, then a named parameter table with raw
// little-endian 64-bit values. Round-trips bit-exactly.
void save_parameters(std::ostream& out, const std::vector<const Parameter*>& params);
void save_parameters_file(const std::string& path, const std::vector<const Parameter*>& params);

// Loads into the given parameters, matched by name. Throws SchemaError on a
// malformed stream and std::runtime_error on missing/mismatched entries.
void load_parameters(std::istream& in, const std::vector<Parameter*>& params);
void load_parameters_file(const std::string& path, const std::vector<Parameter*>& params);

}  // namespace hexplain
