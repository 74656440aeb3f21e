#pragma once

// Parameter dump format (text, one file per model):
//
//   metahpo-tensors 1
//   <tensor count>
//   <name> <rows> <cols>
//   <row 0 values, space separated>
//   ...
//
// Values use shortest round-trip decimal, so a dump reloads bit-exactly.

#include <filesystem>
#include <iosfwd>
#include <string>

#include "metahpo/layers.hpp"

namespace metahpo {

void write_params(std::ostream& out, const ParamList& params);
// Loads values into `params` by name; every tensor in the list must be present
// with a matching shape.
void read_params(std::istream& in, const ParamList& params);

void save_params(const std::filesystem::path& path, const ParamList& params);
void load_params(const std::filesystem::path& path, const ParamList& params);

}  // namespace metahpo
