#pragma once

#include <string>

#include "stsg/optim.hpp"

namespace stsg {

// Checkpoint format, parameters in strict name order:
//   magic "STSG1\n"
//   per parameter: name length (u32 LE), name bytes, rank (u32 LE),
//                  extents (u32 LE each), payload (f64 LE).
void save_checkpoint(const ParamStore& params, const std::string& path);

// Loads into an already-built store. Every stored parameter must exist with a
// matching shape and vice versa; the first offender is named in the error.
void load_checkpoint(ParamStore& params, const std::string& path);

}  // namespace stsg
