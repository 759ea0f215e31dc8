#pragma once

#include <string>

#include "cmfuse/training.hpp"

namespace cmfuse {

// Binary checkpoint holding both parameter stores with full optimizer state,
// the model configuration, epoch counter, and RNG state, so a resumed run
// continues the original trajectory bitwise.
//
// Layout (little-endian):
//   magic "CMFUSE01" | u32 meta_len | meta JSON | u32 store_count |
//   per store: u32 name_len, name, i64 step, u64 param_count,
//     per param: u32 name_len, name, i32 rows, i32 cols,
//                rows*cols f64 value, rows*cols f64 adam_m, rows*cols f64 adam_v
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace cmfuse
