#pragma once

#include <map>
#include <string>
#include <vector>

#include "binpick/tensor.hpp"

namespace binpick {

// Binary tensor store: magic "BPCK", u32 version, u32 record count, then per
// record: u32 name length, name bytes, u32 rank, u32 dims, f32 payload
// (little-endian throughout).
void save_checkpoint(const std::string& path,
                     const std::vector<Param<float>*>& params);

std::map<std::string, TensorF> load_checkpoint(const std::string& path);

// Copies stored tensors into the params; every param must be present with a
// matching shape.
void assign_params(const std::map<std::string, TensorF>& store,
                   const std::vector<Param<float>*>& params);

}  // namespace binpick
