#pragma once

#include <map>
#include <string>
#include <vector>

#include "actuforge/tensor.hpp"

// AFTN flat tensor container:
//   magic "AFTN", version u32, tensor count u32,
//   per tensor: name_len u32, name bytes, rank u32, extents u64 each,
//   raw little-endian f32 values.

namespace af {

struct NamedTensors {
    std::map<std::string, Tensor> items;  // ordered by name for stable files
};

void save_tensors(const std::string& path, const NamedTensors& tensors);
NamedTensors load_tensors(const std::string& path);

// convenience: snapshot / restore a parameter set by name
void save_parameters(const std::string& path, std::vector<Parameter*>& params);
void load_parameters(const std::string& path, std::vector<Parameter*>& params);

}  // namespace af
