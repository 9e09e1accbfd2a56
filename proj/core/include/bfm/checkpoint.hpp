#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bfm/net.hpp"
#include "bfm/tensor.hpp"

namespace bfm {

// Flat binary container, little-endian:
//   magic "BNFM", version u32, count u32, then per tensor:
//   name length u16, name bytes, rank u8, extents u32 each, payload f64.
// Used for parameter checkpoints, sampled batches and dataset caches.
void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path);

void save_checkpoint(const std::string& path, const Params& params);
Params load_checkpoint(const std::string& path);  // loaded tensors are trainable

}  // namespace bfm
