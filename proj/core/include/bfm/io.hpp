#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bfm {

// round-trip-exact float formatting for CSV/JSON output
std::string fmt_g17(double v);

// binary P5 image, maxval 255
void write_pgm(const std::string& path, std::size_t rows, std::size_t cols,
               const std::vector<std::uint8_t>& gray);

}  // namespace bfm
