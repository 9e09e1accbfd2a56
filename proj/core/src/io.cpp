#include "bfm/io.hpp"

#include <cstdio>
#include <fstream>

#include "bfm/errors.hpp"

namespace bfm {

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_pgm(const std::string& path, std::size_t rows, std::size_t cols,
               const std::vector<std::uint8_t>& gray) {
  if (gray.size() != rows * cols)
    throw ContractError("pgm payload size does not match " + std::to_string(rows) + "x" +
                        std::to_string(cols));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("cannot open " + path + " for writing");
  os << "P5\n" << cols << ' ' << rows << "\n255\n";
  os.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
}

}  // namespace bfm
