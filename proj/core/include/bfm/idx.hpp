#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bfm/rng.hpp"
#include "bfm/tensor.hpp"

namespace bfm::tasks {

// grayscale images plus labels, straight out of the IDX container
struct RawIdx {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count*rows*cols, row-major
  std::vector<std::uint8_t> labels;  // count entries in [0,9]
};

// Parses the big-endian IDX pair (images magic 0x00000803, labels magic
// 0x00000801). Count fields must agree; format errors carry the byte offset.
RawIdx load_idx(const std::string& images_path, const std::string& labels_path);

void write_idx(const std::string& images_path, const std::string& labels_path, const RawIdx& raw);

struct BinaryImageSet {
  Tensor images;  // [count, height*width], entries exactly +-1
  std::vector<int> labels;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t source_rows = 0;  // pre-downscale dims, e.g. 28x28
  std::size_t source_cols = 0;
};

// factor 1 keeps the resolution, factor 2 mean-pools 2x2 blocks first;
// then sign(pixel/255 - threshold) with ties resolved to +1
BinaryImageSet binarize_and_downscale(const RawIdx& raw, double threshold, int factor);

// dataset cache in the checkpoint container format
void save_image_set(const std::string& path, const BinaryImageSet& set);
BinaryImageSet load_image_set(const std::string& path);

// Procedural stand-in dataset: digit glyphs from a 5x7 bitmap font, scaled,
// jittered and noised onto a rows x cols canvas. Used for smoke runs when no
// real dataset file is available.
RawIdx synth_digits(Rng& rng, std::size_t count, std::size_t rows = 28, std::size_t cols = 28);

}  // namespace bfm::tasks
