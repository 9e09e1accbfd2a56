#include "bfm/idx.hpp"

#include <algorithm>
#include <fstream>

#include "bfm/checkpoint.hpp"
#include "bfm/errors.hpp"

namespace bfm::tasks {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path, 0);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::string& buf, std::size_t pos, const char* what) {
  if (pos + 4 > buf.size()) throw FormatError(std::string("truncated ") + what, pos);
  return (static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos])) << 24) |
         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + 3]));
}

void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

}  // namespace

RawIdx load_idx(const std::string& images_path, const std::string& labels_path) {
  const std::string img = slurp(images_path);
  if (be32(img, 0, "images magic") != kImagesMagic)
    throw FormatError("bad images magic, expected 0x00000803", 0);
  RawIdx raw;
  raw.count = be32(img, 4, "images count");
  raw.rows = be32(img, 8, "images rows");
  raw.cols = be32(img, 12, "images cols");
  const std::size_t payload = raw.count * raw.rows * raw.cols;
  if (img.size() != 16 + payload)
    throw FormatError("images payload is " + std::to_string(img.size() - 16) + " bytes, expected " +
                          std::to_string(payload),
                      std::min(img.size(), static_cast<std::size_t>(16) + payload));
  raw.pixels.assign(img.begin() + 16, img.end());

  const std::string lab = slurp(labels_path);
  if (be32(lab, 0, "labels magic") != kLabelsMagic)
    throw FormatError("bad labels magic, expected 0x00000801", 0);
  const std::size_t lab_count = be32(lab, 4, "labels count");
  if (lab_count != raw.count)
    throw FormatError("labels count " + std::to_string(lab_count) + " does not match images count " +
                          std::to_string(raw.count),
                      4);
  if (lab.size() != 8 + lab_count)
    throw FormatError("labels payload is " + std::to_string(lab.size() - 8) + " bytes, expected " +
                          std::to_string(lab_count),
                      std::min(lab.size(), static_cast<std::size_t>(8) + lab_count));
  raw.labels.assign(lab.begin() + 8, lab.end());
  return raw;
}

void write_idx(const std::string& images_path, const std::string& labels_path, const RawIdx& raw) {
  if (raw.pixels.size() != raw.count * raw.rows * raw.cols)
    throw ContractError("pixel payload does not match dims");
  if (raw.labels.size() != raw.count) throw ContractError("label payload does not match count");
  std::string img;
  put_be32(img, kImagesMagic);
  put_be32(img, static_cast<std::uint32_t>(raw.count));
  put_be32(img, static_cast<std::uint32_t>(raw.rows));
  put_be32(img, static_cast<std::uint32_t>(raw.cols));
  img.append(raw.pixels.begin(), raw.pixels.end());
  std::ofstream osi(images_path, std::ios::binary);
  if (!osi) throw ContractError("cannot open " + images_path + " for writing");
  osi.write(img.data(), static_cast<std::streamsize>(img.size()));

  std::string lab;
  put_be32(lab, kLabelsMagic);
  put_be32(lab, static_cast<std::uint32_t>(raw.count));
  lab.append(raw.labels.begin(), raw.labels.end());
  std::ofstream osl(labels_path, std::ios::binary);
  if (!osl) throw ContractError("cannot open " + labels_path + " for writing");
  osl.write(lab.data(), static_cast<std::streamsize>(lab.size()));
}

BinaryImageSet binarize_and_downscale(const RawIdx& raw, double threshold, int factor) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ConfigError("binarize threshold must lie in (0,1)");
  if (factor != 1 && factor != 2) throw ConfigError("downscale factor must be 1 or 2");
  if (factor == 2 && (raw.rows % 2 != 0 || raw.cols % 2 != 0))
    throw ConfigError("2x downscale needs even source dims");

  BinaryImageSet set;
  set.source_rows = raw.rows;
  set.source_cols = raw.cols;
  set.height = raw.rows / static_cast<std::size_t>(factor);
  set.width = raw.cols / static_cast<std::size_t>(factor);
  const std::size_t npix = set.height * set.width;
  std::vector<double> data(raw.count * npix);
  for (std::size_t i = 0; i < raw.count; ++i) {
    const std::uint8_t* src = raw.pixels.data() + i * raw.rows * raw.cols;
    for (std::size_t r = 0; r < set.height; ++r) {
      for (std::size_t c = 0; c < set.width; ++c) {
        double level;
        if (factor == 1) {
          level = static_cast<double>(src[r * raw.cols + c]) / 255.0;
        } else {
          const std::size_t r0 = 2 * r, c0 = 2 * c;
          const double acc = static_cast<double>(src[r0 * raw.cols + c0]) +
                             static_cast<double>(src[r0 * raw.cols + c0 + 1]) +
                             static_cast<double>(src[(r0 + 1) * raw.cols + c0]) +
                             static_cast<double>(src[(r0 + 1) * raw.cols + c0 + 1]);
          level = acc / (4.0 * 255.0);
        }
        data[i * npix + r * set.width + c] = (level - threshold >= 0.0) ? 1.0 : -1.0;
      }
    }
  }
  set.images = Tensor({raw.count, npix}, std::move(data));
  set.labels.reserve(raw.count);
  for (std::uint8_t l : raw.labels) set.labels.push_back(static_cast<int>(l));
  return set;
}

void save_image_set(const std::string& path, const BinaryImageSet& set) {
  const std::size_t count = set.labels.size();
  std::vector<double> labels(set.labels.begin(), set.labels.end());
  std::vector<double> dims = {static_cast<double>(set.height), static_cast<double>(set.width),
                              static_cast<double>(set.source_rows),
                              static_cast<double>(set.source_cols)};
  save_tensors(path, {{"images", set.images},
                      {"labels", Tensor({count}, std::move(labels))},
                      {"dims", Tensor({4}, std::move(dims))}});
}

BinaryImageSet load_image_set(const std::string& path) {
  BinaryImageSet set;
  for (auto& [name, t] : load_tensors(path)) {
    if (name == "images") {
      set.images = std::move(t);
    } else if (name == "labels") {
      set.labels.reserve(t.size());
      for (double v : t.data()) set.labels.push_back(static_cast<int>(v));
    } else if (name == "dims") {
      set.height = static_cast<std::size_t>(t[0]);
      set.width = static_cast<std::size_t>(t[1]);
      set.source_rows = static_cast<std::size_t>(t[2]);
      set.source_cols = static_cast<std::size_t>(t[3]);
    }
  }
  if (set.images.size() == 0 || set.height == 0)
    throw FormatError("image-set cache is missing records", 0);
  return set;
}

namespace {

// 5x7 glyphs for '0'..'9', one bit per cell
constexpr std::uint8_t kFont[10][7] = {
    {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110},  // 0
    {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110},  // 1
    {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111},  // 2
    {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110},  // 3
    {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010},  // 4
    {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110},  // 5
    {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110},  // 6
    {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000},  // 7
    {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110},  // 8
    {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100},  // 9
};

}  // namespace

RawIdx synth_digits(Rng& rng, std::size_t count, std::size_t rows, std::size_t cols) {
  if (rows < 24 || cols < 20) throw ConfigError("synthetic canvas must be at least 24x20");
  RawIdx raw;
  raw.count = count;
  raw.rows = rows;
  raw.cols = cols;
  raw.pixels.assign(count * rows * cols, 0);
  raw.labels.resize(count);
  const int scale = 3;  // glyph becomes 15x21
  for (std::size_t i = 0; i < count; ++i) {
    const int digit = static_cast<int>(rng.below(10));
    raw.labels[i] = static_cast<std::uint8_t>(digit);
    std::uint8_t* img = raw.pixels.data() + i * rows * cols;
    const int max_dr = static_cast<int>(rows) - 7 * scale;
    const int max_dc = static_cast<int>(cols) - 5 * scale;
    const int dr = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_dr - 1)));
    const int dc = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_dc - 1)));
    const double stroke = 170.0 + 85.0 * rng.uniform();
    for (int gr = 0; gr < 7; ++gr) {
      for (int gc = 0; gc < 5; ++gc) {
        if (!((kFont[digit][gr] >> (4 - gc)) & 1)) continue;
        for (int sr = 0; sr < scale; ++sr) {
          for (int sc = 0; sc < scale; ++sc) {
            const int r = dr + gr * scale + sr;
            const int c = dc + gc * scale + sc;
            const double v = stroke * (0.8 + 0.2 * rng.uniform());
            img[r * static_cast<int>(cols) + c] =
                static_cast<std::uint8_t>(std::min(255.0, v));
          }
        }
      }
    }
    // faint background noise so binarization sees realistic grayscale
    for (std::size_t p = 0; p < rows * cols; ++p)
      if (img[p] == 0) img[p] = static_cast<std::uint8_t>(rng.below(24));
  }
  return raw;
}

}  // namespace bfm::tasks
