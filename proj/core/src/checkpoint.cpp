#include "bfm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "bfm/errors.hpp"

namespace bfm {

namespace {

constexpr char kMagic[4] = {'B', 'N', 'F', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > buf.size()) throw FormatError(std::string("truncated ") + what, pos);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) |
                      (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos + 1])) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    pos += 8;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

}  // namespace

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& tensors) {
  if (tensors.size() > std::numeric_limits<std::uint32_t>::max())
    throw ContractError("too many tensors for container");
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max())
      throw ContractError("tensor name too long: " + name);
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    out.push_back(static_cast<char>(t.rank()));
    for (std::size_t e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t.data()) put_f64(out, v);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("cannot open " + path + " for writing");
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path, 0);
  std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  Reader r{buf};
  r.need(4, "magic");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError("bad magic, expected BNFM", 0);
  r.pos = 4;
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw FormatError("unsupported container version " + std::to_string(version), 4);
  const std::uint32_t count = r.u32("tensor count");
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16("name length");
    r.need(name_len, "name");
    std::string name = buf.substr(r.pos, name_len);
    r.pos += name_len;
    const std::uint8_t rank = r.u8("rank");
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      shape[d] = r.u32("extent");
      numel *= shape[d];
    }
    std::vector<double> data(numel);
    for (std::size_t j = 0; j < numel; ++j) data[j] = r.f64("payload");
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

void save_checkpoint(const std::string& path, const Params& params) {
  std::vector<std::pair<std::string, Tensor>> tensors;
  tensors.reserve(params.count());
  for (const auto& [name, t] : params.items()) tensors.emplace_back(name, t);
  save_tensors(path, tensors);
}

Params load_checkpoint(const std::string& path) {
  Params params;
  for (auto& [name, t] : load_tensors(path)) params.add(name, std::move(t));
  return params;
}

}  // namespace bfm
