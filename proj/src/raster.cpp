#include "dslam/raster.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "dslam/errors.hpp"

namespace dslam {

namespace {

constexpr std::array<char, 4> kDepthMagic = {'D', 'P', 'R', '1'};
constexpr std::array<char, 4> kProbMagic = {'P', 'R', 'B', '1'};

const std::array<char, 4>& magic_for(RasterKind kind) {
  return kind == RasterKind::Depth ? kDepthMagic : kProbMagic;
}

void put_u32(std::vector<char>& out, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const char* bytes) {
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) {
    value |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  }
  return value;
}

}  // namespace

void write_raster(const std::filesystem::path& path, const Raster& raster, RasterKind kind) {
  std::vector<char> bytes;
  bytes.reserve(12 + 4 * raster.size());
  const auto& magic = magic_for(kind);
  bytes.insert(bytes.end(), magic.begin(), magic.end());
  put_u32(bytes, static_cast<std::uint32_t>(raster.width()));
  put_u32(bytes, static_cast<std::uint32_t>(raster.height()));
  for (float value : raster.data()) put_u32(bytes, std::bit_cast<std::uint32_t>(value));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Raster read_raster(const std::filesystem::path& path, RasterKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("missing raster file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12) throw ParseError("truncated raster header in " + path.string());
  const auto& magic = magic_for(kind);
  if (!std::equal(magic.begin(), magic.end(), bytes.begin())) {
    throw ParseError("bad raster magic in " + path.string());
  }
  const std::uint32_t width = get_u32(bytes.data() + 4);
  const std::uint32_t height = get_u32(bytes.data() + 8);
  const std::size_t count = static_cast<std::size_t>(width) * height;
  if (bytes.size() != 12 + 4 * count) {
    throw ParseError("raster payload size mismatch in " + path.string());
  }
  Raster raster(static_cast<int>(width), static_cast<int>(height));
  for (std::size_t i = 0; i < count; ++i) {
    raster[i] = std::bit_cast<float>(get_u32(bytes.data() + 12 + 4 * i));
  }
  return raster;
}

}  // namespace dslam
