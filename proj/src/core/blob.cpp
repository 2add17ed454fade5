#include "rest/core/blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rest/core/error.hpp"

namespace rest {
namespace le {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::vector<unsigned char>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace le

namespace {
constexpr char kMagic[4] = {'R', 'S', 'T', 'E'};
}

void write_blob(const std::filesystem::path& path, std::uint32_t count, std::uint32_t dim,
                std::span<const float> values) {
  if (values.size() != static_cast<std::size_t>(count) * dim) {
    throw Error(ErrorCode::kDimMismatch, "blob payload size does not match count x dim");
  }
  std::vector<unsigned char> bytes(kMagic, kMagic + 4);
  bytes.reserve(12 + values.size() * 4);
  le::put_u32(bytes, count);
  le::put_u32(bytes, dim);
  for (float v : values) le::put_f32(bytes, v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kMissingFile, "cannot write blob: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Blob read_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingBlob, "missing blob: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kParse, "bad blob header: " + path.string());
  }
  Blob blob;
  blob.count = le::get_u32(bytes.data() + 4);
  blob.dim = le::get_u32(bytes.data() + 8);
  const std::size_t n = static_cast<std::size_t>(blob.count) * blob.dim;
  if (bytes.size() != 12 + 4 * n) {
    throw Error(ErrorCode::kParse, "blob payload size mismatch: " + path.string());
  }
  blob.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) blob.values[i] = le::get_f32(bytes.data() + 12 + 4 * i);
  return blob;
}

}  // namespace rest
