#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace rest {

// Embedding blob: "RSTE", u32 LE count, u32 LE dim, then count x dim float32
// LE values in row-major order.
struct Blob {
  std::uint32_t count = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values).subspan(i * dim, dim);
  }
};

void write_blob(const std::filesystem::path& path, std::uint32_t count, std::uint32_t dim,
                std::span<const float> values);
// Throws kMissingBlob when the file is absent, kParse on a malformed header or
// truncated payload.
Blob read_blob(const std::filesystem::path& path);

namespace le {
void put_u32(std::vector<unsigned char>& out, std::uint32_t v);
void put_f32(std::vector<unsigned char>& out, float v);
std::uint32_t get_u32(const unsigned char* p);
float get_f32(const unsigned char* p);
}  // namespace le

}  // namespace rest
