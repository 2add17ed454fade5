#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rest/similarity/similarity.hpp"

namespace rest {

// Length-prefixed text-embedding protocol.
//   request:  u32 LE length, UTF-8 caption
//   response: u8 status, u32 LE length, payload
// status 0: payload = u32 LE dim, dim float32 LE; otherwise the payload is a
// UTF-8 error message.
namespace stream_protocol {

std::vector<unsigned char> encode_request(std::string_view caption);
std::vector<unsigned char> encode_embedding_response(const std::vector<float>& values);
std::vector<unsigned char> encode_error_response(std::string_view message, std::uint8_t status = 1);

}  // namespace stream_protocol

// Client over a pair of file descriptors, or over a child process spawned
// with `/bin/sh -c command` whose stdin/stdout carry the protocol. One request
// is in flight at a time.
class StreamTextEncoder : public TextEncoder {
 public:
  StreamTextEncoder(int read_fd, int write_fd, std::size_t dim);
  static StreamTextEncoder spawn(const std::string& command, std::size_t dim);

  StreamTextEncoder(StreamTextEncoder&& other) noexcept;
  StreamTextEncoder& operator=(StreamTextEncoder&&) = delete;
  ~StreamTextEncoder() override;

  std::size_t dim() const override { return dim_; }
  // Throws kProvider on an error status, a dim mismatch or a broken stream.
  UnitEmbedding encode(const std::string& caption) override;

  std::size_t requests() const noexcept { return requests_; }

 private:
  void read_exact(unsigned char* dst, std::size_t n);
  void write_all(const unsigned char* src, std::size_t n);

  int read_fd_ = -1;
  int write_fd_ = -1;
  int child_pid_ = -1;
  std::size_t dim_ = 0;
  std::size_t requests_ = 0;
};

}  // namespace rest
