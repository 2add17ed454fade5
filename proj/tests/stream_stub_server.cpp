// Speaks the text-embedding stream protocol on stdin/stdout using the stub
// bag-of-words encoder.
//   stream_stub_server <dim> <seed> [--reply-dim N] [--exit-after N]
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "rest/core/blob.hpp"
#include "rest/core/error.hpp"
#include "rest/loop/stream_encoder.hpp"
#include "rest/synth/synthworld.hpp"

namespace {

bool read_exact(unsigned char* dst, std::size_t n) {
  return n == 0 || std::fread(dst, 1, n, stdin) == n;
}

void send(const std::vector<unsigned char>& bytes) {
  std::fwrite(bytes.data(), 1, bytes.size(), stdout);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) return 2;
  const std::size_t dim = std::strtoul(argv[1], nullptr, 10);
  const std::uint64_t seed = std::strtoull(argv[2], nullptr, 10);
  std::size_t reply_dim = dim;
  long exit_after = -1;
  for (int i = 3; i + 1 < argc; i += 2) {
    if (std::strcmp(argv[i], "--reply-dim") == 0) reply_dim = std::strtoul(argv[i + 1], nullptr, 10);
    if (std::strcmp(argv[i], "--exit-after") == 0) exit_after = std::strtol(argv[i + 1], nullptr, 10);
  }
  rest::StubTextEncoder enc(reply_dim, seed);
  for (long served = 0;; ++served) {
    if (served == exit_after) return 0;
    unsigned char head[4];
    if (!read_exact(head, 4)) return 0;
    std::string caption(rest::le::get_u32(head), '\0');
    if (!read_exact(reinterpret_cast<unsigned char*>(caption.data()), caption.size())) return 0;
    try {
      const auto e = enc.encode(caption);
      std::vector<float> v(e.dim());
      for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<float>(e[k]);
      send(rest::stream_protocol::encode_embedding_response(v));
    } catch (const rest::Error& e) {
      send(rest::stream_protocol::encode_error_response(e.what()));
    }
  }
}
