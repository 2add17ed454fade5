#include "rest/loop/stream_encoder.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>

#include <sys/wait.h>
#include <unistd.h>

#include "rest/core/blob.hpp"
#include "rest/core/error.hpp"

namespace rest {

namespace stream_protocol {

std::vector<unsigned char> encode_request(std::string_view caption) {
  std::vector<unsigned char> out;
  le::put_u32(out, static_cast<std::uint32_t>(caption.size()));
  out.insert(out.end(), caption.begin(), caption.end());
  return out;
}

std::vector<unsigned char> encode_embedding_response(const std::vector<float>& values) {
  std::vector<unsigned char> out{0};
  le::put_u32(out, static_cast<std::uint32_t>(4 + 4 * values.size()));
  le::put_u32(out, static_cast<std::uint32_t>(values.size()));
  for (float v : values) le::put_f32(out, v);
  return out;
}

std::vector<unsigned char> encode_error_response(std::string_view message, std::uint8_t status) {
  std::vector<unsigned char> out{status == 0 ? std::uint8_t{1} : status};
  le::put_u32(out, static_cast<std::uint32_t>(message.size()));
  out.insert(out.end(), message.begin(), message.end());
  return out;
}

}  // namespace stream_protocol

StreamTextEncoder::StreamTextEncoder(int read_fd, int write_fd, std::size_t dim)
    : read_fd_(read_fd), write_fd_(write_fd), dim_(dim) {}

StreamTextEncoder StreamTextEncoder::spawn(const std::string& command, std::size_t dim) {
  int to_child[2], from_child[2];
  if (pipe(to_child) != 0) throw Error(ErrorCode::kProvider, "pipe failed");
  if (pipe(from_child) != 0) {
    close(to_child[0]);
    close(to_child[1]);
    throw Error(ErrorCode::kProvider, "pipe failed");
  }
  const pid_t pid = fork();
  if (pid < 0) throw Error(ErrorCode::kProvider, "fork failed");
  if (pid == 0) {
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(to_child[0]);
  close(from_child[1]);
  StreamTextEncoder enc(from_child[0], to_child[1], dim);
  enc.child_pid_ = pid;
  return enc;
}

StreamTextEncoder::StreamTextEncoder(StreamTextEncoder&& o) noexcept
    : read_fd_(o.read_fd_), write_fd_(o.write_fd_), child_pid_(o.child_pid_), dim_(o.dim_),
      requests_(o.requests_) {
  o.read_fd_ = o.write_fd_ = o.child_pid_ = -1;
}

StreamTextEncoder::~StreamTextEncoder() {
  if (child_pid_ < 0) return;
  // Closing the request pipe is the child's signal to exit.
  if (write_fd_ >= 0) close(write_fd_);
  if (read_fd_ >= 0) close(read_fd_);
  int status = 0;
  waitpid(child_pid_, &status, 0);
}

void StreamTextEncoder::read_exact(unsigned char* dst, std::size_t n) {
  while (n > 0) {
    const ssize_t got = ::read(read_fd_, dst, n);
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) throw Error(ErrorCode::kProvider, "text provider stream closed");
    dst += got;
    n -= static_cast<std::size_t>(got);
  }
}

void StreamTextEncoder::write_all(const unsigned char* src, std::size_t n) {
  while (n > 0) {
    const ssize_t put = ::write(write_fd_, src, n);
    if (put < 0 && errno == EINTR) continue;
    if (put <= 0) throw Error(ErrorCode::kProvider, "text provider stream closed");
    src += put;
    n -= static_cast<std::size_t>(put);
  }
}

UnitEmbedding StreamTextEncoder::encode(const std::string& caption) {
  static const bool ignore_sigpipe = [] {
    std::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)ignore_sigpipe;
  ++requests_;
  const auto req = stream_protocol::encode_request(caption);
  write_all(req.data(), req.size());
  unsigned char head[5];
  read_exact(head, 5);
  const std::uint32_t len = le::get_u32(head + 1);
  std::vector<unsigned char> payload(len);
  if (len) read_exact(payload.data(), len);
  if (head[0] != 0) {
    throw Error(ErrorCode::kProvider, "text provider error: " + std::string(payload.begin(), payload.end()));
  }
  if (len < 4) throw Error(ErrorCode::kProvider, "text provider: short payload");
  const std::uint32_t dim = le::get_u32(payload.data());
  if (len != 4 + 4 * static_cast<std::size_t>(dim)) {
    throw Error(ErrorCode::kProvider, "text provider: payload length disagrees with dim");
  }
  if (dim != dim_) {
    throw Error(ErrorCode::kProvider, "text provider returned dim " + std::to_string(dim) +
                                          ", expected " + std::to_string(dim_));
  }
  std::vector<double> v(dim);
  for (std::uint32_t i = 0; i < dim; ++i) v[i] = le::get_f32(payload.data() + 4 + 4 * i);
  try {
    return UnitEmbedding::normalize(v);
  } catch (const Error& e) {
    throw Error(ErrorCode::kProvider, std::string("text provider: ") + e.what());
  }
}

}  // namespace rest
