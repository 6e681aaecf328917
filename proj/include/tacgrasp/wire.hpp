#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace tacgrasp {

inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;

// 4-byte big-endian payload length followed by the payload bytes.
std::string encode_frame(std::string_view payload);

// Incremental decoder for a byte stream of frames.
class FrameDecoder {
 public:
  void feed(std::string_view bytes);
  // Next complete payload, if any. Throws NetworkError on an oversized length prefix.
  std::optional<std::string> next();
  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

// Owning POSIX socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() {
    int f = fd_;
    fd_ = -1;
    return f;
  }
  void close();
  // Wakes a thread blocked in accept/recv on this socket.
  void shutdown();

 private:
  int fd_ = -1;
};

// Listening socket; port 0 picks a free port. Throws NetworkError (e.g. port in use).
Socket listen_tcp(const std::string& host, std::uint16_t port, int backlog = 16);
std::uint16_t local_port(const Socket& s);
Socket connect_tcp(const std::string& host, std::uint16_t port, double timeout_s = 1.0);

void send_all(const Socket& s, std::string_view bytes);
// Blocking read of one frame; nullopt on orderly close. Throws NetworkError on errors/timeout.
std::optional<std::string> read_frame(const Socket& s, FrameDecoder& dec, double timeout_s = -1);

// One request/response on a connected socket.
std::string request(const Socket& s, FrameDecoder& dec, std::string_view payload, double timeout_s = 1.0);

}  // namespace tacgrasp
