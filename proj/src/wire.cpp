#include "tacgrasp/wire.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "tacgrasp/error.hpp"

namespace tacgrasp {

namespace {

std::string sys_error(const std::string& what) { return what + ": " + std::strerror(errno); }

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{}, *res = nullptr;
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) throw NetworkError("cannot resolve host " + host);
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

// Remaining milliseconds until deadline for poll(); -1 blocks forever.
int remaining_ms(std::chrono::steady_clock::time_point deadline, bool forever) {
  if (forever) return -1;
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
  return left < 0 ? 0 : static_cast<int>(left) + 1;
}

}  // namespace

std::string encode_frame(std::string_view payload) {
  if (payload.size() > kMaxFrameBytes) throw NetworkError("frame payload too large");
  auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out.append(payload);
  return out;
}

void FrameDecoder::feed(std::string_view bytes) {
  if (pos_ > 0 && pos_ == buf_.size()) {
    buf_.clear();
    pos_ = 0;
  }
  buf_.append(bytes);
}

std::optional<std::string> FrameDecoder::next() {
  if (buf_.size() - pos_ < 4) return std::nullopt;
  auto b = reinterpret_cast<const unsigned char*>(buf_.data() + pos_);
  std::uint32_t n = (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
  if (n > kMaxFrameBytes) throw NetworkError("frame length prefix exceeds limit");
  if (buf_.size() - pos_ - 4 < n) return std::nullopt;
  std::string out = buf_.substr(pos_ + 4, n);
  pos_ += 4 + n;
  if (pos_ > 4096 && pos_ * 2 > buf_.size()) {
    buf_.erase(0, pos_);
    pos_ = 0;
  }
  return out;
}

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.release();
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Socket listen_tcp(const std::string& host, std::uint16_t port, int backlog) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw NetworkError(sys_error("socket"));
  int one = 1;
  setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(host, port);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw NetworkError(sys_error("bind " + host + ":" + std::to_string(port)));
  if (::listen(s.fd(), backlog) != 0) throw NetworkError(sys_error("listen"));
  return s;
}

std::uint16_t local_port(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) throw NetworkError(sys_error("getsockname"));
  return ntohs(addr.sin_port);
}

Socket connect_tcp(const std::string& host, std::uint16_t port, double timeout_s) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw NetworkError(sys_error("socket"));
  sockaddr_in addr = resolve(host, port);
  int flags = fcntl(s.fd(), F_GETFL, 0);
  fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  if (rc != 0 && errno != EINPROGRESS) throw NetworkError(sys_error("connect " + host + ":" + std::to_string(port)));
  if (rc != 0) {
    pollfd p{s.fd(), POLLOUT, 0};
    int n = ::poll(&p, 1, static_cast<int>(timeout_s * 1000));
    if (n <= 0) throw NetworkError("connect " + host + ":" + std::to_string(port) + ": timed out");
    int err = 0;
    socklen_t len = sizeof err;
    getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      errno = err;
      throw NetworkError(sys_error("connect " + host + ":" + std::to_string(port)));
    }
  }
  fcntl(s.fd(), F_SETFL, flags);
  int one = 1;
  setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

void send_all(const Socket& s, std::string_view bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    ssize_t n = ::send(s.fd(), bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw NetworkError(sys_error("send"));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> read_frame(const Socket& s, FrameDecoder& dec, double timeout_s) {
  const bool forever = timeout_s < 0;
  auto deadline = std::chrono::steady_clock::now() + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                          std::chrono::duration<double>(forever ? 0.0 : timeout_s));
  char buf[8192];
  for (;;) {
    if (auto f = dec.next()) return f;
    pollfd p{s.fd(), POLLIN, 0};
    int n = ::poll(&p, 1, remaining_ms(deadline, forever));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw NetworkError(sys_error("poll"));
    }
    if (n == 0) throw NetworkError("timed out waiting for response");
    ssize_t r = ::recv(s.fd(), buf, sizeof buf, 0);
    if (r == 0) return std::nullopt;
    if (r < 0) {
      if (errno == EINTR) continue;
      throw NetworkError(sys_error("recv"));
    }
    dec.feed(std::string_view(buf, static_cast<std::size_t>(r)));
  }
}

std::string request(const Socket& s, FrameDecoder& dec, std::string_view payload, double timeout_s) {
  send_all(s, encode_frame(payload));
  auto r = read_frame(s, dec, timeout_s);
  if (!r) throw NetworkError("connection closed by peer");
  return *r;
}

}  // namespace tacgrasp
