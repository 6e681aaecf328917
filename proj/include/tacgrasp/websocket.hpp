#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "tacgrasp/wire.hpp"

namespace tacgrasp::ws {

// Sec-WebSocket-Accept value for a client key.
std::string accept_key(std::string_view client_key);

enum class Opcode : std::uint8_t { continuation = 0x0, text = 0x1, binary = 0x2, close = 0x8, ping = 0x9, pong = 0xA };

struct Frame {
  bool fin = true;
  Opcode opcode = Opcode::text;
  std::string payload;
};

// Serializes one frame; clients must mask, servers must not.
std::string encode(const Frame& f, std::optional<std::uint32_t> mask = std::nullopt);
// Parses one frame from the front of buf; returns bytes consumed (0 = incomplete).
std::size_t decode(std::string_view buf, Frame& out, bool* masked = nullptr);

// Server side of the opening handshake: reads the HTTP upgrade request and answers it.
// Throws NetworkError on a malformed or non-WebSocket request.
void server_handshake(const Socket& s, std::string& leftover, double timeout_s = 2.0);

// Blocking frame reader over a socket; answers pings and reassembles fragments.
class Reader {
 public:
  Reader(const Socket& s, bool server_side, std::string leftover = {})
      : s_(s), server_(server_side), buf_(std::move(leftover)) {}
  // Next text/binary message; nullopt when the peer closed.
  std::optional<std::string> next_message(double timeout_s = -1);

 private:
  const Socket& s_;
  bool server_;
  std::string buf_;
};

// Minimal client used by tests and tools.
class Client {
 public:
  Client(const std::string& host, std::uint16_t port, const std::string& path = "/");
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;
  void send_text(std::string_view text);
  std::optional<std::string> receive(double timeout_s = 2.0);
  void close();

 private:
  Socket sock_;
  std::optional<Reader> reader_;
  std::uint32_t mask_state_ = 0x12345678;
};

}  // namespace tacgrasp::ws
