#include "tacgrasp/websocket.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>
#include <poll.h>
#include <sys/socket.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <map>
#include <sstream>

#include "tacgrasp/error.hpp"

namespace tacgrasp::ws {

namespace {

constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

std::string base64(const unsigned char* data, std::size_t n) {
  std::string out(4 * ((n + 2) / 3), '\0');
  int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data, static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

// Appends whatever arrives within the timeout; false on close.
bool recv_some(const Socket& s, std::string& buf, double timeout_s) {
  pollfd p{s.fd(), POLLIN, 0};
  int n = ::poll(&p, 1, timeout_s < 0 ? -1 : static_cast<int>(timeout_s * 1000));
  if (n == 0) throw NetworkError("websocket: timed out");
  if (n < 0) throw NetworkError("websocket: poll failed");
  char tmp[8192];
  ssize_t r = ::recv(s.fd(), tmp, sizeof tmp, 0);
  if (r <= 0) return false;
  buf.append(tmp, static_cast<std::size_t>(r));
  return true;
}

std::map<std::string, std::string> parse_headers(const std::string& head, std::string& request_line) {
  std::istringstream in(head);
  std::getline(in, request_line);
  std::map<std::string, std::string> h;
  std::string line;
  while (std::getline(in, line)) {
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    h[lower(trim(line.substr(0, colon)))] = trim(line.substr(colon + 1));
  }
  return h;
}

}  // namespace

std::string accept_key(std::string_view client_key) {
  std::string s(client_key);
  s += kGuid;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(s.data()), s.size(), digest);
  return base64(digest, sizeof digest);
}

std::string encode(const Frame& f, std::optional<std::uint32_t> mask) {
  std::string out;
  out.push_back(static_cast<char>((f.fin ? 0x80 : 0x00) | static_cast<std::uint8_t>(f.opcode)));
  const std::uint64_t n = f.payload.size();
  const std::uint8_t mbit = mask ? 0x80 : 0x00;
  if (n <= 125) {
    out.push_back(static_cast<char>(mbit | n));
  } else if (n <= 0xffff) {
    out.push_back(static_cast<char>(mbit | 126));
    out.push_back(static_cast<char>((n >> 8) & 0xff));
    out.push_back(static_cast<char>(n & 0xff));
  } else {
    out.push_back(static_cast<char>(mbit | 127));
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  }
  if (!mask) return out + f.payload;
  unsigned char key[4] = {static_cast<unsigned char>(*mask >> 24), static_cast<unsigned char>(*mask >> 16),
                          static_cast<unsigned char>(*mask >> 8), static_cast<unsigned char>(*mask)};
  out.append(reinterpret_cast<char*>(key), 4);
  for (std::size_t i = 0; i < f.payload.size(); ++i) out.push_back(static_cast<char>(f.payload[i] ^ key[i % 4]));
  return out;
}

std::size_t decode(std::string_view buf, Frame& out, bool* masked) {
  if (buf.size() < 2) return 0;
  auto b = reinterpret_cast<const unsigned char*>(buf.data());
  out.fin = b[0] & 0x80;
  out.opcode = static_cast<Opcode>(b[0] & 0x0f);
  const bool m = b[1] & 0x80;
  std::uint64_t n = b[1] & 0x7f;
  std::size_t pos = 2;
  if (n == 126) {
    if (buf.size() < 4) return 0;
    n = (std::uint64_t(b[2]) << 8) | b[3];
    pos = 4;
  } else if (n == 127) {
    if (buf.size() < 10) return 0;
    n = 0;
    for (int i = 0; i < 8; ++i) n = (n << 8) | b[2 + i];
    pos = 10;
  }
  if (n > kMaxFrameBytes) throw NetworkError("websocket frame too large");
  const std::size_t need = pos + (m ? 4 : 0) + n;
  if (buf.size() < need) return 0;
  out.payload.assign(buf.data() + pos + (m ? 4 : 0), n);
  if (m) {
    const unsigned char* key = b + pos;
    for (std::size_t i = 0; i < n; ++i) out.payload[i] = static_cast<char>(out.payload[i] ^ key[i % 4]);
  }
  if (masked) *masked = m;
  return need;
}

void server_handshake(const Socket& s, std::string& leftover, double timeout_s) {
  std::string buf;
  std::size_t end;
  while ((end = buf.find("\r\n\r\n")) == std::string::npos) {
    if (buf.size() > 16384) throw NetworkError("websocket: handshake too large");
    if (!recv_some(s, buf, timeout_s)) throw NetworkError("websocket: closed during handshake");
  }
  std::string line;
  auto h = parse_headers(buf.substr(0, end), line);
  leftover = buf.substr(end + 4);
  auto key = h.find("sec-websocket-key");
  if (line.rfind("GET ", 0) != 0 || lower(h["upgrade"]) != "websocket" || key == h.end()) {
    send_all(s, "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
    throw NetworkError("websocket: not an upgrade request");
  }
  send_all(s, "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: " +
                  accept_key(key->second) + "\r\n\r\n");
}

std::optional<std::string> Reader::next_message(double timeout_s) {
  std::string message;
  bool in_message = false;
  for (;;) {
    Frame f;
    bool masked = false;
    std::size_t used = decode(buf_, f, &masked);
    if (used == 0) {
      if (!recv_some(s_, buf_, timeout_s)) return std::nullopt;
      continue;
    }
    buf_.erase(0, used);
    if (server_ && !masked) throw NetworkError("websocket: client frame not masked");
    std::optional<std::uint32_t> mask;
    if (!server_) mask = 0x5a5a5a5a;
    switch (f.opcode) {
      case Opcode::ping:
        send_all(s_, encode({true, Opcode::pong, f.payload}, mask));
        continue;
      case Opcode::pong:
        continue;
      case Opcode::close:
        try {
          send_all(s_, encode({true, Opcode::close, f.payload.substr(0, 2)}, mask));
        } catch (const Error&) {
        }
        return std::nullopt;
      case Opcode::text:
      case Opcode::binary:
        message = std::move(f.payload);
        in_message = true;
        break;
      case Opcode::continuation:
        if (!in_message) throw NetworkError("websocket: unexpected continuation frame");
        message += f.payload;
        break;
    }
    if (f.fin) return message;
  }
}

Client::Client(const std::string& host, std::uint16_t port, const std::string& path) {
  sock_ = connect_tcp(host, port, 2.0);
  const std::string key = "dGhlIHNhbXBsZSBub25jZQ==";
  send_all(sock_, "GET " + path + " HTTP/1.1\r\nHost: " + host + "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n" +
                      "Sec-WebSocket-Key: " + key + "\r\nSec-WebSocket-Version: 13\r\n\r\n");
  std::string buf;
  std::size_t end;
  while ((end = buf.find("\r\n\r\n")) == std::string::npos)
    if (!recv_some(sock_, buf, 2.0)) throw NetworkError("websocket: closed during handshake");
  std::string line;
  auto h = parse_headers(buf.substr(0, end), line);
  if (line.find(" 101") == std::string::npos || h["sec-websocket-accept"] != accept_key(key))
    throw NetworkError("websocket: handshake rejected: " + trim(line));
  reader_.emplace(sock_, false, buf.substr(end + 4));
}

void Client::send_text(std::string_view text) {
  mask_state_ = mask_state_ * 1664525u + 1013904223u;
  send_all(sock_, encode({true, Opcode::text, std::string(text)}, mask_state_));
}

std::optional<std::string> Client::receive(double timeout_s) { return reader_->next_message(timeout_s); }

void Client::close() {
  if (!sock_.valid()) return;
  try {
    send_all(sock_, encode({true, Opcode::close, std::string("\x03\xe8", 2)}, 0x01020304u));
  } catch (const Error&) {
  }
  reader_.reset();
  sock_.close();
}

}  // namespace tacgrasp::ws
