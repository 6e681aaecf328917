#include "tacgrasp/telemetry.hpp"

#include <poll.h>
#include <sys/socket.h>

#include <algorithm>
#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

#include "tacgrasp/error.hpp"
#include "tacgrasp/websocket.hpp"

namespace tacgrasp {

using json = nlohmann::json;

std::string telemetry_json(double t, const AggregateSnapshot& snap, const PlantDigest& p) {
  json sensors = json::array();
  for (const auto& e : snap.sensors) {
    json s{{"sensor_id", e.sensor_id}, {"present", e.present}};
    if (e.present) {
      const auto& f = e.pose_force;
      s["seq"] = e.seq;
      s["t"] = e.t;
      s["pose_force"] = {f.z, f.alpha, f.beta, f.fx, f.fy, f.fz};
      if (e.ssim) s["ssim"] = *e.ssim;
    } else {
      s["error"] = e.error;
    }
    sensors.push_back(std::move(s));
  }
  json plant{{"u", p.u},
             {"theta_x", p.theta_x},
             {"theta_y", p.theta_y},
             {"gamma", p.gamma},
             {"rice_mass", p.rice_mass},
             {"fz_true", p.fz_true},
             {"crush", p.crush},
             {"dropped", p.dropped},
             {"slip", p.slip},
             {"position", {p.position[0], p.position[1], p.position[2]}},
             {"phase", p.phase}};
  json out{{"t", t},
           {"sensors", std::move(sensors)},
           {"sums", {{"fx", snap.fx_sum}, {"fy", snap.fy_sum}, {"fz", snap.fz_sum}, {"staleness", snap.staleness}}},
           {"plant", std::move(plant)}};
  return out.dump();
}

Command parse_command(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("command: ") + e.what(), 0, -1);
  }
  if (!j.is_object() || !j.contains("op") || !j["op"].is_string()) throw ParseError("command: missing op", 0, -1);
  const auto op = j["op"].get<std::string>();
  try {
    if (op == "APPLY_FORCE") {
      auto f = j.at("f").get<std::vector<double>>();
      if (f.size() != 3) throw InvalidArgument("APPLY_FORCE needs f = [fx, fy, fz]");
      const double lim[3] = {20, 20, 60};
      for (int i = 0; i < 3; ++i)
        if (!std::isfinite(f[i]) || std::abs(f[i]) > lim[i]) throw InvalidArgument("APPLY_FORCE component out of range");
      return ApplyForce{{f[0], f[1], f[2]}};
    }
    if (op == "ADD_MASS") {
      AddMass m{j.at("kg").get<double>(), j.value("duration", 1.5)};
      if (!(m.kg >= 0 && m.kg <= 0.3) || !(m.duration >= 0)) throw InvalidArgument("ADD_MASS out of range");
      return m;
    }
    if (op == "START_POUR") {
      StartPour p{j.value("gamma", 120.0), j.value("rate", 10.0)};
      if (!(p.rate > 0) || !(p.gamma > 0 && p.gamma <= 180)) throw InvalidArgument("START_POUR out of range");
      return p;
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("command ") + op + ": " + e.what(), 0, -1);
  }
  throw InvalidArgument("unknown command op: " + op);
}

std::string format_command(const Command& c) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ApplyForce>)
          return json{{"op", "APPLY_FORCE"}, {"f", {v.f[0], v.f[1], v.f[2]}}}.dump();
        else if constexpr (std::is_same_v<T, AddMass>)
          return json{{"op", "ADD_MASS"}, {"kg", v.kg}, {"duration", v.duration}}.dump();
        else
          return json{{"op", "START_POUR"}, {"gamma", v.gamma}, {"rate", v.rate}}.dump();
      },
      c);
}

struct TelemetryServer::Subscriber {
  Socket sock;
  std::mutex write_mu;
  std::atomic<bool> alive{true};
  std::uint64_t sent = 0;
};

TelemetryServer::TelemetryServer(std::string host, std::uint16_t port, double max_rate)
    : host_(std::move(host)), port_(port), max_rate_(max_rate) {
  if (!(max_rate_ > 0)) throw InvalidArgument("telemetry rate must be > 0");
}

TelemetryServer::~TelemetryServer() { stop(); }

void TelemetryServer::start() {
  if (running_) return;
  listener_ = listen_tcp(host_, port_);
  port_ = local_port(listener_);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void TelemetryServer::accept_loop() {
  while (running_) {
    pollfd p{listener_.fd(), POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0 || !running_) continue;
    int fd = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    auto sub = std::make_shared<Subscriber>();
    sub->sock = Socket(fd);
    std::string leftover;
    try {
      ws::server_handshake(sub->sock, leftover);
    } catch (const Error&) {
      continue;
    }
    std::lock_guard<std::mutex> lk(mu_);
    subs_.push_back(sub);
    threads_.emplace_back([this, sub, leftover] { reader(sub, leftover); });
    threads_.emplace_back([this, sub] { writer(sub); });
  }
}

void TelemetryServer::reader(std::shared_ptr<Subscriber> sub, std::string leftover) {
  ws::Reader rd(sub->sock, true, std::move(leftover));
  try {
    while (running_ && sub->alive) {
      auto msg = rd.next_message();
      if (!msg) break;
      try {
        Command c = parse_command(*msg);
        std::lock_guard<std::mutex> lk(mu_);
        commands_.push_back(c);
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lk(sub->write_mu);
        send_all(sub->sock, ws::encode({true, ws::Opcode::text, json{{"error", e.what()}}.dump()}));
      }
    }
  } catch (const Error&) {
  }
  sub->alive = false;
  sub->sock.shutdown();
  cv_.notify_all();
}

void TelemetryServer::writer(std::shared_ptr<Subscriber> sub) {
  using Clock = std::chrono::steady_clock;
  const auto gap = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / max_rate_));
  auto next_allowed = Clock::now();
  while (running_ && sub->alive) {
    std::shared_ptr<const std::string> payload;
    {
      std::unique_lock<std::mutex> lk(mu_);
      cv_.wait(lk, [&] { return !running_ || !sub->alive || generation_ > sub->sent; });
      if (!running_ || !sub->alive) break;
      payload = latest_;
      sub->sent = generation_;
    }
    try {
      std::lock_guard<std::mutex> lk(sub->write_mu);
      send_all(sub->sock, ws::encode({true, ws::Opcode::text, *payload}));
    } catch (const Error&) {
      sub->alive = false;
      break;
    }
    next_allowed += gap;
    auto now = Clock::now();
    if (next_allowed < now) next_allowed = now;
    std::this_thread::sleep_until(next_allowed);
  }
  sub->alive = false;
  sub->sock.shutdown();
  std::lock_guard<std::mutex> lk(mu_);
  subs_.erase(std::remove(subs_.begin(), subs_.end(), sub), subs_.end());
}

void TelemetryServer::publish(std::string payload) {
  {
    std::lock_guard<std::mutex> lk(mu_);
    latest_ = std::make_shared<const std::string>(std::move(payload));
    ++generation_;
  }
  cv_.notify_all();
}

std::size_t TelemetryServer::subscribers() const {
  std::lock_guard<std::mutex> lk(mu_);
  return static_cast<std::size_t>(
      std::count_if(subs_.begin(), subs_.end(), [](const auto& s) { return s->alive.load(); }));
}

std::vector<Command> TelemetryServer::take_commands() {
  std::lock_guard<std::mutex> lk(mu_);
  std::vector<Command> out;
  out.swap(commands_);
  return out;
}

void TelemetryServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  listener_.close();
  std::vector<std::thread> threads;
  {
    std::lock_guard<std::mutex> lk(mu_);
    for (auto& s : subs_) s->sock.shutdown();
    threads.swap(threads_);
  }
  cv_.notify_all();
  for (auto& t : threads) t.join();
  std::lock_guard<std::mutex> lk(mu_);
  subs_.clear();
}

}  // namespace tacgrasp
