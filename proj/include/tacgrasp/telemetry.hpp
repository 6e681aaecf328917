#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "tacgrasp/array.hpp"
#include "tacgrasp/control.hpp"
#include "tacgrasp/wire.hpp"

namespace tacgrasp {

// Plant/controller state shown next to the sensor readings.
struct PlantDigest {
  double u = 0;
  double theta_x = 0, theta_y = 0;  // deg
  double gamma = 0;                 // deg
  double rice_mass = 0;             // kg
  double fz_true = 0;               // N
  bool crush = false;
  bool dropped = false;
  double slip = 0;                  // mm
  Vec3 position{0, 0, 0};           // mm, follower displacement
  std::string phase;
};

std::string telemetry_json(double t, const AggregateSnapshot& snap, const PlantDigest& plant);

struct ApplyForce {
  Vec3 f{0, 0, 0};
};
struct AddMass {
  double kg = 0;
  double duration = 0;  // s
};
struct StartPour {
  double gamma = 120;  // deg
  double rate = 10;    // deg/s
};
using Command = std::variant<ApplyForce, AddMass, StartPour>;

// Bounds follow the operator input limits: |Fx|,|Fy| <= 20 N, |Fz| <= 60 N.
// Throws ParseError on malformed JSON, InvalidArgument on out-of-range values.
Command parse_command(const std::string& json_text);
std::string format_command(const Command& c);

// WebSocket endpoint: pushes the latest snapshot to every subscriber (at most
// max_rate per second, intermediate frames dropped) and receives commands.
class TelemetryServer {
 public:
  TelemetryServer(std::string host = "127.0.0.1", std::uint16_t port = 0, double max_rate = 60.0);
  ~TelemetryServer();
  TelemetryServer(const TelemetryServer&) = delete;
  TelemetryServer& operator=(const TelemetryServer&) = delete;

  void start();
  void stop();
  std::uint16_t port() const { return port_; }

  // Replaces the latest payload; never blocks on subscribers.
  void publish(std::string payload);
  std::size_t subscribers() const;
  std::uint64_t published() const { return generation_; }

  // Commands from clients, oldest first.
  std::vector<Command> take_commands();

 private:
  struct Subscriber;
  void accept_loop();
  void reader(std::shared_ptr<Subscriber> sub, std::string leftover);
  void writer(std::shared_ptr<Subscriber> sub);

  std::string host_;
  std::uint16_t port_;
  double max_rate_;
  Socket listener_;
  std::atomic<bool> running_{false};
  std::thread acceptor_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::shared_ptr<const std::string> latest_;
  std::atomic<std::uint64_t> generation_{0};
  std::vector<std::shared_ptr<Subscriber>> subs_;
  std::vector<std::thread> threads_;
  std::vector<Command> commands_;
};

}  // namespace tacgrasp
