#pragma once

#include <array>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "tacgrasp/dataset.hpp"
#include "tacgrasp/learning.hpp"
#include "tacgrasp/signal.hpp"
#include "tacgrasp/tactile.hpp"
#include "tacgrasp/wire.hpp"

namespace tacgrasp {

struct NodeConfig {
  int sensor_id = 0;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 = any free port
  std::string model_path;
  double sample_rate = 60.0;  // Hz
  std::uint64_t seed = 0;
};

void validate(const NodeConfig& cfg);

// Marker-noise key for the sample taken of contact `version`; shared by every array flavour so
// in-process and networked runs see identical observations.
std::uint64_t noise_key(std::uint64_t seed, std::uint64_t version);

struct NodeSample {
  std::uint64_t seq = 0;
  double t = 0;        // s since node start, strictly increasing
  double sim_t = 0;    // plant time of the contact
  std::uint64_t version = 0;
  std::uint64_t noise_seed = 0;
  PoseForce pose_force;
  std::vector<double> features;
};

// What a node computes for one contact: features -> model prediction.
NodeSample sense(const Sensor& sensor, const Regressor& model, const ContactState& c, std::uint64_t seed,
                 std::uint64_t version);
// Similarity of the sample's marker image to the sensor's no-contact image.
double sample_ssim(const Sensor& sensor, const NodeSample& s, const SsimConfig& cfg = {});

// One simulated fingertip with its model. A sampling thread refreshes an immutable latest
// snapshot; handle() answers wire requests from it and never blocks sampling.
class SensorNode {
 public:
  // Throws LoadError when the model does not match the sensor's feature layout.
  SensorNode(const NodeConfig& cfg, Sensor sensor, Regressor model);
  ~SensorNode();
  SensorNode(const SensorNode&) = delete;
  SensorNode& operator=(const SensorNode&) = delete;

  void start();
  void stop();
  bool running() const { return running_; }

  // Request payload (JSON) -> response payload (JSON); errors become {"error": ...}.
  std::string handle(std::string_view request);
  // Lockstep input: the contact for `version`, observed with marker noise keyed by (noise_seed, version).
  void set_contact(std::uint64_t version, double sim_t, const ContactState& c, std::uint64_t noise_seed);
  std::shared_ptr<const NodeSample> latest() const;
  std::uint64_t samples_taken() const { return samples_.load(); }

  const NodeConfig& config() const { return cfg_; }
  const Sensor& sensor() const { return sensor_; }

 private:
  void sample_once();
  void loop();
  double now() const;
  std::shared_ptr<const NodeSample> wait_for(std::uint64_t version, std::uint64_t noise_seed, double timeout_s);

  NodeConfig cfg_;
  Sensor sensor_;
  Regressor model_;
  std::chrono::steady_clock::time_point epoch_;

  mutable std::mutex mu_;
  std::condition_variable contact_cv_;  // wakes the sampler
  std::condition_variable sample_cv_;   // wakes waiting handlers
  ContactState contact_;
  double contact_t_ = 0;
  std::uint64_t contact_version_ = 0;
  std::uint64_t contact_seed_ = 0;
  std::shared_ptr<const NodeSample> latest_;
  std::uint64_t seq_ = 0;
  double last_t_ = -1;

  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> samples_{0};
  std::thread thread_;
};

// Serves a node over the length-prefixed TCP protocol, one thread per connection.
class NodeServer {
 public:
  explicit NodeServer(SensorNode& node);
  ~NodeServer();
  NodeServer(const NodeServer&) = delete;
  NodeServer& operator=(const NodeServer&) = delete;

  // Binds and starts accepting. Throws NetworkError when the port is unavailable.
  void start();
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  void accept_loop();
  void serve(int fd);

  SensorNode& node_;
  Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<int> clients_;
  std::vector<std::thread> workers_;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

struct SensorEntry {
  int sensor_id = -1;
  bool present = false;
  std::string error;  // why the node was excluded
  std::uint64_t seq = 0;
  double t = 0;
  double age = 0;  // s between sampling and answering
  std::uint64_t version = 0;
  PoseForce pose_force;
  std::optional<double> ssim;
};

struct AggregateSnapshot {
  std::vector<SensorEntry> sensors;  // ordered by sensor id
  double fx_sum = 0, fy_sum = 0, fz_sum = 0;
  double staleness = 0;  // s, oldest present reading
  int present = 0;

  double ssim_mean() const;
};

// Recomputes the sums from the present entries; throws AggregationError when none are present.
void merge(AggregateSnapshot& snap);

struct PollOptions {
  bool with_ssim = false;
  // Lockstep: wait for the sample of exactly this contact version/noise seed.
  std::optional<std::uint64_t> version;
  std::uint64_t noise_seed = 0;
};

// Polls all nodes concurrently over persistent connections (multiplexed, one thread).
class Aggregator {
 public:
  explicit Aggregator(std::vector<Endpoint> nodes, double deadline_s = 0.5 / 60.0);

  AggregateSnapshot poll(const PollOptions& opt = {});
  // Lockstep mode: pushes each finger's contact; returns false if any node failed to acknowledge.
  bool publish(std::uint64_t version, double sim_t, const std::vector<ContactState>& contacts,
               std::uint64_t noise_seed);
  std::size_t size() const { return links_.size(); }
  void set_deadline(double s) { deadline_ = s; }

 private:
  struct Link {
    Endpoint ep;
    Socket sock;
    FrameDecoder dec;
  };
  // Sends the requests for every node and gathers as many responses; failures leave nullopt.
  std::vector<std::optional<std::vector<std::string>>> exchange(const std::vector<std::vector<std::string>>& reqs,
                                                                std::vector<std::string>& errors);

  std::vector<Link> links_;
  double deadline_;
};

// The rig's view of the fingertip array: push contacts, read one aggregate per control step.
class SensorArray {
 public:
  virtual ~SensorArray() = default;
  // Contacts for step `version` of a run whose marker noise is keyed by `noise_seed`.
  virtual void publish(std::uint64_t version, double sim_t, const std::array<ContactState, kNumSensors>& c,
                       std::uint64_t noise_seed) = 0;
  // Snapshot for exactly the last published contacts. Throws AggregationError if a node drops out.
  virtual AggregateSnapshot read(bool with_ssim) = 0;
};

// Computes readings directly in the caller's thread.
class LocalArray : public SensorArray {
 public:
  LocalArray(std::vector<Sensor> sensors, std::vector<Regressor> models);
  void publish(std::uint64_t version, double sim_t, const std::array<ContactState, kNumSensors>& c,
               std::uint64_t noise_seed) override;
  AggregateSnapshot read(bool with_ssim) override;

 private:
  std::vector<Sensor> sensors_;
  std::vector<Regressor> models_;
  std::array<ContactState, kNumSensors> contact_{};
  double sim_t_ = 0;
  std::uint64_t version_ = 0, seed_ = 0;
};

// Running nodes (with sampling threads) called in-process: no sockets involved.
class LoopbackArray : public SensorArray {
 public:
  explicit LoopbackArray(std::vector<SensorNode*> nodes) : nodes_(std::move(nodes)) {}
  void publish(std::uint64_t version, double sim_t, const std::array<ContactState, kNumSensors>& c,
               std::uint64_t noise_seed) override;
  AggregateSnapshot read(bool with_ssim) override;

 private:
  std::vector<SensorNode*> nodes_;
  std::uint64_t version_ = 0, seed_ = 0;
};

// Nodes reached through an Aggregator over TCP.
class NetworkArray : public SensorArray {
 public:
  NetworkArray(std::vector<Endpoint> nodes, double deadline_s = 1.0);
  void publish(std::uint64_t version, double sim_t, const std::array<ContactState, kNumSensors>& c,
               std::uint64_t noise_seed) override;
  AggregateSnapshot read(bool with_ssim) override;

 private:
  Aggregator agg_;
  std::uint64_t version_ = 0, seed_ = 0;
};

// Five nodes + TCP servers on consecutive ports (base_port 0 = ephemeral ports).
class ArrayDeployment {
 public:
  ArrayDeployment(std::vector<Sensor> sensors, std::vector<Regressor> models, std::uint64_t seed,
                  std::uint16_t base_port = 0, double sample_rate = 60.0, const std::string& host = "127.0.0.1");
  ~ArrayDeployment();
  std::vector<Endpoint> endpoints() const;
  SensorNode& node(int i) { return *nodes_.at(i); }
  NodeServer& server(int i) { return *servers_.at(i); }
  std::vector<SensorNode*> nodes();
  void stop();

 private:
  std::string host_;
  std::vector<std::unique_ptr<SensorNode>> nodes_;
  std::vector<std::unique_ptr<NodeServer>> servers_;
};

}  // namespace tacgrasp
