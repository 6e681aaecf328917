#include "tacgrasp/array.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

#include "tacgrasp/error.hpp"

namespace tacgrasp {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

json pose_json(const PoseForce& p) { return json::array({p.z, p.alpha, p.beta, p.fx, p.fy, p.fz}); }

PoseForce pose_from_json(const json& j) {
  auto v = j.get<std::vector<double>>();
  if (v.size() != 6) throw NetworkError("pose_force must have 6 entries");
  return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

json error_json(const std::string& what) { return json{{"error", what}}; }

// Fills an entry from a GET_PREDICTION/GET_SSIM response; returns false on an error response.
bool read_entry(const std::string& payload, SensorEntry& e) {
  json j = json::parse(payload);
  if (j.contains("error")) {
    e.error = j["error"].get<std::string>();
    return false;
  }
  e.sensor_id = j.at("sensor_id").get<int>();
  e.seq = j.at("seq").get<std::uint64_t>();
  e.t = j.at("t").get<double>();
  e.age = j.value("age", 0.0);
  e.version = j.value("version", std::uint64_t{0});
  if (j.contains("pose_force")) e.pose_force = pose_from_json(j["pose_force"]);
  if (j.contains("ssim")) e.ssim = j["ssim"].get<double>();
  return true;
}

double seconds(Clock::duration d) { return std::chrono::duration<double>(d).count(); }

}  // namespace

void validate(const NodeConfig& cfg) {
  if (cfg.sensor_id < 0 || cfg.sensor_id >= kNumSensors) throw InvalidArgument("sensor_id must be in 0..4");
  if (!(cfg.sample_rate > 0)) throw InvalidArgument("sample_rate must be > 0");
}

std::uint64_t noise_key(std::uint64_t seed, std::uint64_t version) { return mix(mix(seed) ^ version); }

NodeSample sense(const Sensor& sensor, const Regressor& model, const ContactState& c, std::uint64_t seed,
                 std::uint64_t version) {
  NodeSample s;
  s.version = version;
  s.features = features(sensor.simulate(c, noise_key(seed, version)).frame);
  s.pose_force = model.predict(s.features);
  return s;
}

double sample_ssim(const Sensor& sensor, const NodeSample& s, const SsimConfig& cfg) {
  MarkerFrame f = frame_from_features(s.features, sensor.sensor_id(), s.t);
  return ssim(rasterize(f, sensor.geometry()), sensor.reference_image(), cfg);
}

double AggregateSnapshot::ssim_mean() const {
  double sum = 0;
  int n = 0;
  for (const auto& e : sensors)
    if (e.present && e.ssim) {
      sum += *e.ssim;
      ++n;
    }
  if (n == 0) throw AggregationError("no SSIM readings in snapshot");
  return sum / n;
}

void merge(AggregateSnapshot& snap) {
  std::sort(snap.sensors.begin(), snap.sensors.end(),
            [](const SensorEntry& a, const SensorEntry& b) { return a.sensor_id < b.sensor_id; });
  snap.fx_sum = snap.fy_sum = snap.fz_sum = 0;
  snap.staleness = 0;
  snap.present = 0;
  for (const auto& e : snap.sensors) {
    if (!e.present) continue;
    snap.fx_sum += e.pose_force.fx;
    snap.fy_sum += e.pose_force.fy;
    snap.fz_sum += e.pose_force.fz;
    snap.staleness = std::max(snap.staleness, e.age);
    ++snap.present;
  }
  if (snap.present == 0) throw AggregationError("no sensor node reachable");
}

// ---- SensorNode ----

SensorNode::SensorNode(const NodeConfig& cfg, Sensor sensor, Regressor model)
    : cfg_(cfg), sensor_(std::move(sensor)), model_(std::move(model)), epoch_(Clock::now()) {
  validate(cfg_);
  contact_seed_ = cfg_.seed;
  const auto& sizes = model_.layer_sizes();
  const int n_features = 2 * static_cast<int>(sensor_.geometry().pin_layout.size());
  if (sizes.empty() || sizes.front() != n_features || sizes.back() != 6)
    throw LoadError("model does not match sensor " + std::to_string(cfg_.sensor_id) + ": expects " +
                    std::to_string(n_features) + " features and 6 outputs");
  sample_once();
}

SensorNode::~SensorNode() { stop(); }

double SensorNode::now() const { return seconds(Clock::now() - epoch_); }

void SensorNode::sample_once() {
  ContactState c;
  double sim_t;
  std::uint64_t version, seed;
  {
    std::lock_guard<std::mutex> lk(mu_);
    c = contact_;
    sim_t = contact_t_;
    version = contact_version_;
    seed = contact_seed_;
  }
  auto s = std::make_shared<NodeSample>(sense(sensor_, model_, c, seed, version));
  s->sim_t = sim_t;
  s->noise_seed = seed;
  {
    std::lock_guard<std::mutex> lk(mu_);
    double t = now();
    if (t <= last_t_) t = std::nextafter(last_t_, INFINITY);
    last_t_ = t;
    s->t = t;
    s->seq = ++seq_;
    latest_ = std::move(s);
  }
  ++samples_;
  sample_cv_.notify_all();
}

void SensorNode::loop() {
  const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / cfg_.sample_rate));
  auto next = Clock::now() + period;
  std::uint64_t seen = 0, seen_seed = contact_seed_;
  while (running_) {
    {
      std::unique_lock<std::mutex> lk(mu_);
      // New contacts are sampled at once; otherwise resample at the configured rate.
      contact_cv_.wait_until(lk, next,
                             [&] { return !running_ || contact_version_ != seen || contact_seed_ != seen_seed; });
      seen = contact_version_;
      seen_seed = contact_seed_;
    }
    if (!running_) break;
    sample_once();
    auto now = Clock::now();
    if (now >= next) next += period * (1 + (now - next) / period);
  }
}

void SensorNode::start() {
  if (running_) return;
  running_ = true;
  thread_ = std::thread([this] { loop(); });
}

void SensorNode::stop() {
  if (!running_.exchange(false)) return;
  contact_cv_.notify_all();
  sample_cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void SensorNode::set_contact(std::uint64_t version, double sim_t, const ContactState& c, std::uint64_t noise_seed) {
  {
    std::lock_guard<std::mutex> lk(mu_);
    contact_ = c;
    contact_t_ = sim_t;
    contact_version_ = version;
    contact_seed_ = noise_seed;
  }
  contact_cv_.notify_all();
}

std::shared_ptr<const NodeSample> SensorNode::latest() const {
  std::lock_guard<std::mutex> lk(mu_);
  return latest_;
}

std::shared_ptr<const NodeSample> SensorNode::wait_for(std::uint64_t version, std::uint64_t noise_seed,
                                                       double timeout_s) {
  std::unique_lock<std::mutex> lk(mu_);
  auto match = [&] { return latest_->version == version && latest_->noise_seed == noise_seed; };
  auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(timeout_s));
  sample_cv_.wait_until(lk, deadline, [&] { return match() || !running_; });
  return match() ? latest_ : nullptr;
}

std::string SensorNode::handle(std::string_view request) {
  json req;
  try {
    req = json::parse(request);
  } catch (const json::exception& e) {
    return error_json(std::string("malformed request: ") + e.what()).dump();
  }
  if (!req.is_object() || !req.contains("op") || !req["op"].is_string()) return error_json("missing op").dump();
  const std::string op = req["op"].get<std::string>();
  try {
    if (op == "SET_CONTACT") {
      auto v = req.at("contact").get<std::vector<double>>();
      if (v.size() != 5) return error_json("contact must be [z, alpha, beta, shear_x, shear_y]").dump();
      ContactState c{v[0], v[1], v[2], v[3], v[4]};
      auto version = req.at("version").get<std::uint64_t>();
      set_contact(version, req.value("t", 0.0), c, req.value("seed", cfg_.seed));
      return json{{"ok", true}, {"sensor_id", cfg_.sensor_id}, {"version", version}}.dump();
    }
    if (op != "GET_PREDICTION" && op != "GET_SSIM" && op != "GET_FRAME" && op != "PING")
      return error_json("unknown op: " + op).dump();

    std::shared_ptr<const NodeSample> s;
    if (req.contains("version")) {
      // Without a sampling thread, sample on demand.
      if (!running_) sample_once();
      s = wait_for(req["version"].get<std::uint64_t>(), req.value("seed", cfg_.seed), req.value("timeout", 1.0));
      if (!s) return error_json("timed out waiting for sample").dump();
    } else {
      s = latest();
    }
    json out{{"seq", s->seq}, {"t", s->t}, {"sensor_id", cfg_.sensor_id}};
    if (op == "PING") {
      out["pong"] = true;
      return out.dump();
    }
    out["version"] = s->version;
    out["sim_t"] = s->sim_t;
    out["age"] = std::max(0.0, now() - s->t);
    if (op == "GET_PREDICTION") out["pose_force"] = pose_json(s->pose_force);
    if (op == "GET_SSIM") out["ssim"] = sample_ssim(sensor_, *s);
    if (op == "GET_FRAME") out["displacements"] = s->features;
    return out.dump();
  } catch (const std::exception& e) {
    return error_json(std::string("bad request: ") + e.what()).dump();
  }
}

// ---- NodeServer ----

NodeServer::NodeServer(SensorNode& node) : node_(node) {}

NodeServer::~NodeServer() { stop(); }

void NodeServer::start() {
  if (running_) return;
  listener_ = listen_tcp(node_.config().host, node_.config().port);
  port_ = local_port(listener_);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void NodeServer::accept_loop() {
  while (running_) {
    pollfd p{listener_.fd(), POLLIN, 0};
    int n = ::poll(&p, 1, 50);
    if (n <= 0 || !running_) continue;
    int fd = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    std::lock_guard<std::mutex> lk(mu_);
    clients_.push_back(fd);
    workers_.emplace_back([this, fd] { serve(fd); });
  }
}

void NodeServer::serve(int fd) {
  Socket s(fd);
  FrameDecoder dec;
  try {
    while (running_) {
      auto req = read_frame(s, dec);
      if (!req) break;
      send_all(s, encode_frame(node_.handle(*req)));
    }
  } catch (const Error&) {
    // client went away or sent a bad frame; drop the connection
  }
  std::lock_guard<std::mutex> lk(mu_);
  clients_.erase(std::remove(clients_.begin(), clients_.end(), fd), clients_.end());
  s.release();
  ::close(fd);
}

void NodeServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  listener_.close();
  std::vector<std::thread> workers;
  {
    std::lock_guard<std::mutex> lk(mu_);
    for (int fd : clients_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& w : workers) w.join();
}

// ---- Aggregator ----

Aggregator::Aggregator(std::vector<Endpoint> nodes, double deadline_s) : deadline_(deadline_s) {
  if (nodes.empty()) throw InvalidArgument("aggregator needs at least one node");
  for (auto& ep : nodes) links_.push_back(Link{std::move(ep), Socket{}, FrameDecoder{}});
}

std::vector<std::optional<std::vector<std::string>>> Aggregator::exchange(
    const std::vector<std::vector<std::string>>& reqs, std::vector<std::string>& errors) {
  const std::size_t n = links_.size();
  std::vector<std::optional<std::vector<std::string>>> out(n);
  std::vector<std::vector<std::string>> got(n);
  std::vector<bool> live(n, false);
  errors.assign(n, "");
  const auto deadline =
      Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(deadline_));

  for (std::size_t i = 0; i < n; ++i) {
    Link& l = links_[i];
    try {
      if (!l.sock.valid()) {
        l.sock = connect_tcp(l.ep.host, l.ep.port, deadline_);
        l.dec = FrameDecoder{};
      }
      std::string batch;
      for (const auto& r : reqs[i]) batch += encode_frame(r);
      send_all(l.sock, batch);
      live[i] = true;
    } catch (const Error& e) {
      errors[i] = e.what();
      l.sock.close();
    }
  }

  char buf[65536];
  for (;;) {
    std::vector<pollfd> fds;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
      if (!live[i]) continue;
      while (got[i].size() < reqs[i].size()) {
        auto f = links_[i].dec.next();
        if (!f) break;
        got[i].push_back(std::move(*f));
      }
      if (got[i].size() == reqs[i].size()) {
        out[i] = std::move(got[i]);
        live[i] = false;
        continue;
      }
      fds.push_back({links_[i].sock.fd(), POLLIN, 0});
      idx.push_back(i);
    }
    if (fds.empty()) break;
    auto left = std::chrono::duration_cast<std::chrono::microseconds>(deadline - Clock::now()).count();
    int rc = left > 0 ? ::poll(fds.data(), fds.size(), static_cast<int>((left + 999) / 1000)) : 0;
    if (rc <= 0) {
      for (std::size_t i : idx) {
        errors[i] = "deadline exceeded";
        // Late responses would desynchronize the stream; start over next poll.
        links_[i].sock.close();
        live[i] = false;
      }
      break;
    }
    for (std::size_t k = 0; k < fds.size(); ++k) {
      if (!(fds[k].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      std::size_t i = idx[k];
      ssize_t r = ::recv(fds[k].fd, buf, sizeof buf, 0);
      if (r <= 0) {
        errors[i] = r == 0 ? "connection closed" : "receive failed";
        links_[i].sock.close();
        live[i] = false;
        continue;
      }
      try {
        links_[i].dec.feed(std::string_view(buf, static_cast<std::size_t>(r)));
      } catch (const Error& e) {
        errors[i] = e.what();
        links_[i].sock.close();
        live[i] = false;
      }
    }
  }
  return out;
}

AggregateSnapshot Aggregator::poll(const PollOptions& opt) {
  json pred{{"op", "GET_PREDICTION"}};
  json sim{{"op", "GET_SSIM"}};
  if (opt.version) {
    for (auto* j : {&pred, &sim}) {
      (*j)["version"] = *opt.version;
      (*j)["seed"] = opt.noise_seed;
      (*j)["timeout"] = deadline_;
    }
  }
  std::vector<std::string> one{pred.dump()};
  if (opt.with_ssim) one.push_back(sim.dump());
  std::vector<std::vector<std::string>> reqs(links_.size(), one);
  std::vector<std::string> errors;
  auto res = exchange(reqs, errors);

  AggregateSnapshot snap;
  for (std::size_t i = 0; i < links_.size(); ++i) {
    SensorEntry e;
    e.sensor_id = static_cast<int>(i);
    if (res[i]) {
      try {
        e.present = read_entry((*res[i])[0], e);
        if (e.present && opt.with_ssim) {
          SensorEntry s;
          e.present = read_entry((*res[i])[1], s);
          if (e.present) e.ssim = s.ssim;
          else e.error = s.error;
        }
      } catch (const std::exception& ex) {
        e.present = false;
        e.error = ex.what();
      }
    } else {
      e.error = errors[i];
    }
    snap.sensors.push_back(std::move(e));
  }
  merge(snap);
  return snap;
}

bool Aggregator::publish(std::uint64_t version, double sim_t, const std::vector<ContactState>& contacts,
                         std::uint64_t noise_seed) {
  if (contacts.size() != links_.size()) throw InvalidArgument("one contact per node required");
  std::vector<std::vector<std::string>> reqs;
  for (const auto& c : contacts) {
    json j{{"op", "SET_CONTACT"},
           {"version", version},
           {"t", sim_t},
           {"seed", noise_seed},
           {"contact", {c.z, c.alpha, c.beta, c.shear_x, c.shear_y}}};
    reqs.push_back({j.dump()});
  }
  std::vector<std::string> errors;
  auto res = exchange(reqs, errors);
  for (const auto& r : res) {
    if (!r) return false;
    if (json::parse((*r)[0]).contains("error")) return false;
  }
  return true;
}

// ---- arrays ----

LocalArray::LocalArray(std::vector<Sensor> sensors, std::vector<Regressor> models)
    : sensors_(std::move(sensors)), models_(std::move(models)) {
  if (sensors_.size() != kNumSensors || models_.size() != kNumSensors)
    throw InvalidArgument("array needs five sensors and five models");
}

void LocalArray::publish(std::uint64_t version, double sim_t, const std::array<ContactState, kNumSensors>& c,
                         std::uint64_t noise_seed) {
  contact_ = c;
  sim_t_ = sim_t;
  version_ = version;
  seed_ = noise_seed;
}

AggregateSnapshot LocalArray::read(bool with_ssim) {
  AggregateSnapshot snap;
  for (int i = 0; i < kNumSensors; ++i) {
    NodeSample s = sense(sensors_[i], models_[i], contact_[i], seed_, version_);
    SensorEntry e;
    e.sensor_id = i;
    e.present = true;
    e.seq = version_;
    e.t = sim_t_;
    e.version = version_;
    e.pose_force = s.pose_force;
    if (with_ssim) e.ssim = sample_ssim(sensors_[i], s);
    snap.sensors.push_back(e);
  }
  merge(snap);
  return snap;
}

void LoopbackArray::publish(std::uint64_t version, double sim_t, const std::array<ContactState, kNumSensors>& c,
                            std::uint64_t noise_seed) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) nodes_[i]->set_contact(version, sim_t, c[i], noise_seed);
  version_ = version;
  seed_ = noise_seed;
}

AggregateSnapshot LoopbackArray::read(bool with_ssim) {
  AggregateSnapshot snap;
  json pred{{"op", "GET_PREDICTION"}, {"version", version_}, {"seed", seed_}};
  json sim{{"op", "GET_SSIM"}, {"version", version_}, {"seed", seed_}};
  for (auto* node : nodes_) {
    SensorEntry e;
    e.present = read_entry(node->handle(pred.dump()), e);
    if (e.present && with_ssim) {
      SensorEntry s;
      if (read_entry(node->handle(sim.dump()), s)) e.ssim = s.ssim;
    }
    if (!e.present) throw AggregationError("node " + std::to_string(node->config().sensor_id) + ": " + e.error);
    snap.sensors.push_back(e);
  }
  merge(snap);
  return snap;
}

NetworkArray::NetworkArray(std::vector<Endpoint> nodes, double deadline_s) : agg_(std::move(nodes), deadline_s) {}

void NetworkArray::publish(std::uint64_t version, double sim_t, const std::array<ContactState, kNumSensors>& c,
                           std::uint64_t noise_seed) {
  if (!agg_.publish(version, sim_t, std::vector<ContactState>(c.begin(), c.end()), noise_seed))
    throw AggregationError("sensor node did not acknowledge contact update");
  version_ = version;
  seed_ = noise_seed;
}

AggregateSnapshot NetworkArray::read(bool with_ssim) {
  AggregateSnapshot snap = agg_.poll({with_ssim, version_, seed_});
  for (const auto& e : snap.sensors)
    if (!e.present) throw AggregationError("sensor node " + std::to_string(e.sensor_id) + " lost: " + e.error);
  return snap;
}

ArrayDeployment::ArrayDeployment(std::vector<Sensor> sensors, std::vector<Regressor> models, std::uint64_t seed,
                                 std::uint16_t base_port, double sample_rate, const std::string& host)
    : host_(host) {
  if (sensors.size() != models.size()) throw InvalidArgument("one model per sensor required");
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    NodeConfig cfg;
    cfg.sensor_id = static_cast<int>(i);
    cfg.host = host;
    cfg.port = base_port == 0 ? 0 : static_cast<std::uint16_t>(base_port + i);
    cfg.sample_rate = sample_rate;
    cfg.seed = seed;
    nodes_.push_back(std::make_unique<SensorNode>(cfg, std::move(sensors[i]), std::move(models[i])));
  }
  try {
    for (auto& n : nodes_) {
      n->start();
      servers_.push_back(std::make_unique<NodeServer>(*n));
      servers_.back()->start();
    }
  } catch (...) {
    stop();
    throw;
  }
}

ArrayDeployment::~ArrayDeployment() { stop(); }

std::vector<Endpoint> ArrayDeployment::endpoints() const {
  std::vector<Endpoint> out;
  for (const auto& s : servers_) out.push_back({host_, s->port()});
  return out;
}

std::vector<SensorNode*> ArrayDeployment::nodes() {
  std::vector<SensorNode*> out;
  for (auto& n : nodes_) out.push_back(n.get());
  return out;
}

void ArrayDeployment::stop() {
  for (auto& s : servers_) s->stop();
  for (auto& n : nodes_) n->stop();
}

}  // namespace tacgrasp
