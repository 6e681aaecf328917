#include "tacgrasp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tacgrasp/error.hpp"

namespace tacgrasp {

namespace {

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi)) throw InvalidArgument(std::string("invalid range for ") + name);
}

void append_number(std::string& out, double v) {
  char buf[32];
  int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, n);
}

double parse_number(std::string_view field, std::size_t line, long record) {
  double v = 0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw ParseError("invalid number '" + std::string(field) + "' in record " + std::to_string(record), line, record);
  return v;
}

constexpr std::array<const char*, 9> kFixedColumns = {"sensor_id", "z",  "alpha", "beta", "shear_x",
                                                      "shear_y",   "fx", "fy",    "fz"};

}  // namespace

void validate(const CollectionConfig& cfg) {
  if (!(cfg.split > 0 && cfg.split < 1)) throw InvalidArgument("split must lie in (0,1)");
  if (cfg.n_train_val < 1 || cfg.n_test < 1) throw InvalidArgument("sample counts must be >= 1");
  if (cfg.ft_noise < 0) throw InvalidArgument("ft_noise must be >= 0");
  if (cfg.tap_steps < 1 || cfg.shear_steps < 1 || cfg.hold_steps < 1) throw InvalidArgument("trajectory phases need >= 1 step");
  check_range(cfg.ranges.z, "z");
  check_range(cfg.ranges.alpha, "alpha");
  check_range(cfg.ranges.beta, "beta");
  check_range(cfg.ranges.shear_x, "shear_x");
  check_range(cfg.ranges.shear_y, "shear_y");
  if (cfg.ranges.z.lo < 0) throw InvalidArgument("z range must be >= 0");
}

ContactState physical_contact(const Sensor& sensor, const ContactState& commanded) {
  const auto& v = sensor.variation();
  ContactState c = commanded;
  c.z = std::max(0.0, commanded.z + v.mount_z);
  c.alpha += v.mount_alpha;
  c.beta += v.mount_beta;
  return c;
}

ContactForce tap_and_shear_label(const Sensor& sensor, const ContactState& target, const CollectionConfig& cfg,
                                 std::uint64_t noise_seed) {
  const int total = cfg.tap_steps + cfg.shear_steps + cfg.hold_steps;
  std::vector<double> fx(total), fy(total), fz(total);
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int k = 0; k < total; ++k) {
    ContactState c = target;
    if (k < cfg.tap_steps) {
      double frac = double(k + 1) / cfg.tap_steps;
      c.z = target.z * frac;
      c.shear_x = c.shear_y = 0;
    } else if (k < cfg.tap_steps + cfg.shear_steps) {
      double frac = double(k - cfg.tap_steps + 1) / cfg.shear_steps;
      c.shear_x = target.shear_x * frac;
      c.shear_y = target.shear_y * frac;
    }
    ContactForce f = sensor.force(c);
    fx[k] = f.fx;
    fy[k] = f.fy;
    fz[k] = f.fz;
    if (cfg.ft_noise > 0) {
      fx[k] += cfg.ft_noise * noise(rng);
      fy[k] += cfg.ft_noise * noise(rng);
      fz[k] += cfg.ft_noise * noise(rng);
    }
  }
  return {hybrid_filter(fx, cfg.filter).back(), hybrid_filter(fy, cfg.filter).back(),
          hybrid_filter(fz, cfg.filter).back()};
}

DatasetSplit collect(const Sensor& sensor, const CollectionConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + std::uint64_t(sensor.sensor_id()) + 1);
  auto draw = [&](const Range& r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); };

  auto one = [&]() {
    LabeledSample s;
    s.sensor_id = sensor.sensor_id();
    s.contact.z = draw(cfg.ranges.z);
    s.contact.alpha = draw(cfg.ranges.alpha);
    s.contact.beta = draw(cfg.ranges.beta);
    s.contact.shear_x = draw(cfg.ranges.shear_x);
    s.contact.shear_y = draw(cfg.ranges.shear_y);
    std::uint64_t ft_seed = rng();
    std::uint64_t marker_key = rng();
    ContactState actual = physical_contact(sensor, s.contact);
    ContactForce f = tap_and_shear_label(sensor, actual, cfg, ft_seed);
    s.label = {s.contact.z, s.contact.alpha, s.contact.beta, f.fx, f.fy, f.fz};
    s.features = features(sensor.simulate(actual, marker_key).frame);
    return s;
  };

  DatasetSplit out;
  const int n_train = static_cast<int>(cfg.n_train_val * cfg.split + 0.5);
  for (int i = 0; i < cfg.n_train_val; ++i) (i < n_train ? out.train : out.val).push_back(one());
  for (int i = 0; i < cfg.n_test; ++i) out.test.push_back(one());
  return out;
}

std::string dataset_header(std::size_t n_features) {
  std::string h;
  for (const char* c : kFixedColumns) {
    if (!h.empty()) h += ',';
    h += c;
  }
  for (std::size_t i = 0; i < n_features; ++i) h += ",f" + std::to_string(i);
  return h;
}

std::string format_dataset(const Dataset& ds, std::size_t n_features) {
  std::string out = dataset_header(n_features) + "\n";
  for (const auto& s : ds) {
    if (s.features.size() != n_features) throw InvalidArgument("sample feature length differs from header");
    out += std::to_string(s.sensor_id);
    for (double v : {s.contact.z, s.contact.alpha, s.contact.beta, s.contact.shear_x, s.contact.shear_y, s.label.fx,
                     s.label.fy, s.label.fz}) {
      out += ',';
      append_number(out, v);
    }
    for (double v : s.features) {
      out += ',';
      append_number(out, v);
    }
    out += '\n';
  }
  return out;
}

void save_dataset(const std::string& path, const Dataset& ds, std::size_t n_features) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << format_dataset(ds, n_features);
  if (!f) throw Error("write failed: " + path);
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1, -1);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string_view> cols;
  auto split = [&](std::string_view s) {
    cols.clear();
    std::size_t start = 0;
    for (;;) {
      std::size_t p = s.find(',', start);
      cols.push_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
      if (p == std::string_view::npos) break;
      start = p + 1;
    }
  };
  split(line);
  if (cols.size() < kFixedColumns.size()) throw ParseError("header has too few columns", 1, -1);
  const std::size_t n_features = cols.size() - kFixedColumns.size();
  if (line != dataset_header(n_features)) throw ParseError("unexpected header", 1, -1);

  Dataset ds;
  std::size_t lineno = 1;
  long record = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    split(line);
    if (cols.size() != n_features + kFixedColumns.size())
      throw ParseError("record " + std::to_string(record) + " has " + std::to_string(cols.size()) + " fields, expected " +
                           std::to_string(n_features + kFixedColumns.size()),
                       lineno, record);
    LabeledSample s;
    double id = parse_number(cols[0], lineno, record);
    if (id != double(int(id)) || id < 0 || id >= kNumSensors)
      throw ParseError("record " + std::to_string(record) + " has invalid sensor_id", lineno, record);
    s.sensor_id = int(id);
    s.contact.z = parse_number(cols[1], lineno, record);
    s.contact.alpha = parse_number(cols[2], lineno, record);
    s.contact.beta = parse_number(cols[3], lineno, record);
    s.contact.shear_x = parse_number(cols[4], lineno, record);
    s.contact.shear_y = parse_number(cols[5], lineno, record);
    s.label = {s.contact.z, s.contact.alpha, s.contact.beta, parse_number(cols[6], lineno, record),
               parse_number(cols[7], lineno, record), parse_number(cols[8], lineno, record)};
    s.features.resize(n_features);
    for (std::size_t i = 0; i < n_features; ++i) s.features[i] = parse_number(cols[9 + i], lineno, record);
    ds.push_back(std::move(s));
    ++record;
  }
  return ds;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open dataset " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_dataset(ss.str());
}

void save_dataset_meta(const std::string& path, const CollectionConfig& cfg, int sensor_id) {
  nlohmann::json j;
  j["sensor_id"] = sensor_id;
  j["seed"] = cfg.seed;
  j["ft_noise"] = cfg.ft_noise;
  j["filter"] = {{"ma_window", cfg.filter.ma_window},
                 {"butter_order", cfg.filter.butter_order},
                 {"butter_cutoff", cfg.filter.butter_cutoff}};
  j["trajectory"] = {{"tap_steps", cfg.tap_steps}, {"shear_steps", cfg.shear_steps}, {"hold_steps", cfg.hold_steps}};
  auto r = [](const Range& x) { return nlohmann::json::array({x.lo, x.hi}); };
  j["ranges"] = {{"z", r(cfg.ranges.z)},
                 {"alpha", r(cfg.ranges.alpha)},
                 {"beta", r(cfg.ranges.beta)},
                 {"shear_x", r(cfg.ranges.shear_x)},
                 {"shear_y", r(cfg.ranges.shear_y)}};
  std::ofstream f(path + ".meta.json");
  if (!f) throw Error("cannot open " + path + ".meta.json for writing");
  f << j.dump(2) << "\n";
}

}  // namespace tacgrasp
