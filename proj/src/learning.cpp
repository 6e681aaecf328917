#include "tacgrasp/learning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tacgrasp/error.hpp"

namespace tacgrasp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void Standardizer::fit(const MatrixXd& cols) {
  if (cols.cols() == 0) throw InvalidArgument("cannot fit standardizer on empty data");
  mean = cols.rowwise().mean();
  std = ((cols.colwise() - mean).array().square().rowwise().sum() / double(cols.cols())).sqrt();
  for (Eigen::Index i = 0; i < std.size(); ++i)
    if (!(std(i) > 1e-12)) std(i) = 1.0;
}

MatrixXd Standardizer::apply(const MatrixXd& cols) const {
  return (cols.colwise() - mean).array().colwise() / std.array();
}

MatrixXd Standardizer::invert(const MatrixXd& cols) const {
  return (cols.array().colwise() * std.array()).matrix().colwise() + mean;
}

Regressor::Regressor(const std::vector<int>& layer_sizes, std::uint64_t seed) : sizes_(layer_sizes) {
  if (layer_sizes.size() < 2) throw InvalidArgument("regressor needs at least input and output layers");
  for (int s : layer_sizes)
    if (s < 1) throw InvalidArgument("layer sizes must be positive");
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    int in = layer_sizes[l], out = layer_sizes[l + 1];
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / in));  // He init
    MatrixXd w(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) w(r, c) = n(rng);
    W.push_back(std::move(w));
    b.push_back(VectorXd::Zero(out));
  }
}

std::size_t Regressor::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < W.size(); ++l) n += W[l].size() + b[l].size();
  return n;
}

MatrixXd Regressor::forward(const MatrixXd& x) const {
  MatrixXd a = x;
  for (std::size_t l = 0; l < W.size(); ++l) {
    MatrixXd z = (W[l] * a).colwise() + b[l];
    a = (l + 1 < W.size()) ? MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return a;
}

MatrixXd Regressor::predict_batch(const MatrixXd& raw) const {
  if (raw.rows() != sizes_.front()) throw InvalidArgument("feature length does not match input layer");
  return target.invert(forward(input.apply(raw)));
}

PoseForce Regressor::predict(const std::vector<double>& features) const {
  Eigen::Map<const VectorXd> x(features.data(), Eigen::Index(features.size()));
  MatrixXd y = predict_batch(MatrixXd(x));
  return {y(0, 0), y(1, 0), y(2, 0), y(3, 0), y(4, 0), y(5, 0)};
}

Gradients gradients(const Regressor& model, const MatrixXd& x, const MatrixXd& y) {
  const std::size_t L = model.W.size();
  std::vector<MatrixXd> act(L + 1), pre(L);
  act[0] = x;
  for (std::size_t l = 0; l < L; ++l) {
    pre[l] = (model.W[l] * act[l]).colwise() + model.b[l];
    act[l + 1] = (l + 1 < L) ? MatrixXd(pre[l].cwiseMax(0.0)) : pre[l];
  }
  Gradients g;
  g.dW.resize(L);
  g.db.resize(L);
  const double n = double(y.size());
  MatrixXd diff = act[L] - y;
  g.loss = diff.squaredNorm() / n;
  MatrixXd delta = (2.0 / n) * diff;
  for (std::size_t l = L; l-- > 0;) {
    g.dW[l] = delta * act[l].transpose();
    g.db[l] = delta.rowwise().sum();
    if (l > 0) {
      MatrixXd back = model.W[l].transpose() * delta;
      delta = (pre[l - 1].array() > 0.0).select(back, 0.0);
    }
  }
  return g;
}

double batch_loss(const Regressor& model, const MatrixXd& x, const MatrixXd& y) {
  if (y.size() == 0) return 0;
  return (model.forward(x) - y).squaredNorm() / double(y.size());
}

MatrixXd feature_matrix(const Dataset& ds) {
  if (ds.empty()) return MatrixXd();
  MatrixXd m(Eigen::Index(ds.front().features.size()), Eigen::Index(ds.size()));
  for (std::size_t j = 0; j < ds.size(); ++j) {
    if (ds[j].features.size() != std::size_t(m.rows())) throw InvalidArgument("inconsistent feature lengths");
    m.col(Eigen::Index(j)) = Eigen::Map<const VectorXd>(ds[j].features.data(), m.rows());
  }
  return m;
}

MatrixXd label_matrix(const Dataset& ds) {
  MatrixXd m(6, Eigen::Index(ds.size()));
  for (std::size_t j = 0; j < ds.size(); ++j) {
    auto a = ds[j].label.to_array();
    for (int i = 0; i < 6; ++i) m(i, Eigen::Index(j)) = a[i];
  }
  return m;
}

namespace {

struct Adam {
  std::vector<MatrixXd> mW, vW;
  std::vector<VectorXd> mb, vb;
  long t = 0;

  explicit Adam(const Regressor& m) {
    for (std::size_t l = 0; l < m.W.size(); ++l) {
      mW.push_back(MatrixXd::Zero(m.W[l].rows(), m.W[l].cols()));
      vW.push_back(mW.back());
      mb.push_back(VectorXd::Zero(m.b[l].size()));
      vb.push_back(mb.back());
    }
  }

  void step(Regressor& m, const Gradients& g, const TrainConfig& c) {
    ++t;
    double lr = c.lr / (1.0 + c.decay * double(t));
    double bc1 = 1.0 - std::pow(c.beta1, double(t));
    double bc2 = 1.0 - std::pow(c.beta2, double(t));
    for (std::size_t l = 0; l < m.W.size(); ++l) {
      mW[l] = c.beta1 * mW[l] + (1 - c.beta1) * g.dW[l];
      vW[l] = c.beta2 * vW[l] + (1 - c.beta2) * g.dW[l].cwiseProduct(g.dW[l]);
      m.W[l].array() -= lr * (mW[l].array() / bc1) / ((vW[l].array() / bc2).sqrt() + c.eps);
      mb[l] = c.beta1 * mb[l] + (1 - c.beta1) * g.db[l];
      vb[l] = c.beta2 * vb[l] + (1 - c.beta2) * g.db[l].cwiseProduct(g.db[l]);
      m.b[l].array() -= lr * (mb[l].array() / bc1) / ((vb[l].array() / bc2).sqrt() + c.eps);
    }
  }
};

}  // namespace

TrainResult train(Regressor& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg) {
  if (cfg.batch < 1 || !(cfg.lr > 0) || cfg.epochs < 0) throw InvalidArgument("invalid training configuration");
  if (model.num_layers() == 0) throw InvalidArgument("model has no layers");
  if (train_set.empty()) throw InvalidArgument("training set is empty");
  TrainResult result;
  if (cfg.epochs == 0) return result;

  MatrixXd X = feature_matrix(train_set), Y = label_matrix(train_set);
  if (X.rows() != model.layer_sizes().front() || model.layer_sizes().back() != 6)
    throw InvalidArgument("dataset shape does not match the model (" + std::to_string(X.rows()) + " features)");
  if (cfg.fit_standardizers || !model.input.fitted()) {
    model.input.fit(X);
    model.target.fit(Y);
  }
  X = model.input.apply(X);
  Y = model.target.apply(Y);
  MatrixXd Xv, Yv;
  if (!val_set.empty()) {
    Xv = model.input.apply(feature_matrix(val_set));
    Yv = model.target.apply(label_matrix(val_set));
    if (Xv.rows() != X.rows()) throw InvalidArgument("validation feature length differs from training");
  }
  auto val_loss = [&] { return Xv.cols() ? batch_loss(model, Xv, Yv) : batch_loss(model, X, Y); };

  result.train_loss.push_back(batch_loss(model, X, Y));
  result.val_loss.push_back(val_loss());
  Regressor best = model;
  double best_val = result.val_loss[0];

  Adam adam(model);
  std::mt19937_64 rng(cfg.seed ^ 0xa0761d6478bd642fULL);
  std::vector<Eigen::Index> order(X.cols());
  std::iota(order.begin(), order.end(), 0);
  MatrixXd xb, yb;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      std::size_t n = std::min<std::size_t>(cfg.batch, order.size() - start);
      xb.resize(X.rows(), Eigen::Index(n));
      yb.resize(Y.rows(), Eigen::Index(n));
      for (std::size_t j = 0; j < n; ++j) {
        xb.col(Eigen::Index(j)) = X.col(order[start + j]);
        yb.col(Eigen::Index(j)) = Y.col(order[start + j]);
      }
      Gradients g = gradients(model, xb, yb);
      if (!std::isfinite(g.loss)) throw TrainingError("loss diverged", epoch);
      adam.step(model, g, cfg);
    }
    double tl = batch_loss(model, X, Y), vl = val_loss();
    if (!std::isfinite(tl) || !std::isfinite(vl)) throw TrainingError("loss diverged", epoch);
    result.train_loss.push_back(tl);
    result.val_loss.push_back(vl);
    if (vl < best_val) {
      best_val = vl;
      best = model;
      result.best_epoch = epoch;
    }
  }
  if (cfg.restore_best) model = best;
  return result;
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::individual: return "individual";
    case Strategy::aggregate: return "aggregate";
    case Strategy::progressive: return "progressive";
    case Strategy::standard: return "standard";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  for (Strategy s : {Strategy::individual, Strategy::aggregate, Strategy::progressive, Strategy::standard})
    if (name == strategy_name(s)) return s;
  throw InvalidArgument("unknown strategy '" + name + "'");
}

namespace {

Dataset concat(const std::vector<SensorData>& data, Dataset SensorData::*field) {
  Dataset out;
  for (const auto& d : data) out.insert(out.end(), (d.*field).begin(), (d.*field).end());
  return out;
}

}  // namespace

StrategyResult run_strategy(Strategy strategy, const std::vector<SensorData>& data, const StrategyConfig& cfg,
                            const Regressor* pretrained) {
  if (data.size() != std::size_t(kNumSensors)) throw InvalidArgument("run_strategy needs one dataset per sensor (5)");
  for (std::size_t k = 0; k < data.size(); ++k)
    if (data[k].train.empty()) throw InvalidArgument("missing training data for sensor " + std::to_string(k));
  std::vector<int> sizes{int(data[0].train.front().features.size())};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(6);

  StrategyResult r;
  r.strategy = strategy;
  auto train_aggregate = [&] {
    Regressor m(sizes, cfg.train.seed);
    r.curves.push_back(train(m, concat(data, &SensorData::train), concat(data, &SensorData::val), cfg.train));
    return m;
  };

  switch (strategy) {
    case Strategy::individual:
      for (const auto& d : data) {
        Regressor m(sizes, cfg.train.seed);
        r.curves.push_back(train(m, d.train, d.val, cfg.train));
        r.models.push_back(std::move(m));
      }
      break;
    case Strategy::aggregate:
      r.models.push_back(train_aggregate());
      break;
    case Strategy::progressive: {
      Regressor m(sizes, cfg.train.seed);
      TrainConfig c = cfg.train;
      for (std::size_t k = 0; k < data.size(); ++k) {
        c.fit_standardizers = (k == 0);
        r.curves.push_back(train(m, data[k].train, data[k].val, c));
      }
      r.models.push_back(std::move(m));
      break;
    }
    case Strategy::standard: {
      Regressor base = pretrained ? *pretrained : train_aggregate();
      TrainConfig c = cfg.train;
      c.fit_standardizers = false;
      c.epochs = cfg.finetune_epochs;
      for (const auto& d : data) {
        Regressor m = base;
        r.curves.push_back(train(m, d.train, d.val, c));
        r.models.push_back(std::move(m));
      }
      break;
    }
  }
  return r;
}

Evaluation evaluate(const Regressor& model, const Dataset& test) {
  if (test.empty()) throw InvalidArgument("test set is empty");
  MatrixXd pred = model.predict_batch(feature_matrix(test));
  MatrixXd lab = label_matrix(test);
  Evaluation e;
  for (int i = 0; i < 6; ++i) e.mae[i] = (pred.row(i) - lab.row(i)).cwiseAbs().mean();
  e.pairs.reserve(test.size());
  for (Eigen::Index j = 0; j < pred.cols(); ++j)
    e.pairs.push_back({test[std::size_t(j)].label,
                       {pred(0, j), pred(1, j), pred(2, j), pred(3, j), pred(4, j), pred(5, j)}});
  return e;
}

namespace {

nlohmann::json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd json_vec(const nlohmann::json& j, Eigen::Index n, const char* what) {
  auto v = j.get<std::vector<double>>();
  if (Eigen::Index(v.size()) != n) throw LoadError(std::string("model field '") + what + "' has wrong length");
  for (double x : v)
    if (!std::isfinite(x)) throw LoadError(std::string("model field '") + what + "' is not finite");
  return Eigen::Map<VectorXd>(v.data(), n);
}

}  // namespace

std::string model_to_json(const Regressor& model) {
  nlohmann::json j;
  j["version"] = kModelVersion;
  j["layer_sizes"] = model.layer_sizes();
  j["standardizer"] = {{"mean", vec_json(model.input.mean)}, {"std", vec_json(model.input.std)}};
  j["target"] = {{"mean", vec_json(model.target.mean)}, {"std", vec_json(model.target.std)}};
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < model.W.size(); ++l) {
    std::vector<double> w;
    w.reserve(model.W[l].size());
    for (Eigen::Index r = 0; r < model.W[l].rows(); ++r)
      for (Eigen::Index c = 0; c < model.W[l].cols(); ++c) w.push_back(model.W[l](r, c));
    layers.push_back({{"w", w}, {"b", vec_json(model.b[l])}});
  }
  j["layers"] = layers;
  return j.dump();
}

Regressor model_from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    if (!j.contains("version") || j["version"] != kModelVersion)
      throw LoadError("unsupported model version " + (j.contains("version") ? j["version"].dump() : "<missing>"));
    auto sizes = j.at("layer_sizes").get<std::vector<int>>();
    Regressor m(sizes, 0);
    const auto& layers = j.at("layers");
    if (layers.size() != m.W.size()) throw LoadError("layer count does not match layer_sizes");
    for (std::size_t l = 0; l < m.W.size(); ++l) {
      auto w = json_vec(layers[l].at("w"), m.W[l].size(), "w");
      for (Eigen::Index r = 0; r < m.W[l].rows(); ++r)
        for (Eigen::Index c = 0; c < m.W[l].cols(); ++c) m.W[l](r, c) = w(r * m.W[l].cols() + c);
      m.b[l] = json_vec(layers[l].at("b"), m.b[l].size(), "b");
    }
    m.input.mean = json_vec(j.at("standardizer").at("mean"), sizes.front(), "standardizer.mean");
    m.input.std = json_vec(j.at("standardizer").at("std"), sizes.front(), "standardizer.std");
    if (j.contains("target")) {
      m.target.mean = json_vec(j["target"].at("mean"), sizes.back(), "target.mean");
      m.target.std = json_vec(j["target"].at("std"), sizes.back(), "target.std");
    } else {
      m.target.mean = VectorXd::Zero(sizes.back());
      m.target.std = VectorXd::Ones(sizes.back());
    }
    return m;
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError(std::string("corrupted model: ") + e.what());
  }
}

void save_model(const std::string& path, const Regressor& model) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << model_to_json(model) << "\n";
  if (!f) throw Error("write failed: " + path);
}

Regressor load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open model " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace tacgrasp
