#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tacgrasp/dataset.hpp"

namespace tacgrasp {

// Per-dimension z-score. Dimensions with (near) zero spread keep std = 1.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  bool fitted() const { return mean.size() > 0; }
  void fit(const Eigen::MatrixXd& cols);  // one sample per column
  Eigen::MatrixXd apply(const Eigen::MatrixXd& cols) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& cols) const;
};

// Dense ReLU network with a linear output layer. Weights map network-space
// inputs (standardized features) to network-space outputs (standardized
// targets); predict() handles both conversions.
class Regressor {
 public:
  Regressor() = default;
  Regressor(const std::vector<int>& layer_sizes, std::uint64_t seed);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  std::size_t num_layers() const { return W.size(); }
  std::size_t num_parameters() const;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;  // network space
  PoseForce predict(const std::vector<double>& features) const;
  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& raw_features) const;  // raw in, raw out

  std::vector<Eigen::MatrixXd> W;  // out x in
  std::vector<Eigen::VectorXd> b;
  Standardizer input;
  Standardizer target;

 private:
  std::vector<int> sizes_;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
  double loss = 0;  // mean squared error over batch and outputs
};

// Backpropagated gradient of the batch MSE. x: inputs x batch, y: outputs x batch.
Gradients gradients(const Regressor& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);
double batch_loss(const Regressor& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct TrainConfig {
  int batch = 16;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 1e-6;  // lr_t = lr / (1 + decay * t)
  int epochs = 30;
  std::uint64_t seed = 0;
  bool fit_standardizers = true;  // false keeps the model's existing scalers
  bool restore_best = true;       // keep the weights with lowest validation loss
};

struct TrainResult {
  std::vector<double> train_loss;  // index 0 = before the first epoch
  std::vector<double> val_loss;
  int best_epoch = 0;
};

// Raw feature/label matrices (one sample per column).
Eigen::MatrixXd feature_matrix(const Dataset& ds);
Eigen::MatrixXd label_matrix(const Dataset& ds);

TrainResult train(Regressor& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg);

enum class Strategy { individual, aggregate, progressive, standard };

const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

struct StrategyConfig {
  std::vector<int> hidden = {512, 512};
  TrainConfig train;
  int finetune_epochs = 15;
};

struct SensorData {
  Dataset train, val;
};

struct StrategyResult {
  Strategy strategy = Strategy::individual;
  std::vector<Regressor> models;  // 5 for individual/standard, 1 otherwise
  std::vector<TrainResult> curves;

  const Regressor& model_for(int sensor_id) const { return models.size() == 1 ? models[0] : models.at(sensor_id); }
};

// `pretrained` lets standard transfer start from an aggregate model trained
// elsewhere (e.g. reloaded from disk); otherwise it is trained here.
StrategyResult run_strategy(Strategy strategy, const std::vector<SensorData>& data, const StrategyConfig& cfg,
                            const Regressor* pretrained = nullptr);

struct Evaluation {
  std::array<double, 6> mae{};
  std::vector<std::pair<PoseForce, PoseForce>> pairs;  // (label, prediction)
};

Evaluation evaluate(const Regressor& model, const Dataset& test);

constexpr int kModelVersion = 1;
std::string model_to_json(const Regressor& model);
Regressor model_from_json(const std::string& text);
void save_model(const std::string& path, const Regressor& model);
Regressor load_model(const std::string& path);

}  // namespace tacgrasp
