#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "emoprompt/affect.hpp"
#include "emoprompt/backend.hpp"
#include "emoprompt/reward_cache.hpp"

namespace emoprompt {

using Distribution = std::array<double, kNumEmotions>;

/// Parameters of the two-layer emotion-selection network
///   z = W2 relu(W1 s + b1) + b2,  pi = softmax(z).
struct PolicyParams {
  Eigen::MatrixXd w1;  // hidden x d
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // K x hidden
  Eigen::VectorXd b2;  // K
  std::string activation_id = "relu";
  std::uint64_t seed = 0;

  Eigen::Index input_dim() const { return w1.cols(); }
  Eigen::Index hidden_dim() const { return w1.rows(); }

  /// Throws ShapeError for inconsistent shapes, DomainError for non-finite entries.
  void check() const;

  static PolicyParams zeros(Eigen::Index input_dim, Eigen::Index hidden_dim);
  /// Each entry uniform in +-1/sqrt(fan_in), drawn from a seeded generator.
  static PolicyParams initialize(Eigen::Index input_dim, Eigen::Index hidden_dim, std::uint64_t seed,
                                 double scale = 1.0);
};

/// Soft supervision distribution derived from one reward vector.
struct TargetWeights {
  Distribution weights{};
  double temperature = 1.0;
};

/// w_k = exp((r_k - mean r)/tau) / sum_j exp((r_j - mean r)/tau). Throws DomainError for tau <= 0.
TargetWeights soft_targets(std::span<const double, kNumEmotions> rewards, double tau);
TargetWeights soft_targets(const RewardVector& rewards, double tau);

Distribution logits(const PolicyParams& params, std::span<const double> state);
/// Throws ShapeError when the state dimension does not match W1.
Distribution forward(const PolicyParams& params, std::span<const double> state);

struct PolicyExample {
  std::vector<double> state;
  Distribution target{};
};

/// Reward-weighted cross-entropy, summed over the batch:
///   L = - sum_i sum_k w_ik log pi(a_k | s_i).
double loss(const PolicyParams& params, std::span<const PolicyExample> batch);

struct PolicyGradients {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
};

/// Exact gradients of loss() with respect to every parameter block.
PolicyGradients gradients(const PolicyParams& params, std::span<const PolicyExample> batch);

/// Argmax of forward(); ties resolve to the lowest canonical emotion index.
Emotion select_emotion(const PolicyParams& params, std::span<const double> state);

struct TrainConfig {
  double temperature = 1.0;
  int hidden = 64;
  double learning_rate = 1e-2;
  int epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  /// "sgd" (plain mini-batch gradient descent) or "adam".
  std::string optimizer = "adam";
  /// Multiplier on the 1/sqrt(fan_in) initialisation bound.
  double init_scale = 1.0;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochLog {
  int epoch = 0;
  /// Summed loss over the training split after the epoch.
  double train_loss = 0.0;
  /// Mean over validation instances of sum_k pi_k r_k (training split when there is no validation split).
  double validation_expected_reward = 0.0;
  nlohmann::json to_json() const;
};

struct TrainResult {
  PolicyParams params;
  std::vector<EpochLog> log;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
};

/// Mini-batch gradient descent on the summed loss, with the step scaled by
/// 1/batch-size. Deterministic given (cache, config). Throws TrainingDiverged on a non-finite loss.
TrainResult train(const RewardDataset& cache, const TrainConfig& config);

/// Mean over records of sum_k pi(a_k | s) r_k.
double expected_reward(const PolicyParams& params, std::span<const RewardRecord> records);
/// Mean over records of the reward at the selected emotion.
double selected_reward(const PolicyParams& params, std::span<const RewardRecord> records);

nlohmann::json checkpoint_json(const PolicyParams& params, const std::string& encoder_id, const TrainConfig& config);
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params, const std::string& encoder_id,
                     const TrainConfig& config);

struct Checkpoint {
  PolicyParams params;
  std::string encoder_id;
  TrainConfig config;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

}  // namespace emoprompt
