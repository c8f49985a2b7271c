#include "emoprompt/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "emoprompt/errors.hpp"
#include "emoprompt/io.hpp"

namespace emoprompt {

using nlohmann::json;

namespace {

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> s) {
  return Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
}

void require_dim(const PolicyParams& params, std::size_t dim) {
  if (static_cast<Eigen::Index>(dim) != params.input_dim()) {
    throw ShapeError("state has dimension " + std::to_string(dim) + " but the policy expects " +
                     std::to_string(params.input_dim()));
  }
}

/// Log-softmax with max subtraction.
Distribution log_softmax(const Distribution& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  Distribution out{};
  for (std::size_t k = 0; k < kNumEmotions; ++k) out[k] = z[k] - lse;
  return out;
}

Distribution softmax(const Distribution& z) {
  const double m = *std::max_element(z.begin(), z.end());
  Distribution out{};
  double sum = 0.0;
  for (std::size_t k = 0; k < kNumEmotions; ++k) {
    out[k] = std::exp(z[k] - m);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return out;
}

struct Activations {
  Eigen::VectorXd pre;     // W1 s + b1
  Eigen::VectorXd hidden;  // relu(pre)
  Distribution z{};
};

Activations run(const PolicyParams& p, std::span<const double> state) {
  require_dim(p, state.size());
  Activations a;
  a.pre = p.w1 * as_vector(state) + p.b1;
  a.hidden = a.pre.cwiseMax(0.0);
  const Eigen::VectorXd z = p.w2 * a.hidden + p.b2;
  for (std::size_t k = 0; k < kNumEmotions; ++k) a.z[k] = z(static_cast<Eigen::Index>(k));
  return a;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw ShapeError("checkpoint matrix row count");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ShapeError("checkpoint matrix column count");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& j, Eigen::Index n) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) throw ShapeError("checkpoint vector length");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8) on mean gradients.
class Adam {
 public:
  explicit Adam(const PolicyParams& p)
      : m_{zeros_like(p)}, v_{zeros_like(p)} {}

  void step(PolicyParams& p, const PolicyGradients& g, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    update(p.w1, g.w1, m_.w1, v_.w1, lr, c1, c2);
    update(p.b1, g.b1, m_.b1, v_.b1, lr, c1, c2);
    update(p.w2, g.w2, m_.w2, v_.w2, lr, c1, c2);
    update(p.b2, g.b2, m_.b2, v_.b2, lr, c1, c2);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  static PolicyGradients zeros_like(const PolicyParams& p) {
    return PolicyGradients{Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols()), Eigen::VectorXd::Zero(p.b1.size()),
                           Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols()), Eigen::VectorXd::Zero(p.b2.size())};
  }

  template <class Param, class Grad>
  static void update(Param& param, const Grad& grad, Param& m, Param& v, double lr, double c1, double c2) {
    m = kBeta1 * m + (1.0 - kBeta1) * grad;
    v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
  }

  PolicyGradients m_;
  PolicyGradients v_;
  int t_ = 0;
};

}  // namespace

// ---- parameters ------------------------------------------------------------

void PolicyParams::check() const {
  const Eigen::Index k = static_cast<Eigen::Index>(kNumEmotions);
  if (b1.size() != w1.rows() || w2.cols() != w1.rows() || w2.rows() != k || b2.size() != k) {
    throw ShapeError("policy parameter shapes are inconsistent");
  }
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite()) {
    throw DomainError("policy parameters contain non-finite values");
  }
}

PolicyParams PolicyParams::zeros(Eigen::Index input_dim, Eigen::Index hidden_dim) {
  PolicyParams p;
  p.w1 = Eigen::MatrixXd::Zero(hidden_dim, input_dim);
  p.b1 = Eigen::VectorXd::Zero(hidden_dim);
  p.w2 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNumEmotions), hidden_dim);
  p.b2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kNumEmotions));
  return p;
}

PolicyParams PolicyParams::initialize(Eigen::Index input_dim, Eigen::Index hidden_dim, std::uint64_t seed,
                                      double scale) {
  PolicyParams p = zeros(input_dim, hidden_dim);
  p.seed = seed;
  std::mt19937_64 rng(seed);
  auto fill = [&rng, scale](auto& block, double fan_in) {
    const double bound = scale / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = dist(rng);
  };
  fill(p.w1, static_cast<double>(input_dim));
  fill(p.b1, static_cast<double>(input_dim));
  fill(p.w2, static_cast<double>(hidden_dim));
  fill(p.b2, static_cast<double>(hidden_dim));
  return p;
}

// ---- soft targets ----------------------------------------------------------

TargetWeights soft_targets(std::span<const double, kNumEmotions> rewards, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("soft-target temperature must be positive and finite");
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(kNumEmotions);
  Distribution centered{};
  for (std::size_t k = 0; k < kNumEmotions; ++k) centered[k] = (rewards[k] - mean) / tau;
  return TargetWeights{softmax(centered), tau};
}

TargetWeights soft_targets(const RewardVector& rewards, double tau) {
  std::array<double, kNumEmotions> r{};
  for (std::size_t k = 0; k < kNumEmotions; ++k) r[k] = static_cast<double>(rewards[k]);
  return soft_targets(std::span<const double, kNumEmotions>(r), tau);
}

// ---- forward / loss / gradients -------------------------------------------

Distribution logits(const PolicyParams& params, std::span<const double> state) { return run(params, state).z; }

Distribution forward(const PolicyParams& params, std::span<const double> state) {
  return softmax(run(params, state).z);
}

double loss(const PolicyParams& params, std::span<const PolicyExample> batch) {
  double total = 0.0;
  for (const auto& ex : batch) {
    const Distribution logp = log_softmax(run(params, ex.state).z);
    for (std::size_t k = 0; k < kNumEmotions; ++k) total -= ex.target[k] * logp[k];
  }
  return total;
}

PolicyGradients gradients(const PolicyParams& params, std::span<const PolicyExample> batch) {
  PolicyGradients g;
  g.w1 = Eigen::MatrixXd::Zero(params.w1.rows(), params.w1.cols());
  g.b1 = Eigen::VectorXd::Zero(params.b1.size());
  g.w2 = Eigen::MatrixXd::Zero(params.w2.rows(), params.w2.cols());
  g.b2 = Eigen::VectorXd::Zero(params.b2.size());
  Eigen::VectorXd dz(static_cast<Eigen::Index>(kNumEmotions));
  for (const auto& ex : batch) {
    const Activations a = run(params, ex.state);
    const Distribution pi = softmax(a.z);
    const double mass = std::accumulate(ex.target.begin(), ex.target.end(), 0.0);
    for (std::size_t k = 0; k < kNumEmotions; ++k) dz(static_cast<Eigen::Index>(k)) = mass * pi[k] - ex.target[k];
    g.w2.noalias() += dz * a.hidden.transpose();
    g.b2 += dz;
    const Eigen::VectorXd dpre = (params.w2.transpose() * dz).cwiseProduct(
        a.pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
    g.w1.noalias() += dpre * as_vector(ex.state).transpose();
    g.b1 += dpre;
  }
  return g;
}

Emotion select_emotion(const PolicyParams& params, std::span<const double> state) {
  const Distribution pi = forward(params, state);
  std::size_t best = 0;
  for (std::size_t k = 1; k < kNumEmotions; ++k) {
    if (pi[k] > pi[best]) best = k;
  }
  return emotion_at(best);
}

// ---- training ----------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("train.temperature must be > 0");
  if (hidden < 1) throw ConfigError("train.hidden must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("train.validation_fraction must be in [0, 1)");
  }
  if (!(init_scale > 0.0)) throw ConfigError("train.init_scale must be > 0");
  if (optimizer != "sgd" && optimizer != "adam") throw ConfigError("train.optimizer must be \"sgd\" or \"adam\"");
}

json TrainConfig::to_json() const {
  return json{{"temperature", temperature}, {"hidden", hidden},         {"learning_rate", learning_rate},
              {"epochs", epochs},           {"batch_size", batch_size}, {"seed", seed},
              {"validation_fraction", validation_fraction}, {"optimizer", optimizer}, {"init_scale", init_scale}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.temperature = j.value("temperature", c.temperature);
  c.hidden = j.value("hidden", c.hidden);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.init_scale = j.value("init_scale", c.init_scale);
  return c;
}

json EpochLog::to_json() const {
  return json{{"epoch", epoch}, {"train_loss", train_loss}, {"validation_expected_reward", validation_expected_reward}};
}

double expected_reward(const PolicyParams& params, std::span<const RewardRecord> records) {
  if (records.empty()) throw UndefinedMetric("expected reward over no records is undefined");
  double total = 0.0;
  for (const auto& r : records) {
    const Distribution pi = forward(params, r.embedding.values);
    for (std::size_t k = 0; k < kNumEmotions; ++k) total += pi[k] * r.rewards[k];
  }
  return total / static_cast<double>(records.size());
}

double selected_reward(const PolicyParams& params, std::span<const RewardRecord> records) {
  if (records.empty()) throw UndefinedMetric("selected reward over no records is undefined");
  double total = 0.0;
  for (const auto& r : records) total += r.rewards[index_of(select_emotion(params, r.embedding.values))];
  return total / static_cast<double>(records.size());
}

TrainResult train(const RewardDataset& cache, const TrainConfig& config) {
  config.validate();
  if (cache.records.empty()) throw UndefinedMetric("cannot train on an empty reward cache");
  cache.check_invariants();

  const std::size_t n = cache.records.size();
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(n)));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  if (train_idx.empty()) throw ConfigError("validation split leaves no training records");

  std::vector<PolicyExample> examples(n);
  for (std::size_t i = 0; i < n; ++i) {
    examples[i].state = cache.records[i].embedding.values;
    examples[i].target = soft_targets(cache.records[i].rewards, config.temperature).weights;
  }
  std::vector<RewardRecord> val_records;
  for (std::size_t i : (val_idx.empty() ? train_idx : val_idx)) val_records.push_back(cache.records[i]);
  std::vector<PolicyExample> train_examples;
  for (std::size_t i : train_idx) train_examples.push_back(examples[i]);

  TrainResult result;
  result.train_size = train_idx.size();
  result.validation_size = val_idx.size();
  result.params = PolicyParams::initialize(static_cast<Eigen::Index>(cache.dim()), config.hidden, config.seed,
                                             config.init_scale);

  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> perm(train_examples.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<PolicyExample> batch;
  std::optional<Adam> adam;
  if (config.optimizer == "adam") adam.emplace(result.params);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t start = 0; start < perm.size(); start += bs) {
      const std::size_t end = std::min(perm.size(), start + bs);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_examples[perm[i]]);
      PolicyGradients g = gradients(result.params, batch);
      const double scale = 1.0 / static_cast<double>(batch.size());
      g.w1 *= scale;
      g.b1 *= scale;
      g.w2 *= scale;
      g.b2 *= scale;
      if (adam) {
        adam->step(result.params, g, config.learning_rate);
      } else {
        result.params.w1 -= config.learning_rate * g.w1;
        result.params.b1 -= config.learning_rate * g.b1;
        result.params.w2 -= config.learning_rate * g.w2;
        result.params.b2 -= config.learning_rate * g.b2;
      }
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss(result.params, train_examples);
    if (!std::isfinite(entry.train_loss)) {
      throw TrainingDiverged("training loss became non-finite at epoch " + std::to_string(epoch) +
                             "; the learning rate (" + std::to_string(config.learning_rate) + ") is likely too large");
    }
    entry.validation_expected_reward = expected_reward(result.params, val_records);
    result.log.push_back(entry);
  }
  return result;
}

// ---- checkpoints ---------------------------------------------------------------

json checkpoint_json(const PolicyParams& params, const std::string& encoder_id, const TrainConfig& config) {
  json order = json::array();
  for (Emotion e : kEmotions) order.push_back(std::string(to_string(e)));
  return json{{"shapes", {{"input_dim", params.input_dim()}, {"hidden", params.hidden_dim()}, {"K", kNumEmotions}}},
              {"W1", matrix_json(params.w1)},
              {"b1", vector_json(params.b1)},
              {"W2", matrix_json(params.w2)},
              {"b2", vector_json(params.b2)},
              {"activation_id", params.activation_id},
              {"seed", params.seed},
              {"encoder_id", encoder_id},
              {"emotion_order", order},
              {"config", config.to_json()}};
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params, const std::string& encoder_id,
                     const TrainConfig& config) {
  write_file_atomic(path, checkpoint_json(params, encoder_id, config).dump() + "\n");
}

Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint c;
  const auto& shapes = j.at("shapes");
  const auto d = shapes.at("input_dim").get<Eigen::Index>();
  const auto h = shapes.at("hidden").get<Eigen::Index>();
  if (shapes.at("K").get<std::size_t>() != kNumEmotions) throw ShapeError("checkpoint must have K = 6 outputs");
  std::size_t k = 0;
  for (const auto& label : j.at("emotion_order")) {
    if (parse_emotion(label.get<std::string>()) != emotion_at(k++)) {
      throw ConfigError("checkpoint emotion order differs from the canonical order");
    }
  }
  const auto K = static_cast<Eigen::Index>(kNumEmotions);
  c.params.w1 = matrix_from_json(j.at("W1"), h, d);
  c.params.b1 = vector_from_json(j.at("b1"), h);
  c.params.w2 = matrix_from_json(j.at("W2"), K, h);
  c.params.b2 = vector_from_json(j.at("b2"), K);
  c.params.activation_id = j.at("activation_id").get<std::string>();
  if (c.params.activation_id != "relu") throw ConfigError("unsupported activation '" + c.params.activation_id + "'");
  c.params.seed = j.at("seed").get<std::uint64_t>();
  c.params.check();
  c.encoder_id = j.at("encoder_id").get<std::string>();
  c.config = TrainConfig::from_json(j.at("config"));
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw UpstreamMissing("policy checkpoint " + path.string() + " not found", "train");
  return checkpoint_from_json(read_json_file(path));
}

}  // namespace emoprompt
