#pragma once

// Extended-precision reference implementations shared by the unit tests and the
// acceptance binary. Written from the formulas, not from the library code.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "emoprompt/policy.hpp"

namespace oracle {

using LD = long double;
using Dist = std::array<LD, 6>;

/// exp((r_k - mean r)/tau) / sum_j exp((r_j - mean r)/tau), no stabilisation tricks.
inline Dist soft_targets(std::span<const double> r, LD tau) {
  LD mean = 0;
  for (double x : r) mean += x;
  mean /= 6;
  Dist w{};
  LD z = 0;
  for (int k = 0; k < 6; ++k) {
    w[k] = std::exp((static_cast<LD>(r[k]) - mean) / tau);
    z += w[k];
  }
  for (auto& x : w) x /= z;
  return w;
}

inline Dist logits(const emoprompt::PolicyParams& p, std::span<const double> s) {
  const auto h = p.w1.rows();
  const auto d = p.w1.cols();
  std::vector<LD> a(static_cast<std::size_t>(h));
  for (Eigen::Index i = 0; i < h; ++i) {
    LD acc = p.b1(i);
    for (Eigen::Index j = 0; j < d; ++j) acc += static_cast<LD>(p.w1(i, j)) * s[static_cast<std::size_t>(j)];
    a[static_cast<std::size_t>(i)] = acc > 0 ? acc : 0;
  }
  Dist z{};
  for (int k = 0; k < 6; ++k) {
    LD acc = p.b2(k);
    for (Eigen::Index i = 0; i < h; ++i) acc += static_cast<LD>(p.w2(k, i)) * a[static_cast<std::size_t>(i)];
    z[k] = acc;
  }
  return z;
}

inline Dist forward(const emoprompt::PolicyParams& p, std::span<const double> s) {
  Dist z = oracle::logits(p, s);
  LD sum = 0;
  for (auto& x : z) {
    x = std::exp(x);
    sum += x;
  }
  for (auto& x : z) x /= sum;
  return z;
}

inline LD loss(const emoprompt::PolicyParams& p, std::span<const emoprompt::PolicyExample> batch) {
  LD total = 0;
  for (const auto& ex : batch) {
    const Dist pi = oracle::forward(p, ex.state);
    for (int k = 0; k < 6; ++k) total -= ex.target[k] * std::log(pi[k]);
  }
  return total;
}

/// Smallest |pre-activation| over the batch.
inline double kink_distance(const emoprompt::PolicyParams& p, std::span<const emoprompt::PolicyExample> batch) {
  double best = INFINITY;
  for (const auto& ex : batch) {
    const Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(ex.state.data(), static_cast<Eigen::Index>(ex.state.size()));
    const Eigen::VectorXd a = p.w1 * s + p.b1;
    best = std::min(best, a.cwiseAbs().minCoeff());
  }
  return best;
}

struct GradCheck {
  double max_rel_error = 0.0;
  int resampled = 0;
};

/// Random (params, batch-of-4) draws; analytic gradients against central
/// differences of the 64-bit loss. Relative error uses max(|a|, |n|, 1e-3) as the
/// denominator so that entries which are zero up to round-off do not dominate.
inline GradCheck finite_difference_check(int draws, std::uint64_t seed, double step = 1e-5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GradCheck out;
  const Eigen::Index d = 5;
  const Eigen::Index h = 8;
  for (int draw = 0; draw < draws;) {
    auto params = emoprompt::PolicyParams::initialize(d, h, rng(), 1.0);
    params.b1 = params.b1.unaryExpr([&](double) { return 0.3 * normal(rng); });
    std::vector<emoprompt::PolicyExample> batch(4);
    for (auto& ex : batch) {
      ex.state.resize(static_cast<std::size_t>(d));
      for (double& x : ex.state) x = normal(rng);
      std::array<double, 6> r{};
      for (double& x : r) x = unit(rng) < 0.4 ? 1.0 : 0.0;
      ex.target = emoprompt::soft_targets(std::span<const double, 6>(r), 1.0).weights;
    }
    if (kink_distance(params, batch) < 1e-6) {
      ++out.resampled;
      continue;
    }
    ++draw;
    const auto g = emoprompt::gradients(params, batch);
    auto check_block = [&](Eigen::Ref<Eigen::MatrixXd> block, const Eigen::MatrixXd& analytic) {
      for (Eigen::Index i = 0; i < block.rows(); ++i) {
        for (Eigen::Index j = 0; j < block.cols(); ++j) {
          const double orig = block(i, j);
          block(i, j) = orig + step;
          const double up = emoprompt::loss(params, batch);
          block(i, j) = orig - step;
          const double down = emoprompt::loss(params, batch);
          block(i, j) = orig;
          const double numeric = (up - down) / (2 * step);
          const double a = analytic(i, j);
          const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
          out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
        }
      }
    };
    check_block(params.w1, g.w1);
    check_block(params.b1, g.b1);
    check_block(params.w2, g.w2);
    check_block(params.b2, g.b2);
  }
  return out;
}

}  // namespace oracle
