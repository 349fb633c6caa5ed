#include "amenable/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "amenable/errors.hpp"

namespace amenable {

std::string to_string(RewardKind k) {
  switch (k) {
    case RewardKind::fixed_clean: return "fixed";
    case RewardKind::weighted: return "weighted";
    case RewardKind::selective: return "selective";
  }
  return "weighted";
}

RewardKind reward_kind_from_string(const std::string& s) {
  if (s == "fixed") return RewardKind::fixed_clean;
  if (s == "weighted") return RewardKind::weighted;
  if (s == "selective") return RewardKind::selective;
  throw ConfigError("unknown reward strategy: " + s);
}

double unclipped_reward(const RewardStrategy& strategy,
                        std::span<const double> losses,
                        std::span<const double> scores) {
  const std::size_t m = losses.size();
  if (m == 0) throw MisuseError("reward needs at least one validation sample");
  if (scores.size() != m)
    throw MisuseError("losses/scores size mismatch in reward");

  switch (strategy.kind) {
    case RewardKind::fixed_clean: {
      double sum = std::accumulate(losses.begin(), losses.end(), 0.0);
      return -sum / static_cast<double>(m);
    }
    case RewardKind::weighted: {
      double sum = 0.0;
      for (std::size_t j = 0; j < m; ++j) sum += losses[j] * scores[j];
      return -sum / static_cast<double>(m);
    }
    case RewardKind::selective: {
      if (strategy.s_rej < 0.0 || strategy.s_rej >= 1.0)
        throw ConfigError("selective reward needs s_rej in [0,1)");
      auto m_keep = static_cast<std::size_t>(
          std::floor((1.0 - strategy.s_rej) * static_cast<double>(m)));
      if (m_keep < 1)
        throw ConfigError("selective reward would keep zero samples (M' = 0)");
      std::vector<std::size_t> order(m);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         return scores[a] > scores[b];
                       });
      double sum = 0.0;
      for (std::size_t j = 0; j < m_keep; ++j) sum += losses[order[j]];
      return -sum / static_cast<double>(m_keep);
    }
  }
  throw MisuseError("unhandled reward kind");
}

double RewardClipper::clip(double r_tilde) {
  if (!std::isfinite(r_tilde))
    throw NumericError("non-finite raw reward in clipper");
  if (!initialized_) {
    initialized_ = true;
    running_mean_ = r_tilde;
    return 0.0;
  }
  double reward = r_tilde - running_mean_;
  running_mean_ = alpha_ * running_mean_ + (1.0 - alpha_) * r_tilde;
  return reward;
}

}  // namespace amenable
