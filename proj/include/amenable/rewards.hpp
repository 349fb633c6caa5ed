#ifndef AMENABLE_REWARDS_HPP_
#define AMENABLE_REWARDS_HPP_

#include <span>
#include <string>

namespace amenable {

enum class RewardKind { fixed_clean, weighted, selective };

std::string to_string(RewardKind k);
RewardKind reward_kind_from_string(const std::string& s);

struct RewardStrategy {
  RewardKind kind = RewardKind::weighted;
  double s_rej = 0.0;  // selective only, in [0,1)

  bool operator==(const RewardStrategy&) const = default;
};

// Raw (un-clipped) episode-step reward from per-sample validation losses and
// controller scores of the same samples. fixed_clean ignores the scores (the
// caller supplies a pre-curated clean set). selective averages the
// M' = floor((1-s_rej)*M) highest-scored samples, ties broken by index.
double unclipped_reward(const RewardStrategy& strategy,
                        std::span<const double> losses,
                        std::span<const double> scores);

// Baseline subtraction against a moving average:
//   reward_t = r_tilde_t - Rbar_{t-1},   Rbar_t = alpha*Rbar_{t-1} + (1-alpha)*r_tilde_t
// The first observation initializes Rbar (reward 0).
class RewardClipper {
 public:
  RewardClipper() = default;
  explicit RewardClipper(double alpha) : alpha_(alpha) {}

  double clip(double r_tilde);

  void reset() { initialized_ = false; running_mean_ = 0.0; }
  double alpha() const { return alpha_; }
  double running_mean() const { return running_mean_; }
  bool initialized() const { return initialized_; }
  // resume support
  void restore(double running_mean, bool initialized) {
    running_mean_ = running_mean;
    initialized_ = initialized;
  }

 private:
  double alpha_ = 0.9;
  double running_mean_ = 0.0;
  bool initialized_ = false;
};

}  // namespace amenable

#endif  // AMENABLE_REWARDS_HPP_
