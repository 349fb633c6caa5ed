#ifndef AMENABLE_PREDICTOR_HPP_
#define AMENABLE_PREDICTOR_HPP_

#include <span>
#include <string>
#include <vector>

#include "amenable/data.hpp"
#include "amenable/nn.hpp"
#include "amenable/rng.hpp"

namespace amenable {

enum class LossKind { cross_entropy, pixelwise_cross_entropy };
enum class MetricKind { one_minus_accuracy, one_minus_dice };
enum class OptimizerKind { adam, sgd };

// L_f (training loss) and L_h (bounded validation metric, lower is better).
struct TaskSpec {
  TaskKind kind = TaskKind::classification;
  LossKind loss = LossKind::cross_entropy;
  MetricKind metric = MetricKind::one_minus_accuracy;

  static TaskSpec for_task(TaskKind k) {
    if (k == TaskKind::classification)
      return {k, LossKind::cross_entropy, MetricKind::one_minus_accuracy};
    return {k, LossKind::pixelwise_cross_entropy, MetricKind::one_minus_dice};
  }
};

struct PredictorArch {
  TaskKind kind = TaskKind::classification;
  int height = 16;
  int width = 16;
  int hidden = 32;         // classification: flatten -> dense(hidden) -> classes
  int classes = 2;
  int conv_channels = 8;   // segmentation: conv3x3 -> conv3x3 -> sigmoid

  bool operator==(const PredictorArch&) const = default;
};

// metric helpers (exposed for direct testing)
double one_minus_accuracy(std::span<const double> probs, int label);
double one_minus_dice(std::span<const double> probs,
                      std::span<const std::uint8_t> mask);

class TaskPredictor {
 public:
  TaskPredictor() = default;
  static TaskPredictor create(const PredictorArch& arch, Rng& init_rng);

  const PredictorArch& arch() const { return arch_; }
  std::vector<float>& params() { return params_; }
  const std::vector<float>& params() const { return params_; }
  long long steps_taken() const { return steps_; }

  OptimizerKind optimizer = OptimizerKind::adam;
  nn::AdamConfig adam_cfg;  // lr is taken from the per-step argument

  // classification: probability vector over classes (sums to 1);
  // segmentation: per-pixel probabilities in [0,1]
  std::vector<double> predict(std::span<const float> image) const;

  // One optimizer step on (1/B) * sum_i c_i * L_f(f(x_i;w), y_i).
  // All-zero weights leave params, moments and step count untouched.
  void weighted_train_step(const Dataset& ds, std::span<const int> indices,
                           std::span<const double> weights, double lr);

  double weighted_loss(const Dataset& ds, std::span<const int> indices,
                       std::span<const double> weights) const;
  std::vector<double> weighted_loss_gradient(const Dataset& ds,
                                             std::span<const int> indices,
                                             std::span<const double> weights,
                                             double* loss_out = nullptr) const;

  // per-sample L_h in [0,1]
  double sample_metric(const Dataset& ds, int index) const;
  std::vector<double> evaluate_metric(const Dataset& ds,
                                      std::span<const int> indices) const;

  void save(const std::string& path) const;
  static TaskPredictor load(const std::string& path);

 private:
  PredictorArch arch_;
  nn::Mlp mlp_;                  // classification head (identity logits)
  nn::Conv3x3 conv1_, conv2_;    // segmentation stages
  std::vector<float> params_;
  nn::AdamState adam_;
  long long steps_ = 0;

  void build_layers();
};

// w' = w_base + epsilon * (w_new - w_base), elementwise
std::vector<float> reptile_update(std::span<const float> w_base,
                                  std::span<const float> w_new, double epsilon);

// linear anneal: 1 at trial 0 down to 0 at trial == total
double anneal_epsilon(int trial_index, int total_trials);

}  // namespace amenable

#endif  // AMENABLE_PREDICTOR_HPP_
