#ifndef AMENABLE_CONTROLLER_HPP_
#define AMENABLE_CONTROLLER_HPP_

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "amenable/nn.hpp"
#include "amenable/rng.hpp"

namespace amenable {

struct ControllerArch {
  int height = 16;
  int width = 16;
  std::vector<int> encoder = {32, 32, 16};  // dense stages, relu
  bool recurrent = false;
  int hidden_dim = 64;  // recurrent only

  bool operator==(const ControllerArch&) const = default;
};

// Recurrent state; reset() zeroes both vectors.
struct ControllerMemory {
  std::vector<double> h, c;
  void reset() {
    std::fill(h.begin(), h.end(), 0.0);
    std::fill(c.begin(), c.end(), 0.0);
  }
  bool operator==(const ControllerMemory&) const = default;
};

// Previous-step inputs threaded into the recurrent controller.
struct StepContext {
  double prev_action = 0.0;  // {0,1}
  double prev_reward = 0.0;
  double prev_done = 0.0;    // {0,1}
};

class Controller {
 public:
  Controller() = default;
  static Controller create(const ControllerArch& arch, Rng& init_rng);

  const ControllerArch& arch() const { return arch_; }
  bool recurrent() const { return arch_.recurrent; }
  std::vector<float>& params() { return params_; }
  const std::vector<float>& params() const { return params_; }

  long long updates = 0;  // optimizer steps applied by the RL algorithm

  // amenability score in [0,1]; feed-forward controllers only
  double score(std::span<const float> image) const;

  ControllerMemory make_memory() const;
  // advances a copy of the memory; input memory untouched
  std::pair<double, ControllerMemory> score_recurrent(
      const ControllerMemory& memory, std::span<const float> image,
      const StepContext& ctx) const;

  // --- traced variants used by the policy-gradient updates ---

  struct FfTrace {
    nn::Mlp::Trace enc, head;
    double logit = 0.0, score = 0.0;
  };
  double score_traced(std::span<const float> image, FfTrace& trace) const;
  // accumulates dL/dparams given dL/dscore
  void backward_ff(const FfTrace& trace, double dscore,
                   std::span<double> grad) const;

  struct RecTrace {
    nn::Mlp::Trace enc, head;
    nn::LstmCell::Cache cell;
    double logit = 0.0, score = 0.0;
  };
  // advances memory in place, filling the trace
  double score_recurrent_traced(ControllerMemory& memory,
                                std::span<const float> image,
                                const StepContext& ctx, RecTrace& trace) const;
  // one reverse step of backprop-through-time over the sample stream:
  // dh/dc carry gradient w.r.t. this step's output state on entry and
  // hold gradient w.r.t. the previous state on exit
  void backward_recurrent(const RecTrace& trace, double dscore,
                          std::span<double> grad, std::vector<double>& dh,
                          std::vector<double>& dc) const;

  void save(const std::string& path) const;
  static Controller load(const std::string& path);

 private:
  ControllerArch arch_;
  nn::Mlp encoder_;
  nn::LstmCell lstm_;  // recurrent only
  nn::Mlp head_;       // -> 1 logit; sigmoid squashes to [0,1]
  std::vector<float> params_;

  void build_layers();
  void check_memory(const ControllerMemory& m) const;
};

// independent Bernoulli draws from the scores
std::vector<int> sample_actions(std::span<const double> scores, Rng& rng);

// joint Bernoulli log-likelihood; scores clamped to [1e-6, 1-1e-6]
double log_prob(std::span<const double> scores, std::span<const int> actions);
double log_prob_single(double score, int action);

}  // namespace amenable

#endif  // AMENABLE_CONTROLLER_HPP_
