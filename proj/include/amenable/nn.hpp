#ifndef AMENABLE_NN_HPP_
#define AMENABLE_NN_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "amenable/rng.hpp"

namespace amenable::nn {

enum class Act { identity, relu, sigmoid, tanh_act };

// numerically stable logistic
double sigmoid(double x);

// Layers are views into one flat float parameter vector owned by the
// enclosing network; all math runs in double. Gradients accumulate into a
// matching flat double vector.

struct Dense {
  int in = 0;
  int out = 0;
  Act act = Act::identity;
  std::size_t offset = 0;  // start of [W(out×in) row-major | b(out)]

  std::size_t size() const {
    return static_cast<std::size_t>(in) * out + out;
  }
  void init(std::span<float> params, Rng& rng) const;
  // y = act(W x + b); pre (size out) may be null when no backward follows
  void forward(std::span<const float> params, std::span<const double> x,
               std::span<double> y, std::span<double> pre) const;
  // dy is w.r.t. post-activation output; dx may be empty
  void backward(std::span<const float> params, std::span<const double> x,
                std::span<const double> pre, std::span<const double> dy,
                std::span<double> grad, std::span<double> dx) const;
};

// Multi-layer perceptron over Dense blocks sharing the flat parameter vector.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> sizes, std::vector<Act> acts, std::size_t offset = 0);

  std::size_t param_size() const { return param_size_; }
  std::size_t offset() const { return offset_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  const std::vector<Dense>& layers() const { return layers_; }

  void init(std::span<float> params, Rng& rng) const;

  struct Trace {
    // inputs[l] feeds layer l; pre[l] is its pre-activation
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> pre;
  };

  void forward(std::span<const float> params, std::span<const double> x,
               std::vector<double>& out, Trace* trace = nullptr) const;
  // accumulates into grad; dx (size input) written when non-null
  void backward(std::span<const float> params, const Trace& trace,
                std::span<const double> dout, std::span<double> grad,
                std::vector<double>* dx = nullptr) const;

 private:
  std::vector<int> sizes_;
  std::vector<Dense> layers_;
  std::size_t offset_ = 0;
  std::size_t param_size_ = 0;
};

// 3x3 same-padding convolution on an h×w grid.
struct Conv3x3 {
  int in_ch = 1;
  int out_ch = 1;
  int h = 0;
  int w = 0;
  Act act = Act::identity;
  std::size_t offset = 0;  // [W(out_ch×in_ch×3×3) | b(out_ch)]

  std::size_t size() const {
    return static_cast<std::size_t>(out_ch) * in_ch * 9 + out_ch;
  }
  void init(std::span<float> params, Rng& rng) const;
  void forward(std::span<const float> params, std::span<const double> x,
               std::span<double> y, std::span<double> pre) const;
  void backward(std::span<const float> params, std::span<const double> x,
                std::span<const double> pre, std::span<const double> dy,
                std::span<double> grad, std::span<double> dx) const;
};

// Single LSTM cell; gate order [i f g o]; layout [Wx(4H×in) | Wh(4H×H) | b(4H)].
struct LstmCell {
  int input = 0;
  int hidden = 0;
  std::size_t offset = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(4) * hidden * (input + hidden + 1);
  }
  void init(std::span<float> params, Rng& rng) const;  // forget bias = 1

  struct Cache {
    std::vector<double> x, h_prev, c_prev;
    std::vector<double> gate_i, gate_f, gate_g, gate_o;  // post-activation
    std::vector<double> c_new, tanh_c;
  };

  void forward(std::span<const float> params, std::span<const double> x,
               std::span<const double> h_prev, std::span<const double> c_prev,
               std::span<double> h_new, std::span<double> c_new,
               Cache* cache = nullptr) const;
  // accumulates into grad and into dx/dh_prev/dc_prev (all must be sized)
  void backward(std::span<const float> params, const Cache& cache,
                std::span<const double> dh_new, std::span<const double> dc_new,
                std::span<double> grad, std::span<double> dx,
                std::span<double> dh_prev, std::span<double> dc_prev) const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  long long step = 0;
  void ensure(std::size_t n);
};

// One Adam step. An all-zero gradient is a no-op (no parameter, moment or
// step-count change); returns whether a step was taken.
bool adam_step(std::span<float> params, std::span<const double> grad,
               AdamState& state, const AdamConfig& cfg);

void sgd_step(std::span<float> params, std::span<const double> grad, double lr);

void softmax(std::span<const double> logits, std::span<double> probs);

}  // namespace amenable::nn

#endif  // AMENABLE_NN_HPP_
