#include "amenable/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "amenable/checkpoint.hpp"
#include "amenable/errors.hpp"

namespace amenable {

using nlohmann::json;

double one_minus_accuracy(std::span<const double> probs, int label) {
  int argmax = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[argmax]) argmax = static_cast<int>(i);
  return argmax == label ? 0.0 : 1.0;
}

double one_minus_dice(std::span<const double> probs,
                      std::span<const std::uint8_t> mask) {
  constexpr double kSmooth = 1e-7;
  double inter = 0.0, total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    int p = probs[i] > 0.5 ? 1 : 0;
    int m = mask[i];
    inter += p * m;
    total += p + m;
  }
  double dice = (2.0 * inter + kSmooth) / (total + kSmooth);
  return 1.0 - dice;
}

void TaskPredictor::build_layers() {
  const int hw = arch_.height * arch_.width;
  if (arch_.kind == TaskKind::classification) {
    mlp_ = nn::Mlp({hw, arch_.hidden, arch_.classes},
                   {nn::Act::relu, nn::Act::identity}, 0);
    params_.assign(mlp_.param_size(), 0.0f);
  } else {
    conv1_ = nn::Conv3x3{1, arch_.conv_channels, arch_.height, arch_.width,
                         nn::Act::relu, 0};
    conv2_ = nn::Conv3x3{arch_.conv_channels, 1, arch_.height, arch_.width,
                         nn::Act::identity, conv1_.size()};
    params_.assign(conv1_.size() + conv2_.size(), 0.0f);
  }
}

TaskPredictor TaskPredictor::create(const PredictorArch& arch, Rng& init_rng) {
  TaskPredictor p;
  p.arch_ = arch;
  p.build_layers();
  if (arch.kind == TaskKind::classification) {
    p.mlp_.init(p.params_, init_rng);
  } else {
    p.conv1_.init(p.params_, init_rng);
    p.conv2_.init(p.params_, init_rng);
  }
  return p;
}

std::vector<double> TaskPredictor::predict(std::span<const float> image) const {
  const int hw = arch_.height * arch_.width;
  if (static_cast<int>(image.size()) != hw)
    throw MisuseError("predict: image shape mismatch");
  std::vector<double> x(image.begin(), image.end());
  if (arch_.kind == TaskKind::classification) {
    std::vector<double> logits;
    mlp_.forward(params_, x, logits);
    std::vector<double> probs(logits.size());
    nn::softmax(logits, probs);
    return probs;
  }
  std::vector<double> mid(static_cast<std::size_t>(arch_.conv_channels) * hw);
  std::vector<double> logits(hw);
  conv1_.forward(params_, x, mid, {});
  conv2_.forward(params_, mid, logits, {});
  for (auto& v : logits) v = nn::sigmoid(v);
  return logits;
}

std::vector<double> TaskPredictor::weighted_loss_gradient(
    const Dataset& ds, std::span<const int> indices,
    std::span<const double> weights, double* loss_out) const {
  if (indices.empty()) throw MisuseError("weighted step needs a nonempty batch");
  if (indices.size() != weights.size())
    throw MisuseError("batch/weight size mismatch");
  const int hw = arch_.height * arch_.width;
  const double inv_b = 1.0 / static_cast<double>(indices.size());
  std::vector<double> grad(params_.size(), 0.0);
  double loss = 0.0;

  for (std::size_t bi = 0; bi < indices.size(); ++bi) {
    double c = weights[bi];
    if (c < 0.0 || c > 1.0)
      throw MisuseError("sample weight outside [0,1]");
    if (c == 0.0) continue;
    const Sample& s = ds.samples[indices[bi]];
    auto img = ds.image_of(s);
    std::vector<double> x(img.begin(), img.end());

    if (arch_.kind == TaskKind::classification) {
      nn::Mlp::Trace trace;
      std::vector<double> logits;
      mlp_.forward(params_, x, logits, &trace);
      std::vector<double> probs(logits.size());
      nn::softmax(logits, probs);
      int y = s.class_label;
      loss += c * inv_b * -std::log(std::max(probs[y], 1e-300));
      std::vector<double> dlogits(probs.begin(), probs.end());
      dlogits[y] -= 1.0;
      for (auto& d : dlogits) d *= c * inv_b;
      mlp_.backward(params_, trace, dlogits, grad);
    } else {
      std::vector<double> mid(static_cast<std::size_t>(arch_.conv_channels) * hw);
      std::vector<double> pre1(mid.size());
      std::vector<double> logits(hw), pre2(hw);
      conv1_.forward(params_, x, mid, pre1);
      conv2_.forward(params_, mid, logits, pre2);
      const double pixel_scale = c * inv_b / hw;
      std::vector<double> dlogits(hw);
      for (int i = 0; i < hw; ++i) {
        double p = nn::sigmoid(logits[i]);
        double m = s.mask[i];
        // BCE via logits, numerically stable
        double l = std::max(logits[i], 0.0) - logits[i] * m +
                   std::log1p(std::exp(-std::abs(logits[i])));
        loss += pixel_scale * l;
        dlogits[i] = pixel_scale * (p - m);
      }
      std::vector<double> dmid(mid.size(), 0.0);
      conv2_.backward(params_, mid, pre2, dlogits, grad, dmid);
      conv1_.backward(params_, x, pre1, dmid, grad, {});
    }
  }
  if (!std::isfinite(loss))
    throw NumericError("non-finite weighted loss in predictor step");
  if (loss_out) *loss_out = loss;
  return grad;
}

double TaskPredictor::weighted_loss(const Dataset& ds,
                                    std::span<const int> indices,
                                    std::span<const double> weights) const {
  double loss = 0.0;
  weighted_loss_gradient(ds, indices, weights, &loss);
  return loss;
}

void TaskPredictor::weighted_train_step(const Dataset& ds,
                                        std::span<const int> indices,
                                        std::span<const double> weights,
                                        double lr) {
  bool all_zero = std::all_of(weights.begin(), weights.end(),
                              [](double c) { return c == 0.0; });
  if (indices.empty() || all_zero) {
    if (indices.empty()) throw MisuseError("weighted step needs a nonempty batch");
    return;  // zero gradient: no step
  }
  auto grad = weighted_loss_gradient(ds, indices, weights);
  if (optimizer == OptimizerKind::adam) {
    nn::AdamConfig cfg = adam_cfg;
    cfg.lr = lr;
    if (nn::adam_step(params_, grad, adam_, cfg)) ++steps_;
  } else {
    nn::sgd_step(params_, grad, lr);
    ++steps_;
  }
}

double TaskPredictor::sample_metric(const Dataset& ds, int index) const {
  const Sample& s = ds.samples[index];
  auto probs = predict(ds.image_of(s));
  if (arch_.kind == TaskKind::classification)
    return one_minus_accuracy(probs, s.class_label);
  return one_minus_dice(probs, s.mask);
}

std::vector<double> TaskPredictor::evaluate_metric(
    const Dataset& ds, std::span<const int> indices) const {
  if (indices.empty()) throw MisuseError("evaluate_metric needs a nonempty set");
  std::vector<double> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(sample_metric(ds, i));
  return out;
}

void TaskPredictor::save(const std::string& path) const {
  json header;
  header["kind"] = "predictor";
  header["steps"] = steps_;
  header["arch"] = {{"task", to_string(arch_.kind)},
                    {"height", arch_.height},
                    {"width", arch_.width},
                    {"hidden", arch_.hidden},
                    {"classes", arch_.classes},
                    {"conv_channels", arch_.conv_channels}};
  write_checkpoint(path, header, params_);
}

TaskPredictor TaskPredictor::load(const std::string& path) {
  auto [header, weights] = read_checkpoint(path);
  if (header.value("kind", "") != "predictor")
    throw ParseError("checkpoint is not a predictor: " + path);
  TaskPredictor p;
  const auto& a = header.at("arch");
  p.arch_.kind = task_kind_from_string(a.at("task").get<std::string>());
  p.arch_.height = a.at("height").get<int>();
  p.arch_.width = a.at("width").get<int>();
  p.arch_.hidden = a.at("hidden").get<int>();
  p.arch_.classes = a.at("classes").get<int>();
  p.arch_.conv_channels = a.at("conv_channels").get<int>();
  p.build_layers();
  if (weights.size() != p.params_.size())
    throw ParseError("checkpoint weight count does not match architecture");
  p.params_ = std::move(weights);
  p.steps_ = header.at("steps").get<long long>();
  return p;
}

std::vector<float> reptile_update(std::span<const float> w_base,
                                  std::span<const float> w_new,
                                  double epsilon) {
  if (w_base.size() != w_new.size())
    throw MisuseError("reptile_update: parameter count mismatch");
  if (epsilon < 0.0 || epsilon > 1.0)
    throw MisuseError("reptile_update: epsilon outside [0,1]");
  std::vector<float> out(w_base.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double base = w_base[i];
    out[i] = static_cast<float>(base + epsilon * (static_cast<double>(w_new[i]) - base));
  }
  return out;
}

double anneal_epsilon(int trial_index, int total_trials) {
  if (total_trials < 1 || trial_index < 0 || trial_index > total_trials)
    throw MisuseError("anneal_epsilon: index outside [0, total]");
  return 1.0 - static_cast<double>(trial_index) / total_trials;
}

}  // namespace amenable
