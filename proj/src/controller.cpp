#include "amenable/controller.hpp"

#include <algorithm>
#include <cmath>

#include "amenable/checkpoint.hpp"
#include "amenable/errors.hpp"

namespace amenable {

using nlohmann::json;

namespace {
constexpr double kScoreClamp = 1e-6;

double clamp_score(double h) {
  return std::clamp(h, kScoreClamp, 1.0 - kScoreClamp);
}
}  // namespace

void Controller::build_layers() {
  const int hw = arch_.height * arch_.width;
  std::vector<int> enc_sizes = {hw};
  enc_sizes.insert(enc_sizes.end(), arch_.encoder.begin(), arch_.encoder.end());
  std::vector<nn::Act> enc_acts(arch_.encoder.size(), nn::Act::relu);
  encoder_ = nn::Mlp(enc_sizes, enc_acts, 0);
  std::size_t off = encoder_.param_size();
  int embed = arch_.encoder.back();
  if (arch_.recurrent) {
    lstm_ = nn::LstmCell{embed + 3, arch_.hidden_dim, off};
    off += lstm_.size();
    head_ = nn::Mlp({arch_.hidden_dim, 1}, {nn::Act::identity}, off);
  } else {
    head_ = nn::Mlp({embed, 1}, {nn::Act::identity}, off);
  }
  off += head_.param_size();
  params_.assign(off, 0.0f);
}

Controller Controller::create(const ControllerArch& arch, Rng& init_rng) {
  if (arch.encoder.empty())
    throw MisuseError("controller needs at least one encoder stage");
  Controller c;
  c.arch_ = arch;
  c.build_layers();
  c.encoder_.init(c.params_, init_rng);
  if (arch.recurrent) c.lstm_.init(c.params_, init_rng);
  c.head_.init(c.params_, init_rng);
  return c;
}

ControllerMemory Controller::make_memory() const {
  ControllerMemory m;
  if (arch_.recurrent) {
    m.h.assign(arch_.hidden_dim, 0.0);
    m.c.assign(arch_.hidden_dim, 0.0);
  }
  return m;
}

void Controller::check_memory(const ControllerMemory& m) const {
  if (static_cast<int>(m.h.size()) != arch_.hidden_dim ||
      static_cast<int>(m.c.size()) != arch_.hidden_dim)
    throw MisuseError("controller memory dimension mismatch");
}

double Controller::score(std::span<const float> image) const {
  if (arch_.recurrent)
    throw MisuseError("score() called on a recurrent controller");
  std::vector<double> x(image.begin(), image.end());
  std::vector<double> embed, logit;
  encoder_.forward(params_, x, embed);
  head_.forward(params_, embed, logit);
  return nn::sigmoid(logit[0]);
}

double Controller::score_traced(std::span<const float> image,
                                FfTrace& trace) const {
  if (arch_.recurrent)
    throw MisuseError("score_traced() called on a recurrent controller");
  std::vector<double> x(image.begin(), image.end());
  std::vector<double> embed, logit;
  encoder_.forward(params_, x, embed, &trace.enc);
  head_.forward(params_, embed, logit, &trace.head);
  trace.logit = logit[0];
  trace.score = nn::sigmoid(logit[0]);
  return trace.score;
}

void Controller::backward_ff(const FfTrace& trace, double dscore,
                             std::span<double> grad) const {
  double s = trace.score;
  double dlogit = dscore * s * (1.0 - s);
  std::vector<double> dl = {dlogit};
  std::vector<double> dembed;
  head_.backward(params_, trace.head, dl, grad, &dembed);
  encoder_.backward(params_, trace.enc, dembed, grad);
}

std::pair<double, ControllerMemory> Controller::score_recurrent(
    const ControllerMemory& memory, std::span<const float> image,
    const StepContext& ctx) const {
  if (!arch_.recurrent)
    throw MisuseError("score_recurrent() called on a feed-forward controller");
  ControllerMemory next = memory;
  RecTrace trace;
  double s = score_recurrent_traced(next, image, ctx, trace);
  return {s, std::move(next)};
}

double Controller::score_recurrent_traced(ControllerMemory& memory,
                                          std::span<const float> image,
                                          const StepContext& ctx,
                                          RecTrace& trace) const {
  if (!arch_.recurrent)
    throw MisuseError("score_recurrent() called on a feed-forward controller");
  check_memory(memory);
  std::vector<double> x(image.begin(), image.end());
  std::vector<double> embed;
  encoder_.forward(params_, x, embed, &trace.enc);
  std::vector<double> cell_in(embed);
  cell_in.push_back(ctx.prev_action);
  cell_in.push_back(ctx.prev_reward);
  cell_in.push_back(ctx.prev_done);
  std::vector<double> h_new(arch_.hidden_dim), c_new(arch_.hidden_dim);
  lstm_.forward(params_, cell_in, memory.h, memory.c, h_new, c_new,
                &trace.cell);
  std::vector<double> logit;
  head_.forward(params_, h_new, logit, &trace.head);
  trace.logit = logit[0];
  trace.score = nn::sigmoid(logit[0]);
  memory.h = std::move(h_new);
  memory.c = std::move(c_new);
  return trace.score;
}

void Controller::backward_recurrent(const RecTrace& trace, double dscore,
                                    std::span<double> grad,
                                    std::vector<double>& dh,
                                    std::vector<double>& dc) const {
  double s = trace.score;
  double dlogit = dscore * s * (1.0 - s);
  std::vector<double> dl = {dlogit};
  std::vector<double> dh_head;
  head_.backward(params_, trace.head, dl, grad, &dh_head);
  for (int i = 0; i < arch_.hidden_dim; ++i) dh[i] += dh_head[i];

  std::vector<double> dcell_in(trace.cell.x.size(), 0.0);
  std::vector<double> dh_prev(arch_.hidden_dim, 0.0);
  std::vector<double> dc_prev(arch_.hidden_dim, 0.0);
  lstm_.backward(params_, trace.cell, dh, dc, grad, dcell_in, dh_prev, dc_prev);
  // strip the (a, r, d) tail; the remainder flows into the encoder
  std::vector<double> dembed(dcell_in.begin(), dcell_in.end() - 3);
  encoder_.backward(params_, trace.enc, dembed, grad);
  dh = std::move(dh_prev);
  dc = std::move(dc_prev);
}

void Controller::save(const std::string& path) const {
  json header;
  header["kind"] = "controller";
  header["steps"] = updates;
  header["arch"] = {{"height", arch_.height},
                    {"width", arch_.width},
                    {"encoder", arch_.encoder},
                    {"recurrent", arch_.recurrent},
                    {"hidden_dim", arch_.hidden_dim}};
  write_checkpoint(path, header, params_);
}

Controller Controller::load(const std::string& path) {
  auto [header, weights] = read_checkpoint(path);
  if (header.value("kind", "") != "controller")
    throw ParseError("checkpoint is not a controller: " + path);
  Controller c;
  const auto& a = header.at("arch");
  c.arch_.height = a.at("height").get<int>();
  c.arch_.width = a.at("width").get<int>();
  c.arch_.encoder = a.at("encoder").get<std::vector<int>>();
  c.arch_.recurrent = a.at("recurrent").get<bool>();
  c.arch_.hidden_dim = a.at("hidden_dim").get<int>();
  c.build_layers();
  if (weights.size() != c.params_.size())
    throw ParseError("checkpoint weight count does not match architecture");
  c.params_ = std::move(weights);
  c.updates = header.at("steps").get<long long>();
  return c;
}

std::vector<int> sample_actions(std::span<const double> scores, Rng& rng) {
  std::vector<int> actions(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    actions[i] = rng.bernoulli(scores[i]) ? 1 : 0;
  return actions;
}

double log_prob_single(double score, int action) {
  double h = clamp_score(score);
  return action ? std::log(h) : std::log1p(-h);
}

double log_prob(std::span<const double> scores, std::span<const int> actions) {
  if (scores.size() != actions.size())
    throw MisuseError("log_prob: scores/actions size mismatch");
  double lp = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    lp += log_prob_single(scores[i], actions[i]);
  return lp;
}

}  // namespace amenable
