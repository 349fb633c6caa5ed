#include "amenable/rl.hpp"

#include <algorithm>
#include <cmath>

#include "amenable/checkpoint.hpp"
#include "amenable/errors.hpp"

namespace amenable {

using nlohmann::json;

void Trajectory::validate() const {
  for (const auto& ep : episodes) {
    if (ep.steps.empty()) throw MisuseError("trajectory contains empty episode");
    int dones = 0;
    for (const auto& s : ep.steps) {
      if (!std::isfinite(s.reward) || !std::isfinite(s.r_tilde))
        throw NumericError("non-finite reward in trajectory");
      if (s.done) ++dones;
    }
    if (dones != 1 || !ep.steps.back().done)
      throw MisuseError("episode must end with exactly one done step");
  }
}

std::vector<double> discounted_returns(std::span<const double> rewards,
                                       double gamma) {
  if (rewards.empty())
    throw MisuseError("discounted_returns needs a nonempty reward list");
  std::vector<double> q(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    q[t] = acc;
  }
  return q;
}

StepContext episode_context(const Episode& ep, int t, int i) {
  if (i > 0) {
    const StepRecord& cur = ep.steps[t];
    StepContext ctx;
    ctx.prev_action = cur.actions[i - 1];
    if (t > 0) {
      ctx.prev_reward = ep.steps[t - 1].reward;
      ctx.prev_done = ep.steps[t - 1].done ? 1.0 : 0.0;
    } else {
      ctx.prev_reward = ep.entry_ctx.prev_reward;
      ctx.prev_done = ep.entry_ctx.prev_done;
    }
    return ctx;
  }
  if (t == 0) return ep.entry_ctx;
  const StepRecord& prev = ep.steps[t - 1];
  return {static_cast<double>(prev.actions.back()), prev.reward,
          prev.done ? 1.0 : 0.0};
}

void ValueNet::build_layers() {
  const int hw = height_ * width_;
  embed_ = nn::Mlp({hw, embed_dim_}, {nn::Act::relu}, 0);
  head_ = nn::Mlp({embed_dim_ + 1, hidden_, 1}, {nn::Act::relu, nn::Act::identity},
                  embed_.param_size());
  params_.assign(embed_.param_size() + head_.param_size(), 0.0f);
}

ValueNet ValueNet::create(int height, int width, int embed_dim, int hidden,
                          Rng& init_rng) {
  ValueNet v;
  v.height_ = height;
  v.width_ = width;
  v.embed_dim_ = embed_dim;
  v.hidden_ = hidden;
  v.build_layers();
  v.embed_.init(v.params_, init_rng);
  v.head_.init(v.params_, init_rng);
  return v;
}

double ValueNet::value(const Dataset& ds, std::span<const int> batch,
                       double val_metric, Trace* trace) const {
  if (batch.empty()) throw MisuseError("value() needs a nonempty batch");
  std::vector<double> pooled(embed_dim_, 0.0);
  if (trace) trace->embeds.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto img = ds.image_of(batch[i]);
    std::vector<double> x(img.begin(), img.end());
    std::vector<double> e;
    embed_.forward(params_, x, e, trace ? &trace->embeds[i] : nullptr);
    for (int k = 0; k < embed_dim_; ++k) pooled[k] += e[k];
  }
  for (auto& p : pooled) p /= static_cast<double>(batch.size());
  pooled.push_back(val_metric);
  std::vector<double> out;
  head_.forward(params_, pooled, out, trace ? &trace->head : nullptr);
  if (trace) trace->value = out[0];
  return out[0];
}

void ValueNet::backward(const Trace& trace, double dvalue,
                        std::span<double> grad) const {
  std::vector<double> dout = {dvalue};
  std::vector<double> dpooled;
  head_.backward(params_, trace.head, dout, grad, &dpooled);
  const double inv_b = 1.0 / static_cast<double>(trace.embeds.size());
  std::vector<double> dembed(dpooled.begin(), dpooled.end() - 1);
  for (auto& d : dembed) d *= inv_b;
  for (const auto& et : trace.embeds) embed_.backward(params_, et, dembed, grad);
}

void ValueNet::save(const std::string& path) const {
  json header;
  header["kind"] = "valuenet";
  header["arch"] = {{"height", height_},
                    {"width", width_},
                    {"embed_dim", embed_dim_},
                    {"hidden", hidden_}};
  write_checkpoint(path, header, params_);
}

ValueNet ValueNet::load(const std::string& path) {
  auto [header, weights] = read_checkpoint(path);
  if (header.value("kind", "") != "valuenet")
    throw ParseError("checkpoint is not a value net: " + path);
  ValueNet v;
  const auto& a = header.at("arch");
  v.height_ = a.at("height").get<int>();
  v.width_ = a.at("width").get<int>();
  v.embed_dim_ = a.at("embed_dim").get<int>();
  v.hidden_ = a.at("hidden").get<int>();
  v.build_layers();
  if (weights.size() != v.params_.size())
    throw ParseError("checkpoint weight count does not match architecture");
  v.params_ = std::move(weights);
  return v;
}

namespace {

struct EpisodeEval {
  // per step
  std::vector<ValueNet::Trace> value_traces;
  std::vector<double> values;
  std::vector<double> advantages;
  std::vector<double> returns;
  // per step, per sample
  std::vector<std::vector<double>> new_scores;
  std::vector<std::vector<Controller::FfTrace>> ff_traces;
  std::vector<std::vector<Controller::RecTrace>> rec_traces;
};

void gae(const Episode& ep, const std::vector<double>& values, double gamma,
         double lambda, std::vector<double>& advantages,
         std::vector<double>& returns) {
  const int t_max = static_cast<int>(ep.steps.size());
  advantages.assign(t_max, 0.0);
  returns.assign(t_max, 0.0);
  double acc = 0.0;
  for (int t = t_max - 1; t >= 0; --t) {
    double not_done = ep.steps[t].done ? 0.0 : 1.0;
    double next_v = t + 1 < t_max ? values[t + 1] : 0.0;
    double delta = ep.steps[t].reward + gamma * next_v * not_done - values[t];
    acc = delta + gamma * lambda * not_done * acc;
    advantages[t] = acc;
    if (!std::isfinite(acc))
      throw NumericError("non-finite advantage in PPO update");
    returns[t] = advantages[t] + values[t];
  }
}

EpisodeEval evaluate_episode(const Controller& controller,
                             const ValueNet& critic, const Episode& ep,
                             const Dataset& ds, const PPOConfig& cfg,
                             bool want_value_traces) {
  EpisodeEval ev;
  const int t_max = static_cast<int>(ep.steps.size());
  ev.values.resize(t_max);
  if (want_value_traces) ev.value_traces.resize(t_max);
  ev.new_scores.resize(t_max);
  if (controller.recurrent()) {
    ev.rec_traces.resize(t_max);
  } else {
    ev.ff_traces.resize(t_max);
  }

  ControllerMemory mem;
  if (controller.recurrent()) {
    mem = controller.make_memory();
    mem.h = ep.mem_h0;
    mem.c = ep.mem_c0;
  }
  for (int t = 0; t < t_max; ++t) {
    const StepRecord& step = ep.steps[t];
    ev.values[t] = critic.value(ds, step.batch, step.val_metric,
                                want_value_traces ? &ev.value_traces[t] : nullptr);
    const int b = static_cast<int>(step.batch.size());
    ev.new_scores[t].resize(b);
    if (controller.recurrent()) {
      ev.rec_traces[t].resize(b);
      for (int i = 0; i < b; ++i) {
        StepContext ctx = episode_context(ep, t, i);
        ev.new_scores[t][i] = controller.score_recurrent_traced(
            mem, ds.image_of(step.batch[i]), ctx, ev.rec_traces[t][i]);
      }
    } else {
      ev.ff_traces[t].resize(b);
      for (int i = 0; i < b; ++i)
        ev.new_scores[t][i] = controller.score_traced(
            ds.image_of(step.batch[i]), ev.ff_traces[t][i]);
    }
  }
  gae(ep, ev.values, cfg.gamma, cfg.gae_lambda, ev.advantages, ev.returns);
  return ev;
}

// d(log Bernoulli(a | clamp(h))) / dh, clamp treated as identity; the sigmoid
// derivative upstream vanishes at saturation so the product stays bounded
double dlogp_dscore(double h, int a) {
  double hc = std::clamp(h, 1e-6, 1.0 - 1e-6);
  return a ? 1.0 / hc : -1.0 / (1.0 - hc);
}

}  // namespace

std::vector<double> PpoUpdater::policy_gradient(const Controller& controller,
                                                ValueNet& critic,
                                                const Trajectory& traj,
                                                const Dataset& ds) const {
  traj.validate();
  std::vector<double> grad(controller.params().size(), 0.0);
  long long n_samples = 0;
  for (const auto& ep : traj.episodes)
    for (const auto& s : ep.steps) n_samples += s.batch.size();
  if (n_samples == 0) return grad;
  const double inv_n = 1.0 / static_cast<double>(n_samples);

  for (const auto& ep : traj.episodes) {
    EpisodeEval ev = evaluate_episode(controller, critic, ep, ds, config, false);
    const int t_max = static_cast<int>(ep.steps.size());
    // per-sample descent coefficients on the scores
    std::vector<std::vector<double>> dscore(t_max);
    for (int t = 0; t < t_max; ++t) {
      const StepRecord& step = ep.steps[t];
      const double adv = ev.advantages[t];
      const int b = static_cast<int>(step.batch.size());
      dscore[t].assign(b, 0.0);
      for (int i = 0; i < b; ++i) {
        double lp_old = log_prob_single(step.scores[i], step.actions[i]);
        double lp_new = log_prob_single(ev.new_scores[t][i], step.actions[i]);
        double ratio = std::exp(lp_new - lp_old);
        bool clipped = (adv > 0.0 && ratio > 1.0 + config.clip_ratio) ||
                       (adv < 0.0 && ratio < 1.0 - config.clip_ratio);
        if (clipped || adv == 0.0) continue;
        // maximize (1/N) * ratio * adv  ->  descend on the negative
        double dlp = -inv_n * adv * ratio;
        dscore[t][i] =
            dlp * dlogp_dscore(ev.new_scores[t][i], step.actions[i]);
      }
    }
    if (controller.recurrent()) {
      std::vector<double> dh(ep.mem_h0.size(), 0.0);
      std::vector<double> dc(ep.mem_c0.size(), 0.0);
      for (int t = t_max - 1; t >= 0; --t)
        for (int i = static_cast<int>(ep.steps[t].batch.size()) - 1; i >= 0; --i)
          controller.backward_recurrent(ev.rec_traces[t][i], dscore[t][i], grad,
                                        dh, dc);
    } else {
      for (int t = 0; t < t_max; ++t)
        for (std::size_t i = 0; i < ep.steps[t].batch.size(); ++i)
          if (dscore[t][i] != 0.0)
            controller.backward_ff(ev.ff_traces[t][i], dscore[t][i], grad);
    }
  }
  return grad;
}

void PpoUpdater::update(Controller& controller, ValueNet& critic,
                        const Trajectory& traj, const Dataset& ds) {
  traj.validate();
  if (traj.episodes.empty())
    throw MisuseError("ppo update needs at least one episode");
  long long n_samples = 0;
  long long n_steps = 0;
  for (const auto& ep : traj.episodes) {
    n_steps += ep.steps.size();
    for (const auto& s : ep.steps) n_samples += s.batch.size();
  }
  const double inv_n = 1.0 / static_cast<double>(n_samples);
  const double inv_steps = 1.0 / static_cast<double>(n_steps);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<double> pgrad(controller.params().size(), 0.0);
    std::vector<double> vgrad(critic.params().size(), 0.0);
    for (const auto& ep : traj.episodes) {
      EpisodeEval ev = evaluate_episode(controller, critic, ep, ds, config, true);
      const int t_max = static_cast<int>(ep.steps.size());
      std::vector<std::vector<double>> dscore(t_max);
      for (int t = 0; t < t_max; ++t) {
        const StepRecord& step = ep.steps[t];
        const double adv = ev.advantages[t];
        const int b = static_cast<int>(step.batch.size());
        dscore[t].assign(b, 0.0);
        for (int i = 0; i < b; ++i) {
          double lp_old = log_prob_single(step.scores[i], step.actions[i]);
          double lp_new = log_prob_single(ev.new_scores[t][i], step.actions[i]);
          double ratio = std::exp(lp_new - lp_old);
          bool clipped = (adv > 0.0 && ratio > 1.0 + config.clip_ratio) ||
                         (adv < 0.0 && ratio < 1.0 - config.clip_ratio);
          if (clipped || adv == 0.0) continue;
          double dlp = -inv_n * adv * ratio;
          dscore[t][i] =
              dlp * dlogp_dscore(ev.new_scores[t][i], step.actions[i]);
        }
        // value regression towards the GAE returns
        double dv = 2.0 * (ev.values[t] - ev.returns[t]) * inv_steps;
        critic.backward(ev.value_traces[t], dv, vgrad);
      }
      if (controller.recurrent()) {
        std::vector<double> dh(ep.mem_h0.size(), 0.0);
        std::vector<double> dc(ep.mem_c0.size(), 0.0);
        for (int t = t_max - 1; t >= 0; --t)
          for (int i = static_cast<int>(ep.steps[t].batch.size()) - 1; i >= 0;
               --i)
            controller.backward_recurrent(ev.rec_traces[t][i], dscore[t][i],
                                          pgrad, dh, dc);
      } else {
        for (int t = 0; t < t_max; ++t)
          for (std::size_t i = 0; i < ep.steps[t].batch.size(); ++i)
            if (dscore[t][i] != 0.0)
              controller.backward_ff(ev.ff_traces[t][i], dscore[t][i], pgrad);
      }
    }
    nn::AdamConfig pa;
    pa.lr = config.lr_policy;
    if (nn::adam_step(controller.params(), pgrad, policy_adam, pa))
      ++controller.updates;
    nn::AdamConfig va;
    va.lr = config.lr_value;
    nn::adam_step(critic.params(), vgrad, value_adam, va);
  }
}

QNet QNet::create(int height, int width, int hidden, Rng& init_rng) {
  QNet q;
  q.height_ = height;
  q.width_ = width;
  q.hidden_ = hidden;
  const int hw = height * width;
  q.net_ = nn::Mlp({hw + 2, hidden, hidden, 1},
                   {nn::Act::relu, nn::Act::relu, nn::Act::identity}, 0);
  q.params_.assign(q.net_.param_size(), 0.0f);
  q.net_.init(q.params_, init_rng);
  return q;
}

double QNet::q(std::span<const float> image, double val_metric, double action,
               nn::Mlp::Trace* trace) const {
  std::vector<double> x(image.begin(), image.end());
  x.push_back(val_metric);
  x.push_back(action);
  std::vector<double> out;
  net_.forward(params_, x, out, trace);
  return out[0];
}

double QNet::backward(const nn::Mlp::Trace& trace, double dq,
                      std::span<double> grad) const {
  std::vector<double> dout = {dq};
  std::vector<double> dx;
  if (grad.empty()) {
    std::vector<double> scratch(params_.size(), 0.0);
    net_.backward(params_, trace, dout, scratch, &dx);
  } else {
    net_.backward(params_, trace, dout, grad, &dx);
  }
  return dx.back();  // dQ/daction
}

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigError("replay buffer capacity must be >= 1");
  storage_.reserve(capacity);
}

void ReplayBuffer::push(const DdpgTransition& t) {
  if (size() < capacity_) {
    storage_.push_back(t);
  } else {
    storage_[write_pos_] = t;
  }
  write_pos_ = (write_pos_ + 1) % capacity_;
}

DdpgUpdater::DdpgUpdater(DDPGConfig cfg, const Controller& actor,
                         const QNet& critic)
    : config(cfg), target_actor(actor), target_critic(critic) {
  if (actor.recurrent())
    throw MisuseError("DDPG requires a feed-forward controller");
  if (cfg.buffer_capacity < cfg.batch_size)
    throw ConfigError("replay capacity must be >= batch size");
}

void DdpgUpdater::update(Controller& actor, QNet& critic, const Dataset& ds,
                         const ReplayBuffer& buffer, Rng& rng) {
  if (buffer.size() < config.batch_size)
    throw MisuseError("ddpg update needs buffer >= batch_size");
  const int n = config.batch_size;
  std::vector<int> idx(n);
  for (int j = 0; j < n; ++j)
    idx[j] = static_cast<int>(rng.uniform_int(buffer.size()));

  // critic: TD regression against the target networks
  std::vector<double> cgrad(critic.params().size(), 0.0);
  for (int j = 0; j < n; ++j) {
    const DdpgTransition& tr = buffer.at(idx[j]);
    double y = tr.reward;
    if (!tr.done) {
      auto next_img = ds.image_of(tr.next_sample_index);
      double a_next = target_actor.score(next_img);
      y += config.gamma * target_critic.q(next_img, tr.next_val_metric, a_next);
    }
    nn::Mlp::Trace trace;
    double qv = critic.q(ds.image_of(tr.sample_index), tr.val_metric, tr.action,
                         &trace);
    if (!std::isfinite(qv)) throw NumericError("non-finite Q value in DDPG");
    double dq = 2.0 * (qv - y) / n;
    critic.backward(trace, dq, cgrad);
  }
  nn::AdamConfig ca;
  ca.lr = config.lr_critic;
  nn::adam_step(critic.params(), cgrad, critic_adam, ca);

  // actor: ascend Q(s, mu(s))
  std::vector<double> agrad(actor.params().size(), 0.0);
  for (int j = 0; j < n; ++j) {
    const DdpgTransition& tr = buffer.at(idx[j]);
    auto img = ds.image_of(tr.sample_index);
    Controller::FfTrace ft;
    double a_pred = actor.score_traced(img, ft);
    nn::Mlp::Trace qt;
    critic.q(img, tr.val_metric, a_pred, &qt);
    double dqda = critic.backward(qt, 1.0, {});
    actor.backward_ff(ft, -dqda / n, agrad);
  }
  nn::AdamConfig aa;
  aa.lr = config.lr_actor;
  if (nn::adam_step(actor.params(), agrad, actor_adam, aa)) ++actor.updates;

  soft_update(actor, critic);
}

void DdpgUpdater::soft_update(const Controller& actor, const QNet& critic) {
  const double tau = config.tau;
  auto blend = [tau](std::vector<float>& target, const std::vector<float>& online) {
    for (std::size_t i = 0; i < target.size(); ++i)
      target[i] = static_cast<float>(tau * static_cast<double>(online[i]) +
                                     (1.0 - tau) * static_cast<double>(target[i]));
  };
  blend(target_actor.params(), actor.params());
  blend(target_critic.params(), critic.params());
}

}  // namespace amenable
