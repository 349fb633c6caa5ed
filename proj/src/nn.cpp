#include "amenable/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "amenable/errors.hpp"

namespace amenable::nn {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

double activate(Act act, double pre) {
  switch (act) {
    case Act::identity: return pre;
    case Act::relu: return pre > 0.0 ? pre : 0.0;
    case Act::sigmoid: return sigmoid(pre);
    case Act::tanh_act: return std::tanh(pre);
  }
  return pre;
}

double activate_grad(Act act, double pre) {
  switch (act) {
    case Act::identity: return 1.0;
    case Act::relu: return pre > 0.0 ? 1.0 : 0.0;
    case Act::sigmoid: {
      double s = sigmoid(pre);
      return s * (1.0 - s);
    }
    case Act::tanh_act: {
      double t = std::tanh(pre);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

}  // namespace

void Dense::init(std::span<float> params, Rng& rng) const {
  double scale = 1.0 / std::sqrt(static_cast<double>(in));
  float* w = params.data() + offset;
  for (int i = 0; i < in * out; ++i)
    w[i] = static_cast<float>(rng.uniform(-scale, scale));
  for (int i = 0; i < out; ++i) w[in * out + i] = 0.0f;
}

void Dense::forward(std::span<const float> params, std::span<const double> x,
                    std::span<double> y, std::span<double> pre) const {
  const float* w = params.data() + offset;
  const float* b = w + static_cast<std::size_t>(in) * out;
  for (int o = 0; o < out; ++o) {
    double acc = b[o];
    const float* row = w + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * x[i];
    if (!pre.empty()) pre[o] = acc;
    y[o] = activate(act, acc);
  }
}

void Dense::backward(std::span<const float> params, std::span<const double> x,
                     std::span<const double> pre, std::span<const double> dy,
                     std::span<double> grad, std::span<double> dx) const {
  const float* w = params.data() + offset;
  double* gw = grad.data() + offset;
  double* gb = gw + static_cast<std::size_t>(in) * out;
  for (int o = 0; o < out; ++o) {
    double dpre = dy[o] * activate_grad(act, pre[o]);
    if (dpre == 0.0) continue;
    double* grow = gw + static_cast<std::size_t>(o) * in;
    const float* row = w + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) grow[i] += dpre * x[i];
    gb[o] += dpre;
    if (!dx.empty())
      for (int i = 0; i < in; ++i) dx[i] += dpre * static_cast<double>(row[i]);
  }
}

Mlp::Mlp(std::vector<int> sizes, std::vector<Act> acts, std::size_t offset)
    : sizes_(std::move(sizes)), offset_(offset) {
  if (sizes_.size() < 2 || acts.size() != sizes_.size() - 1)
    throw MisuseError("Mlp: sizes/activations mismatch");
  std::size_t off = offset;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    Dense d{sizes_[l], sizes_[l + 1], acts[l], off};
    off += d.size();
    layers_.push_back(d);
  }
  param_size_ = off - offset;
}

void Mlp::init(std::span<float> params, Rng& rng) const {
  for (const auto& l : layers_) l.init(params, rng);
}

void Mlp::forward(std::span<const float> params, std::span<const double> x,
                  std::vector<double>& out, Trace* trace) const {
  if (static_cast<int>(x.size()) != sizes_.front())
    throw MisuseError("Mlp: input size mismatch");
  if (trace) {
    trace->inputs.resize(layers_.size());
    trace->pre.resize(layers_.size());
  }
  std::vector<double> cur(x.begin(), x.end());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Dense& d = layers_[l];
    std::vector<double> next(d.out);
    if (trace) {
      trace->inputs[l] = cur;
      trace->pre[l].resize(d.out);
      d.forward(params, cur, next, trace->pre[l]);
    } else {
      d.forward(params, cur, next, {});
    }
    cur = std::move(next);
  }
  out = std::move(cur);
}

void Mlp::backward(std::span<const float> params, const Trace& trace,
                   std::span<const double> dout, std::span<double> grad,
                   std::vector<double>* dx) const {
  std::vector<double> dcur(dout.begin(), dout.end());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Dense& d = layers_[l];
    std::vector<double> dprev(d.in, 0.0);
    bool need_dx = l > 0 || dx != nullptr;
    d.backward(params, trace.inputs[l], trace.pre[l], dcur, grad,
               need_dx ? std::span<double>(dprev) : std::span<double>());
    dcur = std::move(dprev);
  }
  if (dx) *dx = std::move(dcur);
}

void Conv3x3::init(std::span<float> params, Rng& rng) const {
  double scale = 1.0 / std::sqrt(static_cast<double>(in_ch) * 9.0);
  float* w = params.data() + offset;
  std::size_t n_w = static_cast<std::size_t>(out_ch) * in_ch * 9;
  for (std::size_t i = 0; i < n_w; ++i)
    w[i] = static_cast<float>(rng.uniform(-scale, scale));
  for (int i = 0; i < out_ch; ++i) w[n_w + i] = 0.0f;
}

void Conv3x3::forward(std::span<const float> params, std::span<const double> x,
                      std::span<double> y, std::span<double> pre) const {
  const float* wp = params.data() + offset;
  const float* b = wp + static_cast<std::size_t>(out_ch) * in_ch * 9;
  const int hw = h * w;
  for (int oc = 0; oc < out_ch; ++oc) {
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        double acc = b[oc];
        for (int ic = 0; ic < in_ch; ++ic) {
          const double* plane = x.data() + static_cast<std::size_t>(ic) * hw;
          const float* ker =
              wp + (static_cast<std::size_t>(oc) * in_ch + ic) * 9;
          for (int ky = -1; ky <= 1; ++ky) {
            int sy = py + ky;
            if (sy < 0 || sy >= h) continue;
            for (int kx = -1; kx <= 1; ++kx) {
              int sx = px + kx;
              if (sx < 0 || sx >= w) continue;
              acc += static_cast<double>(ker[(ky + 1) * 3 + (kx + 1)]) *
                     plane[sy * w + sx];
            }
          }
        }
        std::size_t oi = static_cast<std::size_t>(oc) * hw + py * w + px;
        if (!pre.empty()) pre[oi] = acc;
        y[oi] = activate(act, acc);
      }
  }
}

void Conv3x3::backward(std::span<const float> params, std::span<const double> x,
                       std::span<const double> pre, std::span<const double> dy,
                       std::span<double> grad, std::span<double> dx) const {
  const float* wp = params.data() + offset;
  double* gw = grad.data() + offset;
  double* gb = gw + static_cast<std::size_t>(out_ch) * in_ch * 9;
  const int hw = h * w;
  for (int oc = 0; oc < out_ch; ++oc) {
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        std::size_t oi = static_cast<std::size_t>(oc) * hw + py * w + px;
        double dpre = dy[oi] * activate_grad(act, pre[oi]);
        if (dpre == 0.0) continue;
        gb[oc] += dpre;
        for (int ic = 0; ic < in_ch; ++ic) {
          const double* plane = x.data() + static_cast<std::size_t>(ic) * hw;
          double* dplane =
              dx.empty() ? nullptr : dx.data() + static_cast<std::size_t>(ic) * hw;
          const float* ker =
              wp + (static_cast<std::size_t>(oc) * in_ch + ic) * 9;
          std::size_t kbase = (static_cast<std::size_t>(oc) * in_ch + ic) * 9;
          for (int ky = -1; ky <= 1; ++ky) {
            int sy = py + ky;
            if (sy < 0 || sy >= h) continue;
            for (int kx = -1; kx <= 1; ++kx) {
              int sx = px + kx;
              if (sx < 0 || sx >= w) continue;
              int ko = (ky + 1) * 3 + (kx + 1);
              gw[kbase + ko] += dpre * plane[sy * w + sx];
              if (dplane)
                dplane[sy * w + sx] += dpre * static_cast<double>(ker[ko]);
            }
          }
        }
      }
  }
}

void LstmCell::init(std::span<float> params, Rng& rng) const {
  float* p = params.data() + offset;
  std::size_t n_wx = static_cast<std::size_t>(4) * hidden * input;
  std::size_t n_wh = static_cast<std::size_t>(4) * hidden * hidden;
  double sx = 1.0 / std::sqrt(static_cast<double>(input));
  double sh = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t i = 0; i < n_wx; ++i)
    p[i] = static_cast<float>(rng.uniform(-sx, sx));
  for (std::size_t i = 0; i < n_wh; ++i)
    p[n_wx + i] = static_cast<float>(rng.uniform(-sh, sh));
  for (int i = 0; i < 4 * hidden; ++i) p[n_wx + n_wh + i] = 0.0f;
  // forget-gate bias starts open
  for (int i = 0; i < hidden; ++i) p[n_wx + n_wh + hidden + i] = 1.0f;
}

void LstmCell::forward(std::span<const float> params, std::span<const double> x,
                       std::span<const double> h_prev,
                       std::span<const double> c_prev, std::span<double> h_new,
                       std::span<double> c_new, Cache* cache) const {
  const float* wx = params.data() + offset;
  const float* wh = wx + static_cast<std::size_t>(4) * hidden * input;
  const float* b = wh + static_cast<std::size_t>(4) * hidden * hidden;

  std::vector<double> pre(static_cast<std::size_t>(4) * hidden);
  for (int g = 0; g < 4 * hidden; ++g) {
    double acc = b[g];
    const float* rx = wx + static_cast<std::size_t>(g) * input;
    for (int i = 0; i < input; ++i) acc += static_cast<double>(rx[i]) * x[i];
    const float* rh = wh + static_cast<std::size_t>(g) * hidden;
    for (int i = 0; i < hidden; ++i)
      acc += static_cast<double>(rh[i]) * h_prev[i];
    pre[g] = acc;
  }
  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->h_prev.assign(h_prev.begin(), h_prev.end());
    cache->c_prev.assign(c_prev.begin(), c_prev.end());
    cache->gate_i.resize(hidden);
    cache->gate_f.resize(hidden);
    cache->gate_g.resize(hidden);
    cache->gate_o.resize(hidden);
    cache->c_new.resize(hidden);
    cache->tanh_c.resize(hidden);
  }
  for (int k = 0; k < hidden; ++k) {
    double gi = sigmoid(pre[k]);
    double gf = sigmoid(pre[hidden + k]);
    double gg = std::tanh(pre[2 * hidden + k]);
    double go = sigmoid(pre[3 * hidden + k]);
    double c = gf * c_prev[k] + gi * gg;
    double tc = std::tanh(c);
    c_new[k] = c;
    h_new[k] = go * tc;
    if (cache) {
      cache->gate_i[k] = gi;
      cache->gate_f[k] = gf;
      cache->gate_g[k] = gg;
      cache->gate_o[k] = go;
      cache->c_new[k] = c;
      cache->tanh_c[k] = tc;
    }
  }
}

void LstmCell::backward(std::span<const float> params, const Cache& cache,
                        std::span<const double> dh_new,
                        std::span<const double> dc_new, std::span<double> grad,
                        std::span<double> dx, std::span<double> dh_prev,
                        std::span<double> dc_prev) const {
  const float* wx = params.data() + offset;
  const float* wh = wx + static_cast<std::size_t>(4) * hidden * input;
  double* gwx = grad.data() + offset;
  double* gwh = gwx + static_cast<std::size_t>(4) * hidden * input;
  double* gb = gwh + static_cast<std::size_t>(4) * hidden * hidden;

  std::vector<double> dpre(static_cast<std::size_t>(4) * hidden);
  for (int k = 0; k < hidden; ++k) {
    double gi = cache.gate_i[k], gf = cache.gate_f[k];
    double gg = cache.gate_g[k], go = cache.gate_o[k];
    double tc = cache.tanh_c[k];
    double dc = dc_new[k] + dh_new[k] * go * (1.0 - tc * tc);
    double dgo = dh_new[k] * tc;
    double dgi = dc * gg;
    double dgg = dc * gi;
    double dgf = dc * cache.c_prev[k];
    dc_prev[k] += dc * gf;
    dpre[k] = dgi * gi * (1.0 - gi);
    dpre[hidden + k] = dgf * gf * (1.0 - gf);
    dpre[2 * hidden + k] = dgg * (1.0 - gg * gg);
    dpre[3 * hidden + k] = dgo * go * (1.0 - go);
  }
  for (int g = 0; g < 4 * hidden; ++g) {
    double d = dpre[g];
    if (d == 0.0) continue;
    double* grx = gwx + static_cast<std::size_t>(g) * input;
    const float* rx = wx + static_cast<std::size_t>(g) * input;
    for (int i = 0; i < input; ++i) {
      grx[i] += d * cache.x[i];
      dx[i] += d * static_cast<double>(rx[i]);
    }
    double* grh = gwh + static_cast<std::size_t>(g) * hidden;
    const float* rh = wh + static_cast<std::size_t>(g) * hidden;
    for (int i = 0; i < hidden; ++i) {
      grh[i] += d * cache.h_prev[i];
      dh_prev[i] += d * static_cast<double>(rh[i]);
    }
    gb[g] += d;
  }
}

void AdamState::ensure(std::size_t n) {
  if (m.size() != n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
}

bool adam_step(std::span<float> params, std::span<const double> grad,
               AdamState& state, const AdamConfig& cfg) {
  bool all_zero = true;
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient in adam_step");
    if (g != 0.0) all_zero = false;
  }
  if (all_zero) return false;
  state.ensure(params.size());
  state.step += 1;
  double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    double mhat = state.m[i] / b1t;
    double vhat = state.v[i] / b2t;
    params[i] = static_cast<float>(
        static_cast<double>(params[i]) -
        cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
  return true;
}

void sgd_step(std::span<float> params, std::span<const double> grad, double lr) {
  bool all_zero = true;
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient in sgd_step");
    if (g != 0.0) all_zero = false;
  }
  if (all_zero) return;
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i] = static_cast<float>(static_cast<double>(params[i]) - lr * grad[i]);
}

void softmax(std::span<const double> logits, std::span<double> probs) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (auto& p : probs) p /= sum;
}

}  // namespace amenable::nn
