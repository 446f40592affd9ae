#include "ssm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "errors.hpp"
#include "kernels.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace statesmix {

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::kInvalidArgument, "model config: " + what); };
  if (d_model == 0 || d_state == 0 || d_inner == 0 || d_conv == 0 || n_layers == 0) {
    bad("dimensions must be >= 1");
  }
  if (d_inner != 2 * d_model) bad("d_inner must equal 2 * d_model");
  if (chunk_size < 2) bad("chunk_size must be >= 2");
  if (!(label_smoothing >= 0 && label_smoothing < 1)) bad("label_smoothing must be in [0, 1)");
  if (!(lr > 0)) bad("lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) bad("betas must be in [0, 1)");
  if (!(adam_eps > 0)) bad("adam_eps must be positive");
  if (!(grad_clip > 0)) bad("grad_clip must be positive");
}

namespace ssm {
namespace k = kernels;

namespace {

// Rows of the head matrix per parallel block; also fixes the order in which
// head-gradient partial sums are combined.
constexpr size_t kHeadBlock = 512;

template <class Real>
void layer_norm(const Real* x, const Real* gain, const Real* bias, size_t n, Real* xhat,
                Real* out, Real& rstd) {
  const Real mean = k::sum(x, n) / static_cast<Real>(n);
  for (size_t i = 0; i < n; ++i) xhat[i] = x[i] - mean;
  const Real var = k::dot(xhat, xhat, n) / static_cast<Real>(n);
  rstd = Real(1) / std::sqrt(var + static_cast<Real>(kLayerNormEps));
  for (size_t i = 0; i < n; ++i) {
    xhat[i] *= rstd;
    out[i] = gain[i] * xhat[i] + bias[i];
  }
}

// dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)), accumulating
// gain/bias gradients. `dx_out` receives the input gradient (added).
template <class Real>
void layer_norm_backward(const Real* dout, const Real* xhat, const Real* gain, Real rstd,
                         size_t n, Real* dgain, Real* dbias, Real* dxhat, Real* dx_out) {
  for (size_t i = 0; i < n; ++i) {
    dgain[i] += dout[i] * xhat[i];
    dbias[i] += dout[i];
    dxhat[i] = dout[i] * gain[i];
  }
  const Real mean_d = k::sum(dxhat, n) / static_cast<Real>(n);
  const Real mean_dx = k::dot(dxhat, xhat, n) / static_cast<Real>(n);
  for (size_t i = 0; i < n; ++i) dx_out[i] += rstd * (dxhat[i] - mean_d - xhat[i] * mean_dx);
}

template <class Real>
StepCache<Real>& scratch_cache(const ModelConfig& cfg) {
  thread_local StepCache<Real> cache;
  thread_local ModelConfig shape{};
  if (cache.layers.size() != cfg.n_layers || shape.d_model != cfg.d_model ||
      shape.d_state != cfg.d_state || shape.d_conv != cfg.d_conv ||
      shape.d_inner != cfg.d_inner) {
    cache.resize(cfg);
    shape = cfg;
  }
  return cache;
}

template <class Real>
void fill_normal(SplitMix64& rng, Real* out, size_t n, double stddev) {
  for (size_t i = 0; i < n; ++i) out[i] = static_cast<Real>(rng.normal() * stddev);
}

}  // namespace

ParamLayout ParamLayout::make(const ModelConfig& cfg, size_t v_e) {
  cfg.validate();
  const size_t dm = cfg.d_model, di = cfg.d_inner, ds = cfg.d_state, dc = cfg.d_conv;
  ParamLayout l;
  size_t off = 0;
  auto take = [&](size_t n) {
    const size_t at = off;
    off += n;
    return at;
  };
  for (size_t layer = 0; layer < cfg.n_layers; ++layer) {
    LayerOffsets o{};
    o.ln_gain = take(dm);
    o.ln_bias = take(dm);
    o.w_in = take(dm * 2 * di);
    o.conv_w = take(di * dc);
    o.conv_b = take(di);
    o.w_xp = take(di * (2 * ds + 1));
    o.w_delta = take(di);
    o.b_delta = take(di);
    o.a_log = take(di * ds);
    o.d_skip = take(di);
    o.w_out = take(di * dm);
    l.layers.push_back(o);
  }
  l.final_gain = take(dm);
  l.final_bias = take(dm);
  l.fixed_count = off;
  l.embedding = take(v_e * dm);
  l.head = take(v_e * dm);
  l.total = off;
  return l;
}

size_t param_count(const ModelConfig& cfg, size_t v_e) { return ParamLayout::make(cfg, v_e).total; }

template <class Real>
State<Real> State<Real>::zeros(const ModelConfig& cfg) {
  return {std::vector<Real>(cfg.n_layers * cfg.d_inner * cfg.d_state),
          std::vector<Real>(cfg.n_layers * cfg.d_inner * (cfg.d_conv - 1))};
}

template <class Real>
void StepCache<Real>::resize(const ModelConfig& cfg) {
  const size_t dm = cfg.d_model, di = cfg.d_inner, ds = cfg.d_state, dc = cfg.d_conv;
  layers.resize(cfg.n_layers);
  for (auto& l : layers) {
    l.x_in.resize(dm);
    l.xhat.resize(dm);
    l.u.resize(dm);
    l.z.resize(2 * di);
    l.window.resize(di * dc);
    l.conv_pre.resize(di);
    l.zt.resize(di);
    l.bcd.resize(2 * ds + 1);
    l.delta_pre.resize(di);
    l.delta.resize(di);
    l.decay.resize(di * ds);
    l.h_prev.resize(di * ds);
    l.h.resize(di * ds);
    l.y.resize(di);
    l.gate.resize(di);
    l.o.resize(di);
  }
  x_last.resize(dm);
  xhat_final.resize(dm);
  x_fin.resize(dm);
}

template <class Real>
void ChunkWorkspace<Real>::prepare(const ModelConfig& cfg, size_t v_e, size_t n) {
  if (steps.size() < n) {
    const size_t old = steps.size();
    steps.resize(n);
    for (size_t i = old; i < n; ++i) steps[i].resize(cfg);
  }
  if (!steps.empty() && steps[0].layers.size() != cfg.n_layers) {
    for (auto& s : steps) s.resize(cfg);
  }
  positions = n;
  logits.resize(n * v_e);
  dlogits.resize(n * v_e);
}

template <class Real>
void Parameters<Real>::refresh_derived() {
  const size_t n = config.d_inner * config.d_state;
  neg_a.resize(layout.layers.size() * n);
  for (size_t l = 0; l < layout.layers.size(); ++l) {
    const Real* a_log = data.data() + layout.layers[l].a_log;
    for (size_t i = 0; i < n; ++i) neg_a[l * n + i] = -std::exp(a_log[i]);
  }
}

template <class Real>
Parameters<Real> init_params(const ModelConfig& cfg, size_t v_e) {
  Parameters<Real> p;
  p.config = cfg;
  p.v_e = v_e;
  p.layout = ParamLayout::make(cfg, v_e);
  p.data.assign(p.layout.total, Real(0));
  const size_t dm = cfg.d_model, di = cfg.d_inner, ds = cfg.d_state, dc = cfg.d_conv;
  constexpr double kWeightStd = 0.02, kBiasStd = 0.1;

  SplitMix64 rng(cfg.seed);
  for (const auto& o : p.layout.layers) {
    std::fill_n(p.at(o.ln_gain), dm, Real(1));
    fill_normal(rng, p.at(o.w_in), dm * 2 * di, kWeightStd);
    fill_normal(rng, p.at(o.conv_w), di * dc, kWeightStd);
    fill_normal(rng, p.at(o.conv_b), di, kBiasStd);
    fill_normal(rng, p.at(o.w_xp), di * (2 * ds + 1), kWeightStd);
    fill_normal(rng, p.at(o.w_delta), di, kWeightStd);
    fill_normal(rng, p.at(o.b_delta), di, kBiasStd);
    for (size_t i = 0; i < di; ++i) {
      for (size_t j = 0; j < ds; ++j) {
        p.at(o.a_log)[i * ds + j] = static_cast<Real>(std::log(static_cast<double>(j + 1)));
      }
    }
    std::fill_n(p.at(o.d_skip), di, Real(1));
    fill_normal(rng, p.at(o.w_out), di * dm, kWeightStd);
  }
  std::fill_n(p.at(p.layout.final_gain), dm, Real(1));
  fill_normal(rng, p.at(p.layout.embedding), v_e * dm, kWeightStd);
  fill_normal(rng, p.at(p.layout.head), v_e * dm, kWeightStd);
  p.refresh_derived();
  return p;
}

template <class Real>
void step_forward(const Parameters<Real>& params, State<Real>& state, CompactTokenId token,
                  Real* logits, StepCache<Real>* cache, ThreadPool* pool,
                  const ForwardHooks& hooks) {
  const ModelConfig& cfg = params.config;
  const size_t dm = cfg.d_model, di = cfg.d_inner, ds = cfg.d_state, dc = cfg.d_conv;
  const size_t nb = 2 * ds + 1;
  if (token >= params.v_e) fail(ErrorCode::kInternal, "token outside compact vocabulary");
  StepCache<Real>& c = cache ? *cache : scratch_cache<Real>(cfg);
  c.token = token;

  std::vector<Real>& x = c.x_last;
  std::copy_n(params.at(params.layout.embedding) + token * dm, dm, x.begin());

  for (size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerOffsets& o = params.layout.layers[l];
    auto& lc = c.layers[l];
    Real* h = state.hidden.data() + l * di * ds;
    Real* buf = state.conv.data() + l * di * (dc - 1);

    std::copy(x.begin(), x.end(), lc.x_in.begin());
    layer_norm(lc.x_in.data(), params.at(o.ln_gain), params.at(o.ln_bias), dm, lc.xhat.data(),
               lc.u.data(), lc.rstd);

    std::fill(lc.z.begin(), lc.z.end(), Real(0));
    for (size_t m = 0; m < dm; ++m) k::axpy(lc.u[m], params.at(o.w_in) + m * 2 * di, lc.z.data(), 2 * di);

    for (size_t i = 0; i < di; ++i) {
      Real* win = lc.window.data() + i * dc;
      std::copy_n(buf + i * (dc - 1), dc - 1, win);
      win[dc - 1] = lc.z[i];
      lc.conv_pre[i] = params.at(o.conv_b)[i] + k::dot(params.at(o.conv_w) + i * dc, win, dc);
      lc.zt[i] = k::silu(lc.conv_pre[i]);
      std::copy_n(win + 1, dc - 1, buf + i * (dc - 1));
    }

    std::fill(lc.bcd.begin(), lc.bcd.end(), Real(0));
    for (size_t i = 0; i < di; ++i) k::axpy(lc.zt[i], params.at(o.w_xp) + i * nb, lc.bcd.data(), nb);
    const Real* B = lc.bcd.data();
    const Real* C = lc.bcd.data() + ds;
    const Real dlt = lc.bcd[2 * ds];

    const Real* neg_a = params.neg_a.data() + l * di * ds;
    for (size_t i = 0; i < di; ++i) {
      lc.delta_pre[i] = dlt * params.at(o.w_delta)[i] + params.at(o.b_delta)[i];
      lc.delta[i] = k::softplus(lc.delta_pre[i]);
      if (hooks.zero_delta_channel && *hooks.zero_delta_channel == i) lc.delta[i] = 0;
      const Real d = lc.delta[i];
      const Real inject = d * lc.zt[i];
      Real* hrow = h + i * ds;
      for (size_t j = 0; j < ds; ++j) {
        const Real decay = std::exp(d * neg_a[i * ds + j]);
        lc.decay[i * ds + j] = decay;
        lc.h_prev[i * ds + j] = hrow[j];
        hrow[j] = decay * hrow[j] + inject * B[j];
        lc.h[i * ds + j] = hrow[j];
      }
      lc.y[i] = k::dot(hrow, C, ds) + params.at(o.d_skip)[i] * lc.zt[i];
      lc.gate[i] = k::silu(lc.z[di + i]);
      lc.o[i] = lc.y[i] * lc.gate[i];
    }

    for (size_t i = 0; i < di; ++i) k::axpy(lc.o[i], params.at(o.w_out) + i * dm, x.data(), dm);
  }

  if (!k::all_finite(state.hidden.data(), state.hidden.size()) ||
      !k::all_finite(x.data(), x.size())) {
    fail(ErrorCode::kNumericFault, "non-finite SSM state");
  }

  layer_norm(x.data(), params.at(params.layout.final_gain), params.at(params.layout.final_bias),
             dm, c.xhat_final.data(), c.x_fin.data(), c.rstd_final);

  if (logits) {
    const Real* head = params.at(params.layout.head);
    const Real* xf = c.x_fin.data();
    parallel_for(pool, params.v_e, kHeadBlock, [&](size_t begin, size_t end) {
      for (size_t j = begin; j < end; ++j) logits[j] = k::dot(head + j * dm, xf, dm);
    });
    if (!k::all_finite(logits, params.v_e)) fail(ErrorCode::kNumericFault, "non-finite logits");
  }
}

template <class Real>
double chunk_loss(std::span<const Real> logits, std::span<const CompactTokenId> targets,
                  size_t v_e, double epsilon) {
  const double log_floor = std::log(kProbFloor);
  double total = 0;
  for (size_t t = 0; t < targets.size(); ++t) {
    const Real* row = logits.data() + t * v_e;
    const double m = static_cast<double>(k::max_value(row, v_e));
    double z = 0;
    for (size_t j = 0; j < v_e; ++j) z += std::exp(static_cast<double>(row[j]) - m);
    const double log_z = std::log(z);
    double sum_logp = 0;
    for (size_t j = 0; j < v_e; ++j) {
      sum_logp += std::max(log_floor, static_cast<double>(row[j]) - m - log_z);
    }
    const double logp_y = std::max(log_floor, static_cast<double>(row[targets[t]]) - m - log_z);
    total += (1 - epsilon) * -logp_y + epsilon * -(sum_logp / static_cast<double>(v_e));
  }
  return total;
}

template <class Real>
double backprop_chunk(const Parameters<Real>& params, const State<Real>& snapshot,
                      std::span<const CompactTokenId> chunk, double epsilon,
                      std::vector<Real>& grads, ChunkWorkspace<Real>& ws, bool warm,
                      ThreadPool* pool) {
  const ModelConfig& cfg = params.config;
  const size_t dm = cfg.d_model, di = cfg.d_inner, ds = cfg.d_state, dc = cfg.d_conv;
  const size_t nb = 2 * ds + 1;
  const size_t v_e = params.v_e;
  const ParamLayout& L = params.layout;

  grads.assign(L.total, Real(0));
  if (chunk.size() < 2) return 0.0;
  const size_t T = chunk.size() - 1;

  if (!warm) {
    ws.prepare(cfg, v_e, T);
    State<Real> s = snapshot;
    for (size_t t = 0; t < T; ++t) {
      step_forward(params, s, chunk[t], ws.logits.data() + t * v_e, &ws.steps[t], pool);
    }
  } else if (ws.positions != T) {
    fail(ErrorCode::kInternal, "warm workspace does not match chunk");
  }

  // Loss and logit gradients.
  const double log_floor = std::log(kProbFloor);
  const Real smooth = static_cast<Real>(epsilon / static_cast<double>(v_e));
  const Real hard = static_cast<Real>(1 - epsilon);
  double loss = 0;
  for (size_t t = 0; t < T; ++t) {
    const Real* row = ws.logits.data() + t * v_e;
    Real* drow = ws.dlogits.data() + t * v_e;
    const Real m = k::max_value(row, v_e);
    for (size_t j = 0; j < v_e; ++j) drow[j] = std::exp(row[j] - m);
    const Real z = k::sum(drow, v_e);
    const Real log_z = std::log(z);
    const Real inv_z = Real(1) / z;
    double sum_logp = 0;
    for (size_t j = 0; j < v_e; ++j) {
      sum_logp += std::max(log_floor, static_cast<double>(row[j] - m - log_z));
      drow[j] = drow[j] * inv_z - smooth;
    }
    const CompactTokenId y = chunk[t + 1];
    const double logp_y = std::max(log_floor, static_cast<double>(row[y] - m - log_z));
    loss += (1 - epsilon) * -logp_y + epsilon * -(sum_logp / static_cast<double>(v_e));
    drow[y] -= hard;
  }

  // Head: dW[j] = sum_t dl[t][j] x_fin[t]; dx_fin[t] = sum_j dl[t][j] W[j],
  // summed per fixed row block and then across blocks in block order.
  const size_t n_blocks = (v_e + kHeadBlock - 1) / kHeadBlock;
  ws.dx_partials.assign(n_blocks * T * dm, Real(0));
  {
    const Real* head = params.at(L.head);
    Real* dhead = grads.data() + L.head;
    parallel_for(pool, v_e, kHeadBlock, [&](size_t begin, size_t end) {
      Real* part = ws.dx_partials.data() + (begin / kHeadBlock) * T * dm;
      for (size_t j = begin; j < end; ++j) {
        const Real* w = head + j * dm;
        Real* dw = dhead + j * dm;
        for (size_t t = 0; t < T; ++t) {
          const Real g = ws.dlogits[t * v_e + j];
          k::axpy(g, ws.steps[t].x_fin.data(), dw, dm);
          k::axpy(g, w, part + t * dm, dm);
        }
      }
    });
  }
  std::vector<Real> dxfin(T * dm, Real(0));
  for (size_t b = 0; b < n_blocks; ++b) {
    const Real* part = ws.dx_partials.data() + b * T * dm;
    for (size_t i = 0; i < T * dm; ++i) dxfin[i] += part[i];
  }

  // Truncated BPTT through the layer stack.
  std::vector<Real> dh_carry(cfg.n_layers * di * ds, Real(0));
  std::vector<Real> dconv_carry(cfg.n_layers * di * (dc - 1), Real(0));
  std::vector<Real> dx(dm), dxhat(dm), dout(dm), du(dm), dz(2 * di), dzt(di), dbcd(nb), dwin(dc);

  for (size_t t = T; t-- > 0;) {
    const StepCache<Real>& sc = ws.steps[t];
    std::fill(dx.begin(), dx.end(), Real(0));
    layer_norm_backward(dxfin.data() + t * dm, sc.xhat_final.data(), params.at(L.final_gain),
                        sc.rstd_final, dm, grads.data() + L.final_gain, grads.data() + L.final_bias,
                        dxhat.data(), dx.data());

    for (size_t l = cfg.n_layers; l-- > 0;) {
      const LayerOffsets& o = L.layers[l];
      const auto& lc = sc.layers[l];
      Real* dh = dh_carry.data() + l * di * ds;
      Real* dcb = dconv_carry.data() + l * di * (dc - 1);
      const Real* B = lc.bcd.data();
      const Real* C = lc.bcd.data() + ds;
      const Real dlt = lc.bcd[2 * ds];
      const Real* neg_a = params.neg_a.data() + l * di * ds;
      std::copy(dx.begin(), dx.end(), dout.begin());

      std::fill(dz.begin(), dz.end(), Real(0));
      std::fill(dzt.begin(), dzt.end(), Real(0));
      std::fill(dbcd.begin(), dbcd.end(), Real(0));
      Real* dB = dbcd.data();
      Real* dC = dbcd.data() + ds;
      Real ddlt = 0;

      for (size_t i = 0; i < di; ++i) {
        const Real d_o = k::dot(params.at(o.w_out) + i * dm, dout.data(), dm);
        k::axpy(lc.o[i], dout.data(), grads.data() + o.w_out + i * dm, dm);
        const Real dy = d_o * lc.gate[i];
        dz[di + i] = d_o * lc.y[i] * k::silu_grad(lc.z[di + i]);

        grads[o.d_skip + i] += dy * lc.zt[i];
        dzt[i] += dy * params.at(o.d_skip)[i];

        const Real delta = lc.delta[i];
        const Real zt = lc.zt[i];
        Real ddelta = 0;
        for (size_t j = 0; j < ds; ++j) {
          const size_t ij = i * ds + j;
          const Real g = dy * C[j] + dh[ij];
          dC[j] += dy * lc.h[ij];
          const Real ddecay = g * lc.h_prev[ij];
          dh[ij] = g * lc.decay[ij];
          ddelta += g * B[j] * zt;
          dB[j] += g * delta * zt;
          dzt[i] += g * delta * B[j];
          const Real chain = ddecay * neg_a[ij] * lc.decay[ij];
          ddelta += chain;
          grads[o.a_log + ij] += chain * delta;
        }
        const Real dpre = ddelta * k::sigmoid(lc.delta_pre[i]);
        grads[o.w_delta + i] += dpre * dlt;
        grads[o.b_delta + i] += dpre;
        ddlt += dpre * params.at(o.w_delta)[i];
      }
      dbcd[2 * ds] = ddlt;

      for (size_t i = 0; i < di; ++i) {
        k::axpy(lc.zt[i], dbcd.data(), grads.data() + o.w_xp + i * nb, nb);
        dzt[i] += k::dot(params.at(o.w_xp) + i * nb, dbcd.data(), nb);
        const Real dpre = dzt[i] * k::silu_grad(lc.conv_pre[i]);
        grads[o.conv_b + i] += dpre;
        const Real* win = lc.window.data() + i * dc;
        const Real* w = params.at(o.conv_w) + i * dc;
        for (size_t q = 0; q < dc; ++q) {
          grads[o.conv_w + i * dc + q] += dpre * win[q];
          dwin[q] = dpre * w[q] + (q >= 1 ? dcb[i * (dc - 1) + q - 1] : Real(0));
        }
        std::copy_n(dwin.data(), dc - 1, dcb + i * (dc - 1));
        dz[i] = dwin[dc - 1];
      }

      for (size_t m = 0; m < dm; ++m) {
        k::axpy(lc.u[m], dz.data(), grads.data() + o.w_in + m * 2 * di, 2 * di);
        du[m] = k::dot(params.at(o.w_in) + m * 2 * di, dz.data(), 2 * di);
      }
      // dx already holds the residual path; add the LayerNorm path.
      layer_norm_backward(du.data(), lc.xhat.data(), params.at(o.ln_gain), lc.rstd, dm,
                          grads.data() + o.ln_gain, grads.data() + o.ln_bias, dxhat.data(),
                          dx.data());
    }
    k::axpy(Real(1), dx.data(), grads.data() + L.embedding + sc.token * dm, dm);
  }

  if (!k::all_finite(grads.data(), grads.size())) fail(ErrorCode::kNumericFault, "non-finite gradients");
  return loss;
}

template <class Real>
void adam_update(Parameters<Real>& params, std::vector<Real>& grads, AdamState<Real>& adam,
                 ThreadPool* pool) {
  const ModelConfig& cfg = params.config;
  const size_t n = params.data.size();
  if (grads.size() != n || adam.m.size() != n || adam.v.size() != n) {
    fail(ErrorCode::kInternal, "adam_update shape mismatch");
  }
  constexpr size_t kBlock = 1 << 16;
  const size_t n_blocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(n_blocks, 0.0);
  parallel_for(pool, n, kBlock, [&](size_t begin, size_t end) {
    constexpr size_t kLanes = 8;
    double lane[kLanes] = {};
    const Real* g = grads.data();
    size_t i = begin;
    for (; i + kLanes <= end; i += kLanes) {
      for (size_t l = 0; l < kLanes; ++l) {
        const double x = static_cast<double>(g[i + l]);
        lane[l] += x * x;
      }
    }
    for (; i < end; ++i) lane[0] += static_cast<double>(g[i]) * g[i];
    double s = 0;
    for (double x : lane) s += x;
    partial[begin / kBlock] = s;
  });
  double norm2 = 0;
  for (double s : partial) norm2 += s;
  const double norm = std::sqrt(norm2);
  const Real scale = norm > cfg.grad_clip ? static_cast<Real>(cfg.grad_clip / norm) : Real(1);

  adam.step += 1;
  const auto t = static_cast<double>(adam.step);
  const Real bc1 = static_cast<Real>(1 - std::pow(cfg.beta1, t));
  const Real bc2 = static_cast<Real>(1 - std::pow(cfg.beta2, t));
  const Real b1 = static_cast<Real>(cfg.beta1), b2 = static_cast<Real>(cfg.beta2);
  const Real lr = static_cast<Real>(cfg.lr), eps = static_cast<Real>(cfg.adam_eps);
  const Real c1 = Real(1) - b1, c2 = Real(1) - b2;
  parallel_for(pool, n, kBlock, [&](size_t begin, size_t end) {
    Real* __restrict p = params.data.data();
    Real* __restrict m = adam.m.data();
    Real* __restrict v = adam.v.data();
    Real* __restrict g = grads.data();
    if (scale != Real(1)) {
      for (size_t i = begin; i < end; ++i) g[i] *= scale;
    }
    for (size_t i = begin; i < end; ++i) {
      const Real gi = g[i];
      const Real mi = b1 * m[i] + c1 * gi;
      const Real vi = b2 * v[i] + c2 * gi * gi;
      m[i] = mi;
      v[i] = vi;
      p[i] -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
    }
  });
  params.refresh_derived();
}

int warmup_iters(uint64_t chunk_index) {
  if (chunk_index <= 10) return 8;
  if (chunk_index <= 30) return 4;
  return 2;
}

template <class Real>
TrainResult train_chunk(Parameters<Real>& params, AdamState<Real>& adam,
                        const State<Real>& snapshot, std::span<const CompactTokenId> chunk,
                        uint64_t chunk_index, State<Real>& carry, ChunkWorkspace<Real>& ws,
                        std::vector<Real>& grads, const TrainOptions& opts) {
  TrainResult r;
  r.iterations = opts.iterations.value_or(warmup_iters(chunk_index));
  for (int it = 0; it < r.iterations; ++it) {
    const double loss = backprop_chunk(params, snapshot, chunk, params.config.label_smoothing,
                                       grads, ws, opts.warm && it == 0, opts.pool);
    if (it == 0) r.first_loss = loss;
    r.last_loss = loss;
    adam_update(params, grads, adam, opts.pool);
  }
  carry = snapshot;
  for (size_t t = 0; t + 1 < chunk.size(); ++t) {
    step_forward<Real>(params, carry, chunk[t], nullptr, nullptr, opts.pool);
  }
  return r;
}

#define STATESMIX_INSTANTIATE(Real)                                                              \
  template struct Parameters<Real>;                                                              \
  template struct State<Real>;                                                                   \
  template struct StepCache<Real>;                                                               \
  template struct ChunkWorkspace<Real>;                                                          \
  template Parameters<Real> init_params<Real>(const ModelConfig&, size_t);                       \
  template void step_forward<Real>(const Parameters<Real>&, State<Real>&, CompactTokenId, Real*, \
                                   StepCache<Real>*, ThreadPool*, const ForwardHooks&);          \
  template double chunk_loss<Real>(std::span<const Real>, std::span<const CompactTokenId>,       \
                                   size_t, double);                                              \
  template double backprop_chunk<Real>(const Parameters<Real>&, const State<Real>&,              \
                                       std::span<const CompactTokenId>, double,                  \
                                       std::vector<Real>&, ChunkWorkspace<Real>&, bool,          \
                                       ThreadPool*);                                             \
  template void adam_update<Real>(Parameters<Real>&, std::vector<Real>&, AdamState<Real>&,       \
                                  ThreadPool*);                                                  \
  template TrainResult train_chunk<Real>(Parameters<Real>&, AdamState<Real>&, const State<Real>&, \
                                         std::span<const CompactTokenId>, uint64_t, State<Real>&, \
                                         ChunkWorkspace<Real>&, std::vector<Real>&,              \
                                         const TrainOptions&);

STATESMIX_INSTANTIATE(float)
STATESMIX_INSTANTIATE(double)

#undef STATESMIX_INSTANTIATE

}  // namespace ssm
}  // namespace statesmix
