#pragma once

// Online-trained two-layer Mamba predictor: deterministic initialization,
// single-token forward pass, exact truncated-BPTT gradients over a chunk and
// Adam with global-norm clipping. Templated on the scalar type so the codec
// can run in float while gradient checks run in double.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vocab_map.hpp"

namespace statesmix {

class ThreadPool;

struct ModelConfig {
  size_t d_model = 32;
  size_t d_state = 16;
  size_t d_inner = 64;
  size_t d_conv = 4;
  size_t n_layers = 2;
  size_t chunk_size = 32;
  double label_smoothing = 0.12;
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 5.0;
  uint64_t seed = 0;

  // Throws kInvalidArgument on inconsistent dimensions.
  void validate() const;
};

namespace ssm {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kProbFloor = 1e-12;

struct LayerOffsets {
  size_t ln_gain, ln_bias, w_in, conv_w, conv_b, w_xp, w_delta, b_delta, a_log, d_skip, w_out;
};

// Offsets of every tensor inside the flat parameter vector: per-layer blocks,
// the final LayerNorm, then embedding and head (v_e x d_model each).
struct ParamLayout {
  std::vector<LayerOffsets> layers;
  size_t final_gain = 0, final_bias = 0;
  size_t embedding = 0, head = 0;
  size_t fixed_count = 0;
  size_t total = 0;

  static ParamLayout make(const ModelConfig& cfg, size_t v_e);
};

size_t param_count(const ModelConfig& cfg, size_t v_e);

template <class Real>
struct Parameters {
  ModelConfig config;
  size_t v_e = 0;
  ParamLayout layout;
  std::vector<Real> data;
  // -exp(a_log) per layer, kept in sync by init_params and adam_update.
  // Call refresh_derived() after editing `data` directly.
  std::vector<Real> neg_a;

  void refresh_derived();
  Real* at(size_t offset) { return data.data() + offset; }
  const Real* at(size_t offset) const { return data.data() + offset; }
};

template <class Real>
struct State {
  std::vector<Real> hidden;  // n_layers x d_inner x d_state
  std::vector<Real> conv;    // n_layers x d_inner x (d_conv - 1), oldest first

  static State zeros(const ModelConfig& cfg);
  bool operator==(const State&) const = default;
};

template <class Real>
struct AdamState {
  std::vector<Real> m, v;
  uint64_t step = 0;

  static AdamState zeros(size_t n) { return {std::vector<Real>(n), std::vector<Real>(n), 0}; }
};

// Everything one forward step produces that backprop needs.
template <class Real>
struct StepCache {
  struct Layer {
    std::vector<Real> x_in, xhat, u, z, window, conv_pre, zt, bcd, delta_pre, delta, decay,
        h_prev, h, y, gate, o;
    Real rstd = 0;
  };
  std::vector<Layer> layers;
  std::vector<Real> x_last, xhat_final, x_fin;
  Real rstd_final = 0;
  CompactTokenId token = 0;

  void resize(const ModelConfig& cfg);
};

// Caches and logits for the chunk's prediction positions.
template <class Real>
struct ChunkWorkspace {
  std::vector<StepCache<Real>> steps;
  std::vector<Real> logits;  // positions x v_e
  std::vector<Real> dlogits;
  std::vector<Real> dx_partials;  // per head-row block partial sums
  size_t positions = 0;

  void prepare(const ModelConfig& cfg, size_t v_e, size_t positions);
};

struct ForwardHooks {
  // Channel whose step size is forced to zero in every layer (test hook).
  std::optional<size_t> zero_delta_channel;
};

template <class Real>
Parameters<Real> init_params(const ModelConfig& cfg, size_t v_e);

// Consumes `token`, advancing `state`. Writes v_e logits when `logits` is
// non-null and records intermediates when `cache` is non-null.
// Throws kNumericFault on non-finite results.
template <class Real>
void step_forward(const Parameters<Real>& params, State<Real>& state, CompactTokenId token,
                  Real* logits, StepCache<Real>* cache, ThreadPool* pool = nullptr,
                  const ForwardHooks& hooks = {});

// Label-smoothed cross entropy summed over positions, natural log units.
// Logits are row-major positions x v_e.
template <class Real>
double chunk_loss(std::span<const Real> logits, std::span<const CompactTokenId> targets,
                  size_t v_e, double epsilon);

// Gradients of chunk_loss over the chunk's within-chunk predictions, starting
// from `snapshot` (its own gradient is dropped). `grads` is resized and
// overwritten. When `warm` is true the workspace already holds the forward
// pass for these parameters and snapshot.
template <class Real>
double backprop_chunk(const Parameters<Real>& params, const State<Real>& snapshot,
                      std::span<const CompactTokenId> chunk, double epsilon,
                      std::vector<Real>& grads, ChunkWorkspace<Real>& ws, bool warm = false,
                      ThreadPool* pool = nullptr);

// Global-norm clipping to grad_clip, then bias-corrected Adam on every
// parameter. `grads` is clipped in place.
template <class Real>
void adam_update(Parameters<Real>& params, std::vector<Real>& grads, AdamState<Real>& adam,
                 ThreadPool* pool = nullptr);

int warmup_iters(uint64_t chunk_index);

struct TrainOptions {
  std::optional<int> iterations;  // overrides warmup_iters
  bool warm = false;              // workspace holds the first forward pass
  ThreadPool* pool = nullptr;
};

struct TrainResult {
  double first_loss = 0;
  double last_loss = 0;
  int iterations = 0;
};

// Runs warmup_iters(chunk_index) iterations of forward/backprop/Adam from the
// same snapshot, then rolls the updated model forward over the first C-1
// chunk tokens from the snapshot to produce the carried state.
template <class Real>
TrainResult train_chunk(Parameters<Real>& params, AdamState<Real>& adam,
                        const State<Real>& snapshot, std::span<const CompactTokenId> chunk,
                        uint64_t chunk_index, State<Real>& carry, ChunkWorkspace<Real>& ws,
                        std::vector<Real>& grads, const TrainOptions& opts = {});

}  // namespace ssm
}  // namespace statesmix
