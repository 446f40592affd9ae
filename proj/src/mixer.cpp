#include "mixer.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "kernels.hpp"

namespace statesmix {

void MixConfig::validate() const {
  if (!(h0 > 0) || !(s_min <= s_max) || !(beta >= 0 && beta <= 1)) {
    fail(ErrorCode::kInvalidArgument, "mixer config out of range");
  }
}

void logits_to_q16(std::span<const float> logits, std::span<int32_t> q) {
  for (size_t j = 0; j < logits.size(); ++j) {
    const float x = std::clamp(logits[j], -kLogitClamp, kLogitClamp);
    q[j] = static_cast<int32_t>(std::floor(static_cast<double>(x) * kLogitScale + 0.5));
  }
}

void centered_from_q16(std::span<const int32_t> q, std::span<float> out) {
  if (q.empty()) return;
  const int32_t m = *std::max_element(q.begin(), q.end());
  constexpr float inv = static_cast<float>(1.0 / kLogitScale);
  for (size_t j = 0; j < q.size(); ++j) {
    out[j] = static_cast<float>(static_cast<int64_t>(q[j]) - m) * inv;
  }
}

double shannon_entropy(std::span<const float> p) {
  double h = 0;
  for (float x : p) {
    const double v = std::max(static_cast<double>(x), static_cast<double>(kProbabilityFloor));
    h -= static_cast<double>(x) * std::log(v);
  }
  return h;
}

double softmax_entropy(std::span<const float> logits, std::span<float> scratch) {
  const size_t n = logits.size();
  if (n == 0) return 0;
  const float m = kernels::max_value(logits.data(), n);
  for (size_t j = 0; j < n; ++j) scratch[j] = std::exp(logits[j] - m);
  const float z = kernels::sum(scratch.data(), n);
  for (size_t j = 0; j < n; ++j) scratch[j] *= logits[j] - m;
  const float weighted = kernels::sum(scratch.data(), n);
  return std::max(0.0, std::log(static_cast<double>(z)) -
                           static_cast<double>(weighted) / static_cast<double>(z));
}

double adaptive_scale(double entropy, const MixConfig& cfg) {
  return std::clamp((1.0 - cfg.beta) + cfg.beta * entropy / cfg.h0, cfg.s_min, cfg.s_max);
}

void combine_logits(std::span<const float> ssm, std::span<const float> freq_term,
                    const BiasSet& biases, std::span<float> out) {
  const size_t n = out.size();
  const float s = biases.scale;
  if (ssm.empty()) {
    for (size_t j = 0; j < n; ++j) out[j] = s * freq_term[j];
  } else {
    for (size_t j = 0; j < n; ++j) out[j] = ssm[j] + s * freq_term[j];
  }
  for (const auto& d : biases.ngram) out[d.token] += d.delta;
  if (biases.lz) out[biases.lz->token] += biases.lz->boost;
  for (const auto& d : biases.recency) out[d.token] += d.delta;
}

void softmax(std::span<const float> logits, std::span<float> probs) {
  const size_t n = logits.size();
  if (n == 0) return;
  if (!kernels::all_finite(logits.data(), n)) fail(ErrorCode::kNumericFault, "non-finite logits");
  const float m = kernels::max_value(logits.data(), n);
  for (size_t j = 0; j < n; ++j) probs[j] = std::exp(logits[j] - m);
  const float inv_z = 1.0f / kernels::sum(probs.data(), n);
  for (size_t j = 0; j < n; ++j) probs[j] = std::max(probs[j] * inv_z, kProbabilityFloor);
  const float inv_s = 1.0f / kernels::sum(probs.data(), n);
  for (size_t j = 0; j < n; ++j) probs[j] *= inv_s;
}

}  // namespace statesmix
