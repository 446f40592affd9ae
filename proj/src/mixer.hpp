#pragma once

// Entropy-adaptive mixing of SSM logits with count evidence, and the final
// softmax feeding the coder.

#include <cstdint>
#include <span>

#include "context_models.hpp"

namespace statesmix {

struct MixConfig {
  double beta = 0.6;
  double h0 = 5.5;  // nats
  double s_min = 0.2;
  double s_max = 2.5;

  void validate() const;
  bool operator==(const MixConfig&) const = default;
};

inline constexpr float kProbabilityFloor = 1e-12f;

// SSM logits cross into the mixer as Q16 fixed point, so any common offset
// cancels exactly when the maximum is subtracted.
inline constexpr double kLogitScale = 65536.0;
inline constexpr float kLogitClamp = 16384.0f;

void logits_to_q16(std::span<const float> logits, std::span<int32_t> q);
// (q - max q) / 2^16; the largest entry becomes exactly 0.
void centered_from_q16(std::span<const int32_t> q, std::span<float> out);

// -sum p ln p in nats.
double shannon_entropy(std::span<const float> p);
// Entropy of softmax(logits) via ln Z - sum p (l - max). `scratch` has the
// logits' length.
double softmax_entropy(std::span<const float> logits, std::span<float> scratch);

double adaptive_scale(double entropy, const MixConfig& cfg);

// out = ssm (zero when empty) + s * freq, then the n-gram, LZ and recency
// deltas in that order.
void combine_logits(std::span<const float> ssm, std::span<const float> freq_term,
                    const BiasSet& biases, std::span<float> out);

// Max-subtracted softmax, floored at 1e-12 and renormalized.
// Throws kNumericFault on non-finite input.
void softmax(std::span<const float> logits, std::span<float> probs);

}  // namespace statesmix
