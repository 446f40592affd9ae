#pragma once

// The predict / code / update loop shared by compression and decompression.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "container.hpp"
#include "context_models.hpp"
#include "mixer.hpp"
#include "ssm.hpp"
#include "tokenizer.hpp"

namespace statesmix {

enum class Variant : uint8_t { kCountOnly, kNgramCount, kSsmCount, kFull };

uint8_t variant_flags(Variant v);
Variant variant_from_flags(uint8_t flags);
const char* variant_name(Variant v);
// Accepts count-only, ngram+count, ssm+count, full.
bool parse_variant(const std::string& name, Variant& out);

struct CodecConfig {
  ModelConfig model;
  ContextConfig context;
  MixConfig mix;
  Variant variant = Variant::kFull;
  unsigned threads = 1;
  uint64_t stats_interval = 1000;  // tokens between progress samples

  void validate() const;
};

struct ProgressPoint {
  uint64_t tokens_seen;
  double cumulative_bits;
  double interval_bpt;
};

struct CodecStats {
  uint64_t tokens = 0;
  uint64_t v_e = 0;
  uint64_t train_events = 0;
  double model_bits = 0;      // sum of -log2 p(token) under the float model
  double quantized_bits = 0;  // sum of -log2(freq / T)
  uint64_t payload_bytes = 0;
  uint64_t header_bytes = 0;
  std::vector<ProgressPoint> trace;
};

enum class UpdateMutation : uint8_t {
  kNone,
  kSwapNgramAndLz,  // LZ update before the n-gram tables
  kSkipLz,          // LZ table never updated
};

// Test and observation hooks. None of them may be set in normal use except
// the read-only observers (progress, on_chunk).
struct CodecHooks {
  // Added to every Q16 SSM logit before mixing.
  int32_t ssm_logit_offset = 0;
  UpdateMutation mutation = UpdateMutation::kNone;
  // Called after every training event with the chunk index (1-based), the
  // updated parameters and the carried state.
  std::function<void(uint64_t, const ssm::Parameters<float>&, const ssm::State<float>&)> on_chunk;
  // Called every stats_interval tokens with (tokens done, total tokens).
  std::function<void(uint64_t, uint64_t)> progress;
};

std::vector<uint8_t> compress(std::span<const uint8_t> input, const Tokenizer& tok,
                              const CodecConfig& cfg, CodecStats* stats = nullptr,
                              const CodecHooks& hooks = {});

// Model settings come from the archive; only cfg.threads is used.
std::vector<uint8_t> decompress(std::span<const uint8_t> archive, const Tokenizer& tok,
                                const CodecConfig& cfg = {}, CodecStats* stats = nullptr,
                                const CodecHooks& hooks = {});

// Encodes or decodes an already remapped compact token stream with no
// header. Exposed for the replay and coder tests.
std::vector<uint8_t> encode_tokens(std::span<const CompactTokenId> tokens, size_t v_e,
                                   const CodecConfig& cfg, CodecStats* stats = nullptr,
                                   const CodecHooks& hooks = {});
std::vector<CompactTokenId> decode_tokens(std::span<const uint8_t> payload, uint64_t count,
                                          size_t v_e, const CodecConfig& cfg,
                                          CodecStats* stats = nullptr,
                                          const CodecHooks& hooks = {});

}  // namespace statesmix
