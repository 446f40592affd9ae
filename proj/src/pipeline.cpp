#include "pipeline.hpp"

#include <cmath>
#include <memory>

#include "errors.hpp"
#include "parallel.hpp"
#include "range_coder.hpp"

namespace statesmix {

uint8_t variant_flags(Variant v) {
  switch (v) {
    case Variant::kCountOnly: return 0;
    case Variant::kNgramCount: return kFlagNgrams;
    case Variant::kSsmCount: return kFlagSsm;
    case Variant::kFull: return kFlagSsm | kFlagNgrams;
  }
  return 0;
}

Variant variant_from_flags(uint8_t flags) {
  const bool ssm = flags & kFlagSsm, ngrams = flags & kFlagNgrams;
  if (ssm) return ngrams ? Variant::kFull : Variant::kSsmCount;
  return ngrams ? Variant::kNgramCount : Variant::kCountOnly;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kCountOnly: return "count-only";
    case Variant::kNgramCount: return "ngram+count";
    case Variant::kSsmCount: return "ssm+count";
    case Variant::kFull: return "full";
  }
  return "?";
}

bool parse_variant(const std::string& name, Variant& out) {
  for (Variant v : {Variant::kCountOnly, Variant::kNgramCount, Variant::kSsmCount, Variant::kFull}) {
    if (name == variant_name(v)) {
      out = v;
      return true;
    }
  }
  return false;
}

void CodecConfig::validate() const {
  model.validate();
  mix.validate();
  if (context.table_slots_log2 < 4 || context.table_slots_log2 > 30 ||
      context.lz_slots_log2 < 4 || context.lz_slots_log2 > 30) {
    fail(ErrorCode::kInvalidArgument, "table sizes must be between 2^4 and 2^30 slots");
  }
  if (threads == 0) fail(ErrorCode::kInvalidArgument, "threads must be >= 1");
  if (stats_interval == 0) fail(ErrorCode::kInvalidArgument, "stats interval must be >= 1");
}

namespace {

bool has_ssm(Variant v) { return v == Variant::kSsmCount || v == Variant::kFull; }
bool has_ngrams(Variant v) { return v == Variant::kNgramCount || v == Variant::kFull; }

// Model side of the loop: everything except the coder. The encoder and the
// decoder each own one and drive it identically.
class Predictor {
 public:
  Predictor(size_t v_e, const CodecConfig& cfg, const CodecHooks& hooks, ThreadPool* pool)
      : cfg_(cfg),
        hooks_(hooks),
        pool_(pool),
        v_e_(v_e),
        ssm_(has_ssm(cfg.variant)),
        ctx_(v_e, context_config(cfg)),
        logits_(v_e),
        probs_(v_e) {
    if (ssm_) {
      params_ = ssm::init_params<float>(cfg.model, v_e);
      adam_ = ssm::AdamState<float>::zeros(params_.data.size());
      state_ = ssm::State<float>::zeros(cfg.model);
      snapshot_ = state_;
      row_.resize(v_e);
      q16_.resize(v_e);
      centered_.resize(v_e);
      scratch_.resize(v_e);
    }
  }

  const QuantizedCdf& predict(std::span<const CompactTokenId> history) {
    const size_t i = history.size();
    std::span<const float> ssm_logits;
    float scale = 1.0f;
    if (ssm_ && i > 0) {
      const size_t C = cfg_.model.chunk_size;
      const size_t t = (i - 1) % C;
      if (t == 0) {
        snapshot_ = state_;
        ws_.prepare(cfg_.model, v_e_, C - 1);
      }
      float* row = row_.data();
      ssm::StepCache<float>* cache = nullptr;
      if (t + 1 < C) {
        row = ws_.logits.data() + t * v_e_;
        cache = &ws_.steps[t];
      }
      ssm::step_forward(params_, state_, history[i - 1], row, cache, pool_);
      logits_to_q16({row, v_e_}, q16_);
      if (hooks_.ssm_logit_offset != 0) {
        for (auto& q : q16_) q += hooks_.ssm_logit_offset;
      }
      centered_from_q16(q16_, centered_);
      const double h = softmax_entropy(centered_, scratch_);
      scale = static_cast<float>(adaptive_scale(h, cfg_.mix));
      ssm_logits = centered_;
    }
    ctx_.gather(history, scale, biases_);
    combine_logits(ssm_logits, ctx_.counts().freq_term(), biases_, logits_);
    softmax(logits_, probs_);
    quantize_cdf(probs_, cdf_);
    return cdf_;
  }

  float probability(CompactTokenId tok) const { return probs_[tok]; }

  // `history` now ends with the token just coded.
  void update(std::span<const CompactTokenId> history) {
    switch (hooks_.mutation) {
      case UpdateMutation::kNone:
        ctx_.update(history);
        break;
      case UpdateMutation::kSwapNgramAndLz:
        ctx_.update_counts(history);
        ctx_.update_lz(history);
        ctx_.update_ngrams(history);
        break;
      case UpdateMutation::kSkipLz:
        ctx_.update_counts(history);
        ctx_.update_ngrams(history);
        break;
    }
    const size_t i = history.size();
    const size_t C = cfg_.model.chunk_size;
    if (ssm_ && i % C == 0) {
      const uint64_t k = i / C;
      ssm::TrainOptions opts;
      opts.warm = true;
      opts.pool = pool_;
      ssm::train_chunk(params_, adam_, snapshot_, history.subspan(i - C, C), k, state_, ws_,
                       grads_, opts);
      ++train_events_;
      if (hooks_.on_chunk) hooks_.on_chunk(k, params_, state_);
    }
  }

  uint64_t train_events() const { return train_events_; }

 private:
  static ContextConfig context_config(const CodecConfig& cfg) {
    ContextConfig c = cfg.context;
    c.use_ngrams = has_ngrams(cfg.variant);
    return c;
  }

  const CodecConfig& cfg_;
  const CodecHooks& hooks_;
  ThreadPool* pool_;
  size_t v_e_;
  bool ssm_;
  ContextModels ctx_;

  ssm::Parameters<float> params_;
  ssm::AdamState<float> adam_;
  ssm::State<float> state_, snapshot_;
  ssm::ChunkWorkspace<float> ws_;
  std::vector<float> grads_;
  std::vector<float> row_;
  std::vector<int32_t> q16_;
  std::vector<float> centered_, scratch_;
  uint64_t train_events_ = 0;

  BiasSet biases_;
  std::vector<float> logits_, probs_;
  QuantizedCdf cdf_;
};

std::unique_ptr<ThreadPool> make_pool(unsigned threads) {
  return threads > 1 ? std::make_unique<ThreadPool>(threads) : nullptr;
}

void check_vocabulary(size_t v_e) {
  if (v_e >= kCdfTotal) {
    fail(ErrorCode::kUnsupportedVocabulary,
         "file uses " + std::to_string(v_e) + " distinct tokens; the coder supports at most " +
             std::to_string(kCdfTotal - 1));
  }
}

}  // namespace

std::vector<uint8_t> encode_tokens(std::span<const CompactTokenId> tokens, size_t v_e,
                                   const CodecConfig& cfg, CodecStats* stats,
                                   const CodecHooks& hooks) {
  cfg.validate();
  check_vocabulary(v_e);
  CodecStats local;
  CodecStats& st = stats ? *stats : local;
  st = CodecStats{};
  st.tokens = tokens.size();
  st.v_e = v_e;
  if (tokens.empty()) return {};

  DenormalGuard ftz;
  auto pool = make_pool(cfg.threads);
  Predictor model(v_e, cfg, hooks, pool.get());
  RangeEncoder enc;
  uint64_t last_tokens = 0;
  double last_bits = 0;
  for (size_t i = 0; i < tokens.size(); ++i) {
    const CompactTokenId tok = tokens[i];
    if (tok >= v_e) fail(ErrorCode::kInvalidArgument, "token outside compact vocabulary");
    const QuantizedCdf& cdf = model.predict(tokens.first(i));
    enc.encode_symbol(cdf, tok);
    st.model_bits -= std::log2(static_cast<double>(model.probability(tok)));
    st.quantized_bits -= std::log2(static_cast<double>(cdf.freq[tok]) / kCdfTotal);
    model.update(tokens.first(i + 1));

    const uint64_t done = i + 1;
    if (done % cfg.stats_interval == 0 || done == tokens.size()) {
      const auto bits = static_cast<double>(enc.bits_written());
      st.trace.push_back({done, bits, (bits - last_bits) / static_cast<double>(done - last_tokens)});
      last_bits = bits;
      last_tokens = done;
      if (hooks.progress) hooks.progress(done, tokens.size());
    }
  }
  st.train_events = model.train_events();
  auto payload = enc.finish();
  st.payload_bytes = payload.size();
  return payload;
}

std::vector<CompactTokenId> decode_tokens(std::span<const uint8_t> payload, uint64_t count,
                                          size_t v_e, const CodecConfig& cfg, CodecStats* stats,
                                          const CodecHooks& hooks) {
  cfg.validate();
  check_vocabulary(v_e);
  CodecStats local;
  CodecStats& st = stats ? *stats : local;
  st = CodecStats{};
  st.tokens = count;
  st.v_e = v_e;
  st.payload_bytes = payload.size();
  std::vector<CompactTokenId> tokens;
  if (count == 0) return tokens;
  if (v_e == 0) fail(ErrorCode::kCorruptArchive, "tokens without a vocabulary");
  // Every token costs at least a fraction of a bit only when the model is
  // sure; cap the reservation so a forged count cannot exhaust memory.
  tokens.reserve(static_cast<size_t>(std::min<uint64_t>(count, uint64_t{1} << 24)));

  DenormalGuard ftz;
  auto pool = make_pool(cfg.threads);
  Predictor model(v_e, cfg, hooks, pool.get());
  RangeDecoder dec(payload);
  for (uint64_t i = 0; i < count; ++i) {
    const QuantizedCdf& cdf = model.predict(tokens);
    tokens.push_back(dec.decode_symbol(cdf));
    model.update(tokens);
    if (hooks.progress && ((i + 1) % cfg.stats_interval == 0 || i + 1 == count)) {
      hooks.progress(i + 1, count);
    }
  }
  st.train_events = model.train_events();
  return tokens;
}

std::vector<uint8_t> compress(std::span<const uint8_t> input, const Tokenizer& tok,
                              const CodecConfig& cfg, CodecStats* stats,
                              const CodecHooks& hooks) {
  cfg.validate();
  const auto global = tok.encode(input);
  auto [map, compact] = build_vocab_map(global);
  check_vocabulary(map.size());

  Archive a;
  a.payload = encode_tokens(compact, map.size(), cfg, stats, hooks);
  ArchiveHeader& h = a.header;
  h.flags = variant_flags(cfg.variant);
  h.original_length = input.size();
  h.token_count = compact.size();
  h.v_e = static_cast<uint32_t>(map.size());
  h.tokenizer_fingerprint = tok.fingerprint();
  h.seed = cfg.model.seed;
  const ConfigBlock block = make_config_block(cfg.model, cfg.context, cfg.mix);
  const CodecConfig defaults;
  if (block != make_config_block(defaults.model, defaults.context, defaults.mix)) {
    h.flags |= kFlagConfigBlock;
    h.config = block;
  }
  h.map = rice_encode_map(map);
  h.crc32 = crc32_of(input);
  h.payload_length = a.payload.size();
  auto out = write_archive(a);
  if (stats) stats->header_bytes = out.size() - a.payload.size();
  return out;
}

std::vector<uint8_t> decompress(std::span<const uint8_t> archive, const Tokenizer& tok,
                                const CodecConfig& cfg, CodecStats* stats,
                                const CodecHooks& hooks) {
  const Archive a = read_archive(archive);
  const ArchiveHeader& h = a.header;
  if (h.tokenizer_fingerprint != tok.fingerprint()) {
    fail(ErrorCode::kIncompatibleTokenizer, "archive was written with a different tokenizer");
  }
  CodecConfig dc;
  dc.threads = cfg.threads;
  dc.stats_interval = cfg.stats_interval;
  dc.variant = variant_from_flags(h.flags);
  if (h.config) apply_config_block(*h.config, dc.model, dc.context, dc.mix);
  dc.model.seed = h.seed;
  try {
    dc.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kCorruptArchive, std::string("archive config invalid: ") + e.what());
  }

  const VocabMap map = rice_decode_map(h.map, h.v_e);
  if (map.size() > tok.vocab_size() ||
      (map.size() > 0 && map.compact_to_global().back() >= tok.vocab_size())) {
    fail(ErrorCode::kCorruptArchive, "vocabulary map exceeds the tokenizer");
  }
  const auto compact = decode_tokens(a.payload, h.token_count, map.size(), dc, stats, hooks);
  std::vector<GlobalTokenId> global(compact.size());
  for (size_t i = 0; i < compact.size(); ++i) global[i] = map.to_global(compact[i]);
  auto out = tok.decode(global);
  if (stats) stats->header_bytes = archive.size() - a.payload.size();
  if (out.size() != h.original_length || crc32_of(out) != h.crc32) {
    fail(ErrorCode::kChecksumMismatch, "decoded data does not match the stored checksum");
  }
  return out;
}

}  // namespace statesmix
