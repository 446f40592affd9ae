#include "statesmix/statesmix.h"

#include <charconv>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "container.hpp"
#include "errors.hpp"
#include "pipeline.hpp"
#include "tokenizer.hpp"

using namespace statesmix;

struct ssmx_tokenizer {
  Tokenizer tok;
};

struct ssmx_options {
  CodecConfig cfg;
  ssmx_progress_fn progress = nullptr;
  void* progress_user = nullptr;
  ssmx_trace_fn trace = nullptr;
  void* trace_user = nullptr;
};

namespace {

thread_local std::string g_last_error;

ssmx_status set_error(ssmx_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
ssmx_status guarded(F&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const Error& e) {
    return set_error(static_cast<ssmx_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(SSMX_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(SSMX_ERR_INTERNAL, e.what());
  }
}

template <class T>
void parse_number(const char* key, const char* value, T& out) {
  const char* end = value + std::strlen(value);
  T v{};
  auto [p, ec] = std::from_chars(value, end, v);
  if (ec != std::errc() || p != end) {
    fail(ErrorCode::kInvalidArgument, std::string("bad value for ") + key + ": " + value);
  }
  out = v;
}

void parse_double(const char* key, const char* value, double& out) {
  char* end = nullptr;
  const double v = std::strtod(value, &end);
  if (end == value || *end != '\0') {
    fail(ErrorCode::kInvalidArgument, std::string("bad value for ") + key + ": " + value);
  }
  out = v;
}

ssmx_status emit(std::vector<uint8_t>&& bytes, ssmx_buffer* out) {
  out->size = bytes.size();
  out->data = nullptr;
  if (!bytes.empty()) {
    out->data = static_cast<uint8_t*>(std::malloc(bytes.size()));
    if (out->data == nullptr) throw std::bad_alloc();
    std::memcpy(out->data, bytes.data(), bytes.size());
  }
  return SSMX_OK;
}

void export_stats(const CodecStats& s, ssmx_stats* out) {
  if (out == nullptr) return;
  out->tokens = s.tokens;
  out->v_e = s.v_e;
  out->train_events = s.train_events;
  out->payload_bytes = s.payload_bytes;
  out->header_bytes = s.header_bytes;
  out->model_bits = s.model_bits;
  out->quantized_bits = s.quantized_bits;
}

CodecHooks hooks_for(const ssmx_options* opts) {
  CodecHooks h;
  if (opts && opts->progress) {
    auto fn = opts->progress;
    void* user = opts->progress_user;
    h.progress = [fn, user](uint64_t done, uint64_t total) { fn(done, total, user); };
  }
  return h;
}

}  // namespace

extern "C" {

const char* ssmx_version(void) { return "1.0.0"; }

const char* ssmx_status_string(ssmx_status status) {
  switch (status) {
    case SSMX_OK: return "ok";
    case SSMX_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SSMX_ERR_IO: return "i/o error";
    case SSMX_ERR_TOKENIZER_LOAD: return "tokenizer load error";
    case SSMX_ERR_BAD_MAGIC: return "bad magic";
    case SSMX_ERR_UNSUPPORTED_VERSION: return "unsupported version";
    case SSMX_ERR_SHORT_READ: return "short read";
    case SSMX_ERR_CORRUPT_ARCHIVE: return "corrupt archive";
    case SSMX_ERR_INCOMPATIBLE_TOKENIZER: return "incompatible tokenizer";
    case SSMX_ERR_CHECKSUM_MISMATCH: return "checksum mismatch";
    case SSMX_ERR_NUMERIC_FAULT: return "numeric fault";
    case SSMX_ERR_UNSUPPORTED_VOCABULARY: return "unsupported vocabulary";
    case SSMX_ERR_API_MISUSE: return "api misuse";
    case SSMX_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* ssmx_last_error_message(void) { return g_last_error.c_str(); }

ssmx_status ssmx_tokenizer_load(const char* path, ssmx_tokenizer** out) {
  if (path == nullptr || out == nullptr) return set_error(SSMX_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new ssmx_tokenizer{Tokenizer::load_file(path)};
    return SSMX_OK;
  });
}

void ssmx_tokenizer_free(ssmx_tokenizer* tok) { delete tok; }

uint64_t ssmx_tokenizer_fingerprint(const ssmx_tokenizer* tok) {
  return tok ? tok->tok.fingerprint() : 0;
}

size_t ssmx_tokenizer_vocab_size(const ssmx_tokenizer* tok) {
  return tok ? tok->tok.vocab_size() : 0;
}

ssmx_status ssmx_options_new(ssmx_options** out) {
  if (out == nullptr) return set_error(SSMX_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    *out = new ssmx_options();
    return SSMX_OK;
  });
}

void ssmx_options_free(ssmx_options* opts) { delete opts; }

ssmx_status ssmx_options_set(ssmx_options* opts, const char* key, const char* value) {
  if (opts == nullptr || key == nullptr || value == nullptr) {
    return set_error(SSMX_ERR_INVALID_ARGUMENT, "null argument");
  }
  return guarded([&] {
    CodecConfig c = opts->cfg;
    const std::string k = key;
    if (k == "seed") parse_number(key, value, c.model.seed);
    else if (k == "variant") {
      if (!parse_variant(value, c.variant)) {
        fail(ErrorCode::kInvalidArgument, std::string("unknown variant: ") + value);
      }
    }
    else if (k == "threads") parse_number(key, value, c.threads);
    else if (k == "stats_interval") parse_number(key, value, c.stats_interval);
    else if (k == "d_model") {
      parse_number(key, value, c.model.d_model);
      c.model.d_inner = 2 * c.model.d_model;
    }
    else if (k == "d_state") parse_number(key, value, c.model.d_state);
    else if (k == "d_conv") parse_number(key, value, c.model.d_conv);
    else if (k == "n_layers") parse_number(key, value, c.model.n_layers);
    else if (k == "chunk_size") parse_number(key, value, c.model.chunk_size);
    else if (k == "lr") parse_double(key, value, c.model.lr);
    else if (k == "label_smoothing") parse_double(key, value, c.model.label_smoothing);
    else if (k == "beta1") parse_double(key, value, c.model.beta1);
    else if (k == "beta2") parse_double(key, value, c.model.beta2);
    else if (k == "adam_eps") parse_double(key, value, c.model.adam_eps);
    else if (k == "grad_clip") parse_double(key, value, c.model.grad_clip);
    else if (k == "table_slots_log2") parse_number(key, value, c.context.table_slots_log2);
    else if (k == "lz_slots_log2") parse_number(key, value, c.context.lz_slots_log2);
    else if (k == "mix_beta") parse_double(key, value, c.mix.beta);
    else if (k == "mix_h0") parse_double(key, value, c.mix.h0);
    else if (k == "mix_s_min") parse_double(key, value, c.mix.s_min);
    else if (k == "mix_s_max") parse_double(key, value, c.mix.s_max);
    else fail(ErrorCode::kInvalidArgument, "unknown option: " + k);
    c.validate();
    opts->cfg = c;
    return SSMX_OK;
  });
}

ssmx_status ssmx_options_set_progress(ssmx_options* opts, ssmx_progress_fn fn, void* user) {
  if (opts == nullptr) return set_error(SSMX_ERR_INVALID_ARGUMENT, "null argument");
  opts->progress = fn;
  opts->progress_user = user;
  return SSMX_OK;
}

ssmx_status ssmx_options_set_trace(ssmx_options* opts, ssmx_trace_fn fn, void* user) {
  if (opts == nullptr) return set_error(SSMX_ERR_INVALID_ARGUMENT, "null argument");
  opts->trace = fn;
  opts->trace_user = user;
  return SSMX_OK;
}

ssmx_status ssmx_compress(const ssmx_tokenizer* tok, const ssmx_options* opts,
                          const uint8_t* data, size_t size, ssmx_buffer* out,
                          ssmx_stats* stats) {
  if (tok == nullptr || out == nullptr || (data == nullptr && size > 0)) {
    return set_error(SSMX_ERR_INVALID_ARGUMENT, "null argument");
  }
  *out = {nullptr, 0};
  return guarded([&] {
    const CodecConfig cfg = opts ? opts->cfg : CodecConfig{};
    CodecStats st;
    auto bytes = compress({data, size}, tok->tok, cfg, &st, hooks_for(opts));
    export_stats(st, stats);
    if (opts && opts->trace) {
      for (const auto& p : st.trace) {
        opts->trace(p.tokens_seen, p.cumulative_bits, p.interval_bpt, opts->trace_user);
      }
    }
    return emit(std::move(bytes), out);
  });
}

ssmx_status ssmx_decompress(const ssmx_tokenizer* tok, const ssmx_options* opts,
                            const uint8_t* data, size_t size, ssmx_buffer* out,
                            ssmx_stats* stats) {
  if (tok == nullptr || out == nullptr || (data == nullptr && size > 0)) {
    return set_error(SSMX_ERR_INVALID_ARGUMENT, "null argument");
  }
  *out = {nullptr, 0};
  return guarded([&] {
    const CodecConfig cfg = opts ? opts->cfg : CodecConfig{};
    CodecStats st;
    auto bytes = decompress({data, size}, tok->tok, cfg, &st, hooks_for(opts));
    export_stats(st, stats);
    return emit(std::move(bytes), out);
  });
}

void ssmx_buffer_free(ssmx_buffer* buf) {
  if (buf == nullptr) return;
  std::free(buf->data);
  buf->data = nullptr;
  buf->size = 0;
}

ssmx_status ssmx_archive_info_read(const uint8_t* data, size_t size, ssmx_archive_info* info) {
  if (info == nullptr || (data == nullptr && size > 0)) {
    return set_error(SSMX_ERR_INVALID_ARGUMENT, "null argument");
  }
  return guarded([&] {
    const ArchiveHeader h = read_header({data, size});
    info->version = h.version;
    info->flags = h.flags;
    info->original_length = h.original_length;
    info->token_count = h.token_count;
    info->v_e = h.v_e;
    info->tokenizer_fingerprint = h.tokenizer_fingerprint;
    info->seed = h.seed;
    info->rice_parameter = h.map.rice_parameter;
    info->map_length = static_cast<uint32_t>(h.map.payload.size());
    info->crc32 = h.crc32;
    info->payload_length = h.payload_length;
    info->has_config_block = h.config.has_value() ? 1 : 0;
    return SSMX_OK;
  });
}

}  // extern "C"
