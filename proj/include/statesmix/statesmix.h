#ifndef STATESMIX_STATESMIX_H
#define STATESMIX_STATESMIX_H

/* C interface to the statesmix text compressor. All functions are safe to
 * call concurrently on distinct objects. On failure a function returns a
 * nonzero status and ssmx_last_error_message() describes it (per thread). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SSMX_API __declspec(dllexport)
#else
#define SSMX_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ssmx_status {
  SSMX_OK = 0,
  SSMX_ERR_INVALID_ARGUMENT = 1,
  SSMX_ERR_IO = 2,
  SSMX_ERR_TOKENIZER_LOAD = 3,
  SSMX_ERR_BAD_MAGIC = 4,
  SSMX_ERR_UNSUPPORTED_VERSION = 5,
  SSMX_ERR_SHORT_READ = 6,
  SSMX_ERR_CORRUPT_ARCHIVE = 7,
  SSMX_ERR_INCOMPATIBLE_TOKENIZER = 8,
  SSMX_ERR_CHECKSUM_MISMATCH = 9,
  SSMX_ERR_NUMERIC_FAULT = 10,
  SSMX_ERR_UNSUPPORTED_VOCABULARY = 11,
  SSMX_ERR_API_MISUSE = 12,
  SSMX_ERR_INTERNAL = 13
} ssmx_status;

typedef struct ssmx_tokenizer ssmx_tokenizer;
typedef struct ssmx_options ssmx_options;

typedef struct ssmx_buffer {
  uint8_t* data;
  size_t size;
} ssmx_buffer;

typedef struct ssmx_stats {
  uint64_t tokens;
  uint64_t v_e;
  uint64_t train_events;
  uint64_t payload_bytes;
  uint64_t header_bytes;
  double model_bits;     /* -log2 p summed over tokens (compression only) */
  double quantized_bits; /* same under the integer CDF (compression only) */
} ssmx_stats;

typedef struct ssmx_archive_info {
  uint8_t version;
  uint8_t flags;
  uint64_t original_length;
  uint64_t token_count;
  uint32_t v_e;
  uint64_t tokenizer_fingerprint;
  uint64_t seed;
  uint8_t rice_parameter;
  uint32_t map_length;
  uint32_t crc32;
  uint64_t payload_length;
  int has_config_block;
} ssmx_archive_info;

/* done, total tokens */
typedef void (*ssmx_progress_fn)(uint64_t done, uint64_t total, void* user);
/* One call per progress sample after compression finishes. */
typedef void (*ssmx_trace_fn)(uint64_t tokens_seen, double cumulative_bits, double interval_bpt,
                              void* user);

SSMX_API const char* ssmx_version(void);
SSMX_API const char* ssmx_status_string(ssmx_status status);
SSMX_API const char* ssmx_last_error_message(void);

SSMX_API ssmx_status ssmx_tokenizer_load(const char* path, ssmx_tokenizer** out);
SSMX_API void ssmx_tokenizer_free(ssmx_tokenizer* tok);
SSMX_API uint64_t ssmx_tokenizer_fingerprint(const ssmx_tokenizer* tok);
SSMX_API size_t ssmx_tokenizer_vocab_size(const ssmx_tokenizer* tok);

SSMX_API ssmx_status ssmx_options_new(ssmx_options** out);
SSMX_API void ssmx_options_free(ssmx_options* opts);
/* Keys: seed, variant (count-only | ngram+count | ssm+count | full), threads,
 * stats_interval, d_model, d_state, d_conv, n_layers, chunk_size, lr,
 * label_smoothing, beta1, beta2, adam_eps, grad_clip, table_slots_log2,
 * lz_slots_log2, mix_beta, mix_h0, mix_s_min, mix_s_max. d_inner follows
 * d_model (2x). */
SSMX_API ssmx_status ssmx_options_set(ssmx_options* opts, const char* key, const char* value);
SSMX_API ssmx_status ssmx_options_set_progress(ssmx_options* opts, ssmx_progress_fn fn,
                                               void* user);
SSMX_API ssmx_status ssmx_options_set_trace(ssmx_options* opts, ssmx_trace_fn fn, void* user);

/* opts and stats may be NULL. On success *out owns a buffer released with
 * ssmx_buffer_free. */
SSMX_API ssmx_status ssmx_compress(const ssmx_tokenizer* tok, const ssmx_options* opts,
                                   const uint8_t* data, size_t size, ssmx_buffer* out,
                                   ssmx_stats* stats);
SSMX_API ssmx_status ssmx_decompress(const ssmx_tokenizer* tok, const ssmx_options* opts,
                                     const uint8_t* data, size_t size, ssmx_buffer* out,
                                     ssmx_stats* stats);
SSMX_API void ssmx_buffer_free(ssmx_buffer* buf);

SSMX_API ssmx_status ssmx_archive_info_read(const uint8_t* data, size_t size,
                                            ssmx_archive_info* info);

#ifdef __cplusplus
}
#endif

#endif
