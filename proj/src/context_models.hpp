#pragma once

// Count-based evidence: n-gram tables with sparse logit bias, the bigram
// direct array, the LZ predictor, the recency window and the global
// frequency prior.

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "vocab_map.hpp"

namespace statesmix {

// Murmur3 fmix64 finalizer.
constexpr uint64_t mix64(uint64_t k) {
  k ^= k >> 33;
  k *= 0xff51afd7ed558ccdULL;
  k ^= k >> 33;
  k *= 0xc4ceb9fe1a85ec53ULL;
  k ^= k >> 33;
  return k;
}

enum class KeyMode : uint8_t { kDirect, kExact, kRolling };

struct NgramOrderConfig {
  uint32_t context_length;
  double lambda;
  double alpha;
  KeyMode mode;
};

inline constexpr size_t kNumOrders = 9;
// Bigram first (direct array), then the eight hashed orders.
const std::array<NgramOrderConfig, kNumOrders>& ngram_orders();

inline constexpr uint64_t kEmptyKey = 0;
inline constexpr uint64_t kZeroKeyReplacement = 1ULL << 63;
inline constexpr uint64_t kRollingMultiplier = 104729;

// Key for the last `context_length` tokens of `history` (newest last).
// Exact mode packs 16 bits per token with the most recent lowest.
uint64_t context_key(KeyMode mode, uint32_t context_length,
                     std::span<const CompactTokenId> history);

// delta = lambda * ln(1 + c / alpha)
double ngram_delta(uint32_t count, double lambda, double alpha);

struct SparseDelta {
  CompactTokenId token;
  float delta;
};

// Growable (token, count) lists stored in fixed capacity classes 4, 8, 16
// and 32. Entries pack token << 16 | count; a zero count ends a list.
class SparseListArena {
 public:
  static constexpr uint32_t kNull = 0;
  static constexpr uint32_t kMaxCapacity = 32;
  static constexpr uint32_t kMaxCount = 0xffff;

  uint32_t create(CompactTokenId token);
  // Adds one occurrence, growing or evicting as needed; may change `handle`.
  void increment(uint32_t& handle, CompactTokenId token);
  std::span<const uint32_t> entries(uint32_t handle) const;
  uint32_t capacity(uint32_t handle) const;
  size_t bytes_used() const;

  static CompactTokenId entry_token(uint32_t e) { return e >> 16; }
  static uint32_t entry_count(uint32_t e) { return e & 0xffff; }

 private:
  static constexpr size_t kClasses = 4;
  uint32_t allocate(size_t cls);
  uint32_t* block(uint32_t handle);
  const uint32_t* block(uint32_t handle) const;

  std::array<std::vector<uint32_t>, kClasses> pools_;
  std::array<std::vector<uint32_t>, kClasses> free_;
};

struct FreeDeleter {
  void operator()(void* p) const { std::free(p); }
};

// Open-addressed table from 64-bit context keys to sparse count lists.
// Slot = mix64(key) mod 2^slots_log2; linear probing up to 8 slots; inserts
// that find no free slot are discarded.
class NgramTable {
 public:
  static constexpr unsigned kProbeDepth = 8;

  explicit NgramTable(unsigned slots_log2 = 24);

  // List handle for `key` (0 when absent). `extra_probes` receives the
  // number of slots visited beyond the home slot when found.
  uint32_t lookup(uint64_t key, unsigned* extra_probes = nullptr) const;
  void update(uint64_t key, CompactTokenId token);

  const SparseListArena& arena() const { return arena_; }
  size_t slots() const { return mask_ + 1; }
  size_t occupied() const { return occupied_; }
  uint64_t dropped() const { return dropped_; }

 private:
  size_t mask_;
  std::unique_ptr<uint64_t[], FreeDeleter> keys_;
  std::unique_ptr<uint32_t[], FreeDeleter> lists_;
  SparseListArena arena_;
  size_t occupied_ = 0;
  uint64_t dropped_ = 0;
};

class BigramArray {
 public:
  explicit BigramArray(size_t v_e) : heads_(v_e, SparseListArena::kNull) {}
  uint32_t lookup(CompactTokenId prev) const { return heads_[prev]; }
  void update(CompactTokenId prev, CompactTokenId next);
  const SparseListArena& arena() const { return arena_; }

 private:
  std::vector<uint32_t> heads_;
  SparseListArena arena_;
};

inline constexpr double kLzMaxBoost = 1.5;
inline constexpr double kLzRate = 0.3;

// B * (1 - 1 / (1 + 0.3 c))
double lz_boost(uint32_t confidence);

struct LzPrediction {
  CompactTokenId token;
  float boost;
};

// Single-entry table keyed by the two preceding tokens.
class LzTable {
 public:
  explicit LzTable(unsigned slots_log2 = 22);
  std::optional<LzPrediction> predict(CompactTokenId t2, CompactTokenId t1) const;
  void update(CompactTokenId t2, CompactTokenId t1, CompactTokenId actual);

  struct Entry {
    uint64_t key;
    uint32_t token;
    uint32_t count;
  };
  const Entry* find(CompactTokenId t2, CompactTokenId t1) const;

 private:
  static uint64_t key_of(CompactTokenId t2, CompactTokenId t1);
  size_t mask_;
  std::unique_ptr<Entry[], FreeDeleter> entries_;
};

inline constexpr size_t kRecencyWindow = 64;
inline constexpr double kRecencyLambda = 0.05;

// Bonus for the j-th most recent distinct token (j = 1 newest).
double recency_bonus(size_t j);

class RecencyWindow {
 public:
  void push(CompactTokenId token);
  size_t size() const { return size_; }
  // Newest first; a repeated token keeps only its most recent slot.
  void bias(std::vector<SparseDelta>& out) const;

 private:
  std::array<CompactTokenId, kRecencyWindow> ring_{};
  size_t head_ = 0;  // next write position
  size_t size_ = 0;
};

inline constexpr double kFreqLambda = 0.1;

class GlobalCounts {
 public:
  explicit GlobalCounts(size_t v_e) : counts_(v_e, 0), term_(v_e, 0.0f) {}
  void add(CompactTokenId token);
  uint64_t count(CompactTokenId token) const { return counts_[token]; }
  uint64_t total() const { return total_; }
  // 0.1 * ln(c + 1) per compact id.
  std::span<const float> freq_term() const { return term_; }

 private:
  std::vector<uint64_t> counts_;
  std::vector<float> term_;
  uint64_t total_ = 0;
};

struct ContextConfig {
  unsigned table_slots_log2 = 24;
  unsigned lz_slots_log2 = 22;
  // When false only the global frequency prior is kept (no n-gram, LZ or
  // recency evidence).
  bool use_ngrams = true;
};

// Everything gather_all_biases produces for one position.
struct BiasSet {
  float scale = 1.0f;
  std::vector<SparseDelta> ngram;  // already multiplied by scale, order by order
  std::optional<LzPrediction> lz;
  std::vector<SparseDelta> recency;

  void clear() {
    ngram.clear();
    lz.reset();
    recency.clear();
  }
};

class ContextModels {
 public:
  ContextModels(size_t v_e, const ContextConfig& cfg);

  // Biases for predicting the token after `history` (all tokens so far).
  void gather(std::span<const CompactTokenId> history, float scale, BiasSet& out) const;
  // Mutation for the token just coded; `history` ends with it. Order:
  // recency and global counts, bigram and hashed tables, then LZ.
  void update(std::span<const CompactTokenId> history) {
    update_counts(history);
    update_ngrams(history);
    update_lz(history);
  }
  void update_counts(std::span<const CompactTokenId> history);
  void update_ngrams(std::span<const CompactTokenId> history);
  void update_lz(std::span<const CompactTokenId> history);

  const GlobalCounts& counts() const { return counts_; }
  const NgramTable& table(size_t i) const { return tables_[i]; }  // hashed order i+1
  const BigramArray& bigram() const { return bigram_; }
  const LzTable& lz() const { return lz_; }
  const RecencyWindow& recency() const { return recency_; }
  const ContextConfig& config() const { return cfg_; }

 private:
  ContextConfig cfg_;
  GlobalCounts counts_;
  RecencyWindow recency_;
  BigramArray bigram_;
  std::vector<NgramTable> tables_;
  LzTable lz_;
};

}  // namespace statesmix
