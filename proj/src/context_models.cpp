#include "context_models.hpp"

#include <algorithm>
#include <cmath>
#include <new>

#include "errors.hpp"

namespace statesmix {

const std::array<NgramOrderConfig, kNumOrders>& ngram_orders() {
  static const std::array<NgramOrderConfig, kNumOrders> orders = {{
      {1, 0.15, 0.10, KeyMode::kDirect},
      {2, 0.10, 0.05, KeyMode::kExact},
      {3, 0.08, 0.03, KeyMode::kExact},
      {4, 0.06, 0.02, KeyMode::kRolling},
      {5, 0.05, 0.015, KeyMode::kRolling},
      {6, 0.04, 0.010, KeyMode::kRolling},
      {7, 0.03, 0.008, KeyMode::kRolling},
      {15, 0.50, 0.001, KeyMode::kRolling},
      {31, 1.00, 0.001, KeyMode::kRolling},
  }};
  return orders;
}

uint64_t context_key(KeyMode mode, uint32_t context_length,
                     std::span<const CompactTokenId> history) {
  if (history.size() < context_length) fail(ErrorCode::kInternal, "context longer than history");
  const auto ctx = history.last(context_length);
  uint64_t key = 0;
  if (mode == KeyMode::kRolling) {
    key = context_length;
    for (CompactTokenId id : ctx) key = key * kRollingMultiplier + id;
    key = mix64(key);
  } else {
    if (context_length > 4) fail(ErrorCode::kInternal, "exact keys hold at most four tokens");
    for (size_t i = 0; i < context_length; ++i) {
      const CompactTokenId id = ctx[context_length - 1 - i];
      if (id > 0xffff) fail(ErrorCode::kInternal, "compact id too large for exact key");
      key |= static_cast<uint64_t>(id) << (16 * i);
    }
  }
  return key == kEmptyKey ? kZeroKeyReplacement : key;
}

double ngram_delta(uint32_t count, double lambda, double alpha) {
  return lambda * std::log1p(static_cast<double>(count) / alpha);
}

// --- SparseListArena -------------------------------------------------------

namespace {
constexpr uint32_t class_capacity(size_t cls) { return 4u << cls; }
}  // namespace

uint32_t SparseListArena::allocate(size_t cls) {
  uint32_t index;
  if (!free_[cls].empty()) {
    index = free_[cls].back();
    free_[cls].pop_back();
    std::fill_n(pools_[cls].begin() + static_cast<ptrdiff_t>(index) * class_capacity(cls),
                class_capacity(cls), 0u);
  } else {
    index = static_cast<uint32_t>(pools_[cls].size() / class_capacity(cls));
    if (index >= (1u << 29)) fail(ErrorCode::kInternal, "sparse list arena exhausted");
    pools_[cls].resize(pools_[cls].size() + class_capacity(cls), 0u);
  }
  return ((index << 2) | static_cast<uint32_t>(cls)) + 1;
}

uint32_t* SparseListArena::block(uint32_t handle) {
  const uint32_t h = handle - 1;
  const size_t cls = h & 3;
  return pools_[cls].data() + static_cast<size_t>(h >> 2) * class_capacity(cls);
}

const uint32_t* SparseListArena::block(uint32_t handle) const {
  const uint32_t h = handle - 1;
  const size_t cls = h & 3;
  return pools_[cls].data() + static_cast<size_t>(h >> 2) * class_capacity(cls);
}

uint32_t SparseListArena::capacity(uint32_t handle) const {
  return handle == kNull ? 0 : class_capacity((handle - 1) & 3);
}

std::span<const uint32_t> SparseListArena::entries(uint32_t handle) const {
  if (handle == kNull) return {};
  const uint32_t* b = block(handle);
  const uint32_t cap = capacity(handle);
  uint32_t n = 0;
  while (n < cap && entry_count(b[n]) != 0) ++n;
  return {b, n};
}

uint32_t SparseListArena::create(CompactTokenId token) {
  const uint32_t h = allocate(0);
  block(h)[0] = (token << 16) | 1u;
  return h;
}

void SparseListArena::increment(uint32_t& handle, CompactTokenId token) {
  if (handle == kNull) {
    handle = create(token);
    return;
  }
  uint32_t* b = block(handle);
  const uint32_t cap = capacity(handle);
  uint32_t n = 0;
  for (; n < cap && entry_count(b[n]) != 0; ++n) {
    if (entry_token(b[n]) == token) {
      if (entry_count(b[n]) < kMaxCount) b[n] += 1;
      return;
    }
  }
  if (n < cap) {
    b[n] = (token << 16) | 1u;
    return;
  }
  if (cap == kMaxCapacity) {
    uint32_t victim = 0;
    for (uint32_t i = 1; i < cap; ++i) {
      if (entry_count(b[i]) < entry_count(b[victim])) victim = i;
    }
    b[victim] = (token << 16) | 1u;
    return;
  }
  const size_t cls = (handle - 1) & 3;
  const uint32_t grown = allocate(cls + 1);
  // allocate() may reallocate the pool that holds the old block.
  const uint32_t* old = block(handle);
  uint32_t* nb = block(grown);
  std::copy_n(old, cap, nb);
  nb[cap] = (token << 16) | 1u;
  free_[cls].push_back((handle - 1) >> 2);
  handle = grown;
}

size_t SparseListArena::bytes_used() const {
  size_t n = 0;
  for (const auto& p : pools_) n += p.capacity() * sizeof(uint32_t);
  return n;
}

// --- NgramTable --------------------------------------------------------------

template <class T>
static std::unique_ptr<T[], FreeDeleter> zeroed(size_t n) {
  void* p = std::calloc(n, sizeof(T));
  if (p == nullptr) throw std::bad_alloc();
  return std::unique_ptr<T[], FreeDeleter>(static_cast<T*>(p));
}

NgramTable::NgramTable(unsigned slots_log2)
    : mask_((size_t{1} << slots_log2) - 1),
      keys_(zeroed<uint64_t>(mask_ + 1)),
      lists_(zeroed<uint32_t>(mask_ + 1)) {
  if (slots_log2 < 4 || slots_log2 > 30) fail(ErrorCode::kInvalidArgument, "table size out of range");
}

uint32_t NgramTable::lookup(uint64_t key, unsigned* extra_probes) const {
  const size_t home = static_cast<size_t>(mix64(key)) & mask_;
  for (unsigned i = 0; i < kProbeDepth; ++i) {
    const size_t s = (home + i) & mask_;
    if (keys_[s] == key) {
      if (extra_probes) *extra_probes = i;
      return lists_[s];
    }
    if (keys_[s] == kEmptyKey) break;
  }
  return SparseListArena::kNull;
}

void NgramTable::update(uint64_t key, CompactTokenId token) {
  const size_t home = static_cast<size_t>(mix64(key)) & mask_;
  for (unsigned i = 0; i < kProbeDepth; ++i) {
    const size_t s = (home + i) & mask_;
    if (keys_[s] == key) {
      arena_.increment(lists_[s], token);
      return;
    }
    if (keys_[s] == kEmptyKey) {
      keys_[s] = key;
      lists_[s] = arena_.create(token);
      ++occupied_;
      return;
    }
  }
  ++dropped_;
}

void BigramArray::update(CompactTokenId prev, CompactTokenId next) {
  arena_.increment(heads_[prev], next);
}

// --- LZ ------------------------------------------------------------------------

double lz_boost(uint32_t confidence) {
  return kLzMaxBoost * (1.0 - 1.0 / (1.0 + static_cast<double>(confidence) * kLzRate));
}

LzTable::LzTable(unsigned slots_log2)
    : mask_((size_t{1} << slots_log2) - 1), entries_(zeroed<Entry>(mask_ + 1)) {}

uint64_t LzTable::key_of(CompactTokenId t2, CompactTokenId t1) {
  const uint64_t k = (static_cast<uint64_t>(t2) << 32) | t1;
  return k == kEmptyKey ? kZeroKeyReplacement : k;
}

const LzTable::Entry* LzTable::find(CompactTokenId t2, CompactTokenId t1) const {
  const uint64_t key = key_of(t2, t1);
  const Entry& e = entries_[static_cast<size_t>(mix64(key)) & mask_];
  return e.key == key ? &e : nullptr;
}

std::optional<LzPrediction> LzTable::predict(CompactTokenId t2, CompactTokenId t1) const {
  const Entry* e = find(t2, t1);
  if (e == nullptr) return std::nullopt;
  return LzPrediction{e->token, static_cast<float>(lz_boost(e->count))};
}

void LzTable::update(CompactTokenId t2, CompactTokenId t1, CompactTokenId actual) {
  const uint64_t key = key_of(t2, t1);
  Entry& e = entries_[static_cast<size_t>(mix64(key)) & mask_];
  if (e.key == key && e.token == actual) {
    if (e.count != UINT32_MAX) ++e.count;
  } else {
    e = Entry{key, actual, 1};
  }
}

// --- Recency / global counts ----------------------------------------------------

double recency_bonus(size_t j) {
  const double age = static_cast<double>(j - 1) / static_cast<double>(kRecencyWindow);
  return kRecencyLambda * std::exp(-3.0 * age);
}

void RecencyWindow::push(CompactTokenId token) {
  ring_[head_] = token;
  head_ = (head_ + 1) % kRecencyWindow;
  size_ = std::min(size_ + 1, kRecencyWindow);
}

void RecencyWindow::bias(std::vector<SparseDelta>& out) const {
  static const auto bonus = [] {
    std::array<float, kRecencyWindow + 1> b{};
    for (size_t j = 1; j <= kRecencyWindow; ++j) b[j] = static_cast<float>(recency_bonus(j));
    return b;
  }();
  const size_t first = out.size();
  for (size_t j = 1; j <= size_; ++j) {
    const CompactTokenId tok = ring_[(head_ + kRecencyWindow - j) % kRecencyWindow];
    bool seen = false;
    for (size_t i = first; i < out.size() && !seen; ++i) seen = out[i].token == tok;
    if (!seen) out.push_back({tok, bonus[j]});
  }
}

void GlobalCounts::add(CompactTokenId token) {
  const uint64_t c = ++counts_[token];
  term_[token] = static_cast<float>(kFreqLambda * std::log(static_cast<double>(c) + 1.0));
  ++total_;
}

// --- ContextModels -----------------------------------------------------------------

namespace {

// Per-order delta for counts 0..65535, evaluated once in double.
const std::vector<float>& delta_table(size_t order) {
  static const auto tables = [] {
    std::array<std::vector<float>, kNumOrders> t;
    for (size_t o = 0; o < kNumOrders; ++o) {
      const auto& cfg = ngram_orders()[o];
      t[o].resize(SparseListArena::kMaxCount + 1);
      for (uint32_t c = 0; c <= SparseListArena::kMaxCount; ++c) {
        t[o][c] = static_cast<float>(ngram_delta(c, cfg.lambda, cfg.alpha));
      }
    }
    return t;
  }();
  return tables[order];
}

}  // namespace

ContextModels::ContextModels(size_t v_e, const ContextConfig& cfg)
    : cfg_(cfg),
      counts_(v_e),
      bigram_(cfg.use_ngrams ? v_e : 0),
      lz_(cfg.use_ngrams ? cfg.lz_slots_log2 : 4) {
  if (v_e > 0xffff) fail(ErrorCode::kUnsupportedVocabulary, "v_e must fit in 16 bits");
  if (cfg.use_ngrams) {
    tables_.reserve(kNumOrders - 1);
    for (size_t o = 1; o < kNumOrders; ++o) tables_.emplace_back(cfg.table_slots_log2);
  }
}

void ContextModels::gather(std::span<const CompactTokenId> history, float scale,
                           BiasSet& out) const {
  out.clear();
  out.scale = scale;
  if (!cfg_.use_ngrams) return;
  const size_t n = history.size();
  const auto& orders = ngram_orders();
  for (size_t o = 0; o < kNumOrders; ++o) {
    if (n < orders[o].context_length) continue;
    const SparseListArena* arena;
    uint32_t handle;
    if (orders[o].mode == KeyMode::kDirect) {
      arena = &bigram_.arena();
      handle = bigram_.lookup(history[n - 1]);
    } else {
      arena = &tables_[o - 1].arena();
      handle = tables_[o - 1].lookup(
          context_key(orders[o].mode, orders[o].context_length, history));
    }
    const auto& deltas = delta_table(o);
    for (uint32_t e : arena->entries(handle)) {
      out.ngram.push_back(
          {SparseListArena::entry_token(e), scale * deltas[SparseListArena::entry_count(e)]});
    }
  }
  if (n >= 2) out.lz = lz_.predict(history[n - 2], history[n - 1]);
  recency_.bias(out.recency);
}

void ContextModels::update_counts(std::span<const CompactTokenId> history) {
  if (history.empty()) fail(ErrorCode::kInternal, "update with empty history");
  counts_.add(history.back());
  if (cfg_.use_ngrams) recency_.push(history.back());
}

void ContextModels::update_ngrams(std::span<const CompactTokenId> history) {
  if (!cfg_.use_ngrams || history.empty()) return;
  const CompactTokenId tok = history.back();
  const auto prev = history.first(history.size() - 1);
  const auto& orders = ngram_orders();
  for (size_t o = 0; o < kNumOrders; ++o) {
    if (prev.size() < orders[o].context_length) continue;
    if (orders[o].mode == KeyMode::kDirect) {
      bigram_.update(prev.back(), tok);
    } else {
      tables_[o - 1].update(context_key(orders[o].mode, orders[o].context_length, prev), tok);
    }
  }
}

void ContextModels::update_lz(std::span<const CompactTokenId> history) {
  const size_t n = history.size();
  if (!cfg_.use_ngrams || n < 3) return;
  lz_.update(history[n - 3], history[n - 2], history[n - 1]);
}

}  // namespace statesmix
