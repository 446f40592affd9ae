#include "vocab_map.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "bit_io.hpp"
#include "errors.hpp"

namespace statesmix {

namespace {
// A unary run this long cannot come from a valid 32-bit id gap.
constexpr uint64_t kMaxQuotient = 1ULL << 32;
}  // namespace

VocabMap::VocabMap(std::vector<GlobalTokenId> compact_to_global)
    : compact_to_global_(std::move(compact_to_global)) {
  for (size_t i = 1; i < compact_to_global_.size(); ++i) {
    if (compact_to_global_[i] <= compact_to_global_[i - 1]) {
      fail(ErrorCode::kCorruptArchive, "vocabulary map is not strictly increasing");
    }
  }
}

CompactTokenId VocabMap::to_compact(GlobalTokenId g) const {
  auto it = std::lower_bound(compact_to_global_.begin(), compact_to_global_.end(), g);
  if (it == compact_to_global_.end() || *it != g) return static_cast<CompactTokenId>(size());
  return static_cast<CompactTokenId>(it - compact_to_global_.begin());
}

std::pair<VocabMap, std::vector<CompactTokenId>> build_vocab_map(
    std::span<const GlobalTokenId> tokens) {
  if (tokens.empty()) return {};
  const GlobalTokenId max_id = *std::max_element(tokens.begin(), tokens.end());
  std::vector<uint32_t> lookup(static_cast<size_t>(max_id) + 1, 0);
  for (GlobalTokenId t : tokens) lookup[t] = 1;

  std::vector<GlobalTokenId> ids;
  for (GlobalTokenId g = 0; g <= max_id; ++g) {
    if (lookup[g]) {
      lookup[g] = static_cast<uint32_t>(ids.size());
      ids.push_back(g);
    }
  }
  std::vector<CompactTokenId> remapped(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) remapped[i] = lookup[tokens[i]];
  return {VocabMap(std::move(ids)), std::move(remapped)};
}

uint8_t choose_rice_parameter(std::span<const uint64_t> values) {
  if (values.empty()) return 0;
  unsigned __int128 sum = 0;
  for (uint64_t v : values) sum += v;
  const uint64_t mean = static_cast<uint64_t>(sum / values.size());
  return static_cast<uint8_t>(std::bit_width(std::max<uint64_t>(1, mean)) - 1);
}

RiceCodedMap rice_encode_map(const VocabMap& map) {
  const auto& ids = map.compact_to_global();
  std::vector<uint64_t> values(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    values[i] = i == 0 ? ids[0] : static_cast<uint64_t>(ids[i]) - ids[i - 1] - 1;
  }
  RiceCodedMap coded;
  coded.rice_parameter = choose_rice_parameter(values);
  const unsigned k = coded.rice_parameter;
  BitWriter w;
  for (uint64_t v : values) {
    for (uint64_t q = v >> k; q > 0; --q) w.put_bit(1);
    w.put_bit(0);
    w.put_bits(v, k);
  }
  coded.payload = w.finish();
  return coded;
}

VocabMap rice_decode_map(const RiceCodedMap& coded, size_t v_e) {
  const unsigned k = coded.rice_parameter;
  if (k > 32) fail(ErrorCode::kCorruptArchive, "rice parameter out of range");
  BitReader r(coded.payload);
  std::vector<GlobalTokenId> ids;
  ids.reserve(v_e);
  uint64_t prev = 0;
  for (size_t i = 0; i < v_e; ++i) {
    uint64_t q = 0;
    while (r.get_bit()) {
      if (++q > kMaxQuotient) fail(ErrorCode::kCorruptArchive, "runaway rice code");
    }
    const uint64_t v = (q << k) | r.get_bits(k);
    const uint64_t id = i == 0 ? v : prev + 1 + v;
    if (id > UINT32_MAX) fail(ErrorCode::kCorruptArchive, "vocabulary id overflow");
    ids.push_back(static_cast<GlobalTokenId>(id));
    prev = id;
  }
  if ((r.bits_consumed() + 7) / 8 != coded.payload.size()) {
    fail(ErrorCode::kCorruptArchive, "vocabulary map length mismatch");
  }
  return VocabMap(std::move(ids));
}

}  // namespace statesmix
