#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tokenizer.hpp"

namespace statesmix {

using CompactTokenId = uint32_t;

// Bijection between the global ids present in a file and the dense range
// [0, v_e). Compact ids follow increasing global id order.
class VocabMap {
 public:
  VocabMap() = default;
  // Throws kCorruptArchive unless ids are strictly increasing.
  explicit VocabMap(std::vector<GlobalTokenId> compact_to_global);

  size_t size() const { return compact_to_global_.size(); }
  GlobalTokenId to_global(CompactTokenId c) const { return compact_to_global_[c]; }
  // Returns size() for ids absent from the map.
  CompactTokenId to_compact(GlobalTokenId g) const;
  const std::vector<GlobalTokenId>& compact_to_global() const { return compact_to_global_; }

  bool operator==(const VocabMap&) const = default;

 private:
  std::vector<GlobalTokenId> compact_to_global_;
};

struct RiceCodedMap {
  uint8_t rice_parameter = 0;
  std::vector<uint8_t> payload;
};

std::pair<VocabMap, std::vector<CompactTokenId>> build_vocab_map(
    std::span<const GlobalTokenId> tokens);

// Codes the first id absolutely and each later id as (gap - 1), all with one
// Rice parameter k = floor(log2(max(1, mean coded value))).
RiceCodedMap rice_encode_map(const VocabMap& map);
VocabMap rice_decode_map(const RiceCodedMap& coded, size_t v_e);

uint8_t choose_rice_parameter(std::span<const uint64_t> values);

}  // namespace statesmix
