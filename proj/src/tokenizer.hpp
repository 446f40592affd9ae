#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace statesmix {

using GlobalTokenId = uint32_t;

struct MergeRule {
  GlobalTokenId left;
  GlobalTokenId right;
};

// Byte-level BPE definition: vocabulary entries are raw byte strings indexed
// by global id; merges are listed in priority order (rank 0 first).
class Tokenizer {
 public:
  // Parses the text asset format documented in docs/FORMAT.md.
  static Tokenizer load_file(const std::string& path);
  static Tokenizer parse(std::string_view text);
  static Tokenizer from_parts(std::vector<std::string> vocab, std::vector<MergeRule> merges);

  // Greedy lowest-rank-first BPE over the whole byte string; ties between
  // equal-rank pairs resolve left to right.
  std::vector<GlobalTokenId> encode(std::span<const uint8_t> bytes) const;
  std::vector<uint8_t> decode(std::span<const GlobalTokenId> tokens) const;

  uint64_t fingerprint() const { return fingerprint_; }
  size_t vocab_size() const { return vocab_.size(); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::vector<MergeRule>& merges() const { return merges_; }

 private:
  struct Rule {
    uint32_t rank;
    GlobalTokenId result;
  };

  Tokenizer() = default;
  void build_indexes();

  std::vector<std::string> vocab_;
  std::vector<MergeRule> merges_;
  std::unordered_map<uint64_t, Rule> rules_;
  GlobalTokenId byte_token_[256] = {};
  uint64_t fingerprint_ = 0;
};

// FNV-1a over a canonical serialization of the vocabulary and merge list.
uint64_t tokenizer_fingerprint(const std::vector<std::string>& vocab,
                               const std::vector<MergeRule>& merges);

// Asset-format helpers, exposed for tests and the converter round trip.
std::string escape_entry(std::string_view raw);
std::string unescape_entry(std::string_view escaped);
std::string serialize_tokenizer(const Tokenizer& tok);

}  // namespace statesmix
