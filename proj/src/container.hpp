#pragma once

// Archive layout, all integers little-endian:
//   "SSMX" | version u8 | flags u8 | original_length u64 | token_count u64 |
//   v_e u32 | tokenizer_fingerprint u64 | seed u64 | [config block] |
//   rice_parameter u8 | map_length u32 | map bytes | crc32 u32 |
//   payload_length u64 | payload bytes

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "context_models.hpp"
#include "mixer.hpp"
#include "ssm.hpp"
#include "vocab_map.hpp"

namespace statesmix {

inline constexpr std::array<uint8_t, 4> kMagic = {'S', 'S', 'M', 'X'};
inline constexpr uint8_t kFormatVersion = 1;

enum ArchiveFlags : uint8_t {
  kFlagSsm = 1u << 0,
  kFlagNgrams = 1u << 1,
  kFlagConfigBlock = 1u << 7,
};
inline constexpr uint8_t kKnownFlags = kFlagSsm | kFlagNgrams | kFlagConfigBlock;

// Hyperparameters that differ from the built-in defaults. The seed lives in
// the fixed header.
struct ConfigBlock {
  uint32_t d_model, d_state, d_inner, d_conv, n_layers, chunk_size;
  double label_smoothing, lr, beta1, beta2, adam_eps, grad_clip;
  uint8_t table_slots_log2, lz_slots_log2;
  double mix_beta, mix_h0, mix_s_min, mix_s_max;

  bool operator==(const ConfigBlock&) const = default;
};

ConfigBlock make_config_block(const ModelConfig& model, const ContextConfig& ctx,
                              const MixConfig& mix);
void apply_config_block(const ConfigBlock& b, ModelConfig& model, ContextConfig& ctx,
                        MixConfig& mix);

struct ArchiveHeader {
  uint8_t version = kFormatVersion;
  uint8_t flags = 0;
  uint64_t original_length = 0;
  uint64_t token_count = 0;
  uint32_t v_e = 0;
  uint64_t tokenizer_fingerprint = 0;
  uint64_t seed = 0;
  std::optional<ConfigBlock> config;  // present iff kFlagConfigBlock
  RiceCodedMap map;
  uint32_t crc32 = 0;
  uint64_t payload_length = 0;

  bool operator==(const ArchiveHeader& o) const;
};

std::vector<uint8_t> write_header(const ArchiveHeader& h);
// Errors: kShortRead, kBadMagic, kUnsupportedVersion, kCorruptArchive.
ArchiveHeader read_header(std::span<const uint8_t> bytes, size_t* consumed = nullptr);

struct Archive {
  ArchiveHeader header;
  std::vector<uint8_t> payload;
};

std::vector<uint8_t> write_archive(const Archive& a);
// Also rejects a payload shorter (kShortRead) or longer (kCorruptArchive)
// than payload_length.
Archive read_archive(std::span<const uint8_t> bytes);

uint32_t crc32_of(std::span<const uint8_t> bytes);

}  // namespace statesmix
