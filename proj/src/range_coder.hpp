#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace statesmix {

inline constexpr uint32_t kCdfBits = 16;
inline constexpr uint32_t kCdfTotal = 1u << kCdfBits;

// Integer frequencies summing to kCdfTotal with every entry >= 1.
struct QuantizedCdf {
  std::vector<uint32_t> freq;
  std::vector<uint32_t> cum;  // size freq.size() + 1, cum[0] = 0

  size_t size() const { return freq.size(); }
};

// floor(p_j * (T - n)) + 1 per symbol, then the leftover budget one unit at a
// time to the largest fractional remainders (lower index wins ties).
// Throws kUnsupportedVocabulary when n >= T.
void quantize_cdf(std::span<const float> probs, QuantizedCdf& out);
QuantizedCdf quantize_cdf(std::span<const float> probs);

// 32-bit range coder over a 64-bit low accumulator. Renormalization is bit
// granular so the range is always >= 2^31 before narrowing (every narrowed
// interval is >= 2^31 / T); bytes are emitted most significant first and
// carries ripple into already emitted bytes.
class RangeEncoder {
 public:
  void encode(uint32_t cum, uint32_t freq);
  void encode_symbol(const QuantizedCdf& cdf, uint32_t symbol) {
    encode(cdf.cum[symbol], cdf.freq[symbol]);
  }
  // Second call is an API misuse error.
  std::vector<uint8_t> finish();

  // Output bits committed so far (emitted bytes plus pending shifted bits).
  uint64_t bits_written() const { return out_.size() * 8 + nbits_; }
  uint32_t min_narrowed_range() const { return min_narrowed_; }

 private:
  uint64_t low_ = 0;
  uint32_t range_ = 0xffffffffu;
  unsigned nbits_ = 0;  // shifted-out bits not yet emitted, < 8
  std::vector<uint8_t> out_;
  uint32_t min_narrowed_ = 0xffffffffu;
  bool finished_ = false;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> stream);

  // Throws kCorruptArchive when the stream is exhausted or inconsistent.
  uint32_t decode_symbol(const QuantizedCdf& cdf);

 private:
  uint64_t read_bits(unsigned count);

  std::span<const uint8_t> in_;
  size_t bitpos_ = 0;
  uint64_t code_ = 0;
  uint32_t range_ = 0xffffffffu;
};

}  // namespace statesmix
