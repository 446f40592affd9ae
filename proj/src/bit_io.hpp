#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "errors.hpp"

namespace statesmix {

// Most-significant-bit-first packing; the final byte is zero padded.
class BitWriter {
 public:
  void put_bit(unsigned bit) {
    acc_ = static_cast<uint8_t>((acc_ << 1) | (bit & 1));
    if (++fill_ == 8) {
      bytes_.push_back(acc_);
      acc_ = 0;
      fill_ = 0;
    }
  }
  void put_bits(uint64_t value, unsigned count) {
    for (unsigned i = count; i-- > 0;) put_bit(static_cast<unsigned>(value >> i) & 1);
  }
  std::vector<uint8_t> finish() {
    if (fill_ > 0) {
      bytes_.push_back(static_cast<uint8_t>(acc_ << (8 - fill_)));
      acc_ = 0;
      fill_ = 0;
    }
    return std::move(bytes_);
  }

 private:
  std::vector<uint8_t> bytes_;
  uint8_t acc_ = 0;
  unsigned fill_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  unsigned get_bit() {
    if (pos_ >= bytes_.size() * 8) fail(ErrorCode::kCorruptArchive, "bit stream truncated");
    const unsigned bit = (bytes_[pos_ >> 3] >> (7 - (pos_ & 7))) & 1;
    ++pos_;
    return bit;
  }
  uint64_t get_bits(unsigned count) {
    uint64_t v = 0;
    for (unsigned i = 0; i < count; ++i) v = (v << 1) | get_bit();
    return v;
  }
  size_t bits_consumed() const { return pos_; }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

}  // namespace statesmix
