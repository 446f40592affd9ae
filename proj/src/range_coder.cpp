#include "range_coder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "errors.hpp"

namespace statesmix {

namespace {
struct Remainder {
  double frac;
  uint32_t index;
};

std::vector<Remainder>& remainders_scratch() {
  thread_local std::vector<Remainder> v;
  return v;
}
}  // namespace

void quantize_cdf(std::span<const float> probs, QuantizedCdf& out) {
  const size_t n = probs.size();
  if (n == 0 || n >= kCdfTotal) {
    fail(ErrorCode::kUnsupportedVocabulary,
         "cannot quantize a distribution over " + std::to_string(n) + " symbols");
  }
  out.freq.resize(n);
  out.cum.resize(n + 1);
  const double budget = static_cast<double>(kCdfTotal - n);

  std::vector<Remainder>& rem = remainders_scratch();
  rem.resize(n);
  int64_t assigned = 0;
  for (size_t j = 0; j < n; ++j) {
    const double x = static_cast<double>(probs[j]) * budget;
    const double fl = std::floor(x);
    const auto f = static_cast<uint32_t>(fl);
    out.freq[j] = f + 1;
    assigned += f + 1;
    rem[j] = {x - fl, static_cast<uint32_t>(j)};
  }
  int64_t leftover = static_cast<int64_t>(kCdfTotal) - assigned;

  if (leftover > 0) {
    // Total order: larger remainder first, then lower index.
    auto before = [](const Remainder& a, const Remainder& b) {
      return a.frac != b.frac ? a.frac > b.frac : a.index < b.index;
    };
    const auto k = static_cast<size_t>(std::min<int64_t>(leftover, static_cast<int64_t>(n)));
    std::nth_element(rem.begin(), rem.begin() + (k - 1), rem.end(), before);
    for (size_t i = 0; i < k; ++i) out.freq[rem[i].index] += 1;
    leftover -= static_cast<int64_t>(k);
    // Only reachable if the probabilities sum well below one.
    for (size_t j = 0; leftover > 0; j = (j + 1) % n, --leftover) out.freq[j] += 1;
  } else if (leftover < 0) {
    // Probabilities summing slightly above one: take units back from the
    // smallest remainders among entries that can spare one.
    auto before = [](const Remainder& a, const Remainder& b) {
      return a.frac != b.frac ? a.frac < b.frac : a.index < b.index;
    };
    std::sort(rem.begin(), rem.end(), before);
    for (size_t i = 0; leftover < 0; i = (i + 1) % n) {
      if (out.freq[rem[i].index] > 1) {
        out.freq[rem[i].index] -= 1;
        ++leftover;
      }
    }
  }

  out.cum[0] = 0;
  for (size_t j = 0; j < n; ++j) out.cum[j + 1] = out.cum[j] + out.freq[j];
}

QuantizedCdf quantize_cdf(std::span<const float> probs) {
  QuantizedCdf cdf;
  quantize_cdf(probs, cdf);
  return cdf;
}

void RangeEncoder::encode(uint32_t cum, uint32_t freq) {
  if (finished_) fail(ErrorCode::kApiMisuse, "encode after finish");
  const uint32_t r = range_ >> kCdfBits;
  low_ += static_cast<uint64_t>(r) * cum;
  range_ = r * freq;
  min_narrowed_ = std::min(min_narrowed_, range_);

  const unsigned window = 32 + nbits_;
  if (low_ >> window) {
    for (size_t i = out_.size(); i-- > 0;) {
      if (++out_[i] != 0) break;
    }
    low_ &= (1ULL << window) - 1;
  }

  const auto shift = static_cast<unsigned>(std::countl_zero(range_));
  if (shift) {
    low_ <<= shift;
    range_ <<= shift;
    nbits_ += shift;
  }
  while (nbits_ >= 8) {
    nbits_ -= 8;
    const unsigned top = 32 + nbits_;
    out_.push_back(static_cast<uint8_t>(low_ >> top));
    low_ &= (1ULL << top) - 1;
  }
}

std::vector<uint8_t> RangeEncoder::finish() {
  if (finished_) fail(ErrorCode::kApiMisuse, "range encoder finished twice");
  finished_ = true;
  const unsigned pad = (8 - nbits_ % 8) % 8;
  const unsigned total = 32 + nbits_ + pad;
  const uint64_t value = low_ << pad;
  for (unsigned left = total; left >= 8; left -= 8) {
    out_.push_back(static_cast<uint8_t>(value >> (left - 8)));
  }
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> stream) : in_(stream) {
  code_ = read_bits(32);
}

uint64_t RangeDecoder::read_bits(unsigned count) {
  if (bitpos_ + count > in_.size() * 8) {
    fail(ErrorCode::kCorruptArchive, "coded payload exhausted");
  }
  uint64_t v = 0;
  for (unsigned i = 0; i < count; ++i, ++bitpos_) {
    v = (v << 1) | ((in_[bitpos_ >> 3] >> (7 - (bitpos_ & 7))) & 1);
  }
  return v;
}

uint32_t RangeDecoder::decode_symbol(const QuantizedCdf& cdf) {
  const uint32_t r = range_ >> kCdfBits;
  const uint64_t target = std::min<uint64_t>(code_ / r, kCdfTotal - 1);
  // Last index with cum <= target.
  const auto it = std::upper_bound(cdf.cum.begin() + 1, cdf.cum.end(),
                                   static_cast<uint32_t>(target));
  const auto symbol = static_cast<uint32_t>(it - cdf.cum.begin() - 1);

  code_ -= static_cast<uint64_t>(r) * cdf.cum[symbol];
  range_ = r * cdf.freq[symbol];
  if (code_ >= range_) fail(ErrorCode::kCorruptArchive, "coded payload inconsistent");

  const auto shift = static_cast<unsigned>(std::countl_zero(range_));
  if (shift) {
    code_ = (code_ << shift) | read_bits(shift);
    range_ <<= shift;
  }
  return symbol;
}

}  // namespace statesmix
