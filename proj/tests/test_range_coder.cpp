#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracle_values.hpp"
#include "range_coder.hpp"
#include "test_util.hpp"

using namespace statesmix;

namespace {

QuantizedCdf cdf_from_freq(std::vector<uint32_t> freq) {
  QuantizedCdf c;
  c.freq = std::move(freq);
  c.cum.assign(c.freq.size() + 1, 0);
  for (size_t j = 0; j < c.freq.size(); ++j) c.cum[j + 1] = c.cum[j] + c.freq[j];
  return c;
}

std::vector<float> random_probs(std::mt19937_64& rng, size_t n, double concentration) {
  std::gamma_distribution<double> g(concentration, 1.0);
  std::vector<double> x(n);
  double s = 0;
  for (auto& v : x) s += (v = g(rng) + 1e-300);
  std::vector<float> p(n);
  for (size_t j = 0; j < n; ++j) p[j] = static_cast<float>(x[j] / s);
  return p;
}

void check_valid(const QuantizedCdf& c) {
  REQUIRE(c.cum.back() == kCdfTotal);
  REQUIRE(std::accumulate(c.freq.begin(), c.freq.end(), uint64_t{0}) == kCdfTotal);
  REQUIRE(*std::min_element(c.freq.begin(), c.freq.end()) >= 1);
}

}  // namespace

TEST_CASE("quantizer matches the reference largest-remainder rule") {
  const std::vector<float> p(std::begin(oracle::kQuantProbs), std::end(oracle::kQuantProbs));
  const QuantizedCdf c = quantize_cdf(p);
  check_valid(c);
  CHECK(c.freq == std::vector<uint32_t>(std::begin(oracle::kQuantFreq), std::end(oracle::kQuantFreq)));

  const std::vector<float> over(std::begin(oracle::kQuantOverProbs), std::end(oracle::kQuantOverProbs));
  const QuantizedCdf o = quantize_cdf(over);
  check_valid(o);
  CHECK(o.freq == std::vector<uint32_t>(std::begin(oracle::kQuantOverFreq),
                                        std::end(oracle::kQuantOverFreq)));
}

TEST_CASE("quantizer edge cases") {
  const QuantizedCdf one = quantize_cdf(std::vector<float>{1.0f});
  CHECK(one.freq == std::vector<uint32_t>{kCdfTotal});
  const QuantizedCdf uni = quantize_cdf(std::vector<float>(4, 0.25f));
  CHECK(uni.freq == std::vector<uint32_t>(4, kCdfTotal / 4));
  const QuantizedCdf spike = quantize_cdf(std::vector<float>{1.0f, 0.0f, 0.0f});
  CHECK(spike.freq == std::vector<uint32_t>{kCdfTotal - 2, 1, 1});
  CHECK(testing::error_of([] { quantize_cdf(std::vector<float>(kCdfTotal, 1.0f / kCdfTotal)); }) ==
        ErrorCode::kUnsupportedVocabulary);
  CHECK(testing::error_of([] { quantize_cdf(std::vector<float>{}); }) ==
        ErrorCode::kUnsupportedVocabulary);
  std::vector<float> big(kCdfTotal - 1, 0.0f);
  big[5] = 1.0f;
  const QuantizedCdf full = quantize_cdf(big);
  check_valid(full);
  CHECK(full.freq[5] == 1 + 1);
}

TEST_CASE("encoder output matches the big-integer reference") {
  RangeEncoder enc;
  size_t at = 0;
  for (size_t i = 0; i < std::size(oracle::kCoderSizes); ++i) {
    const size_t n = oracle::kCoderSizes[i];
    const QuantizedCdf c = cdf_from_freq({oracle::kCoderFreqs + at, oracle::kCoderFreqs + at + n});
    at += n;
    enc.encode_symbol(c, oracle::kCoderSymbols[i]);
  }
  const auto bytes = enc.finish();
  CHECK(bytes == std::vector<uint8_t>(std::begin(oracle::kCoderBytes), std::end(oracle::kCoderBytes)));

  RangeDecoder dec(bytes);
  at = 0;
  for (size_t i = 0; i < std::size(oracle::kCoderSizes); ++i) {
    const size_t n = oracle::kCoderSizes[i];
    const QuantizedCdf c = cdf_from_freq({oracle::kCoderFreqs + at, oracle::kCoderFreqs + at + n});
    at += n;
    CHECK(dec.decode_symbol(c) == oracle::kCoderSymbols[i]);
  }
}

TEST_CASE("flush-only stream and finish misuse") {
  RangeEncoder enc;
  const auto tail = enc.finish();
  CHECK(tail.size() <= 8);
  CHECK(testing::error_of([&] { enc.finish(); }) == ErrorCode::kApiMisuse);
  CHECK(testing::error_of([&] { enc.encode(0, 1); }) == ErrorCode::kApiMisuse);
}

TEST_CASE("fuzzed streams round trip and keep the interval invariant") {
  std::mt19937_64 rng(42);
  for (int stream = 0; stream < 300; ++stream) {
    const size_t n = 2 + rng() % 300;
    const size_t len = 1 + rng() % 200;
    std::vector<QuantizedCdf> cdfs;
    std::vector<uint32_t> syms;
    RangeEncoder enc;
    for (size_t i = 0; i < len; ++i) {
      cdfs.push_back(quantize_cdf(random_probs(rng, n, stream % 3 == 0 ? 0.05 : 1.0)));
      syms.push_back(static_cast<uint32_t>(rng() % n));
      enc.encode_symbol(cdfs.back(), syms.back());
    }
    CHECK(enc.min_narrowed_range() >= (1u << 31) / kCdfTotal);
    const auto bytes = enc.finish();
    RangeDecoder dec(bytes);
    for (size_t i = 0; i < len; ++i) REQUIRE(dec.decode_symbol(cdfs[i]) == syms[i]);
  }
}

TEST_CASE("payload length audit") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const size_t n = 50 + rng() % 2000;
    RangeEncoder enc;
    double ideal = 0;
    for (int i = 0; i < 2000; ++i) {
      const QuantizedCdf c = quantize_cdf(random_probs(rng, n, 0.2));
      // Draw from the quantized distribution itself.
      const uint32_t u = static_cast<uint32_t>(rng() % kCdfTotal);
      const auto s = static_cast<uint32_t>(
          std::upper_bound(c.cum.begin() + 1, c.cum.end(), u) - c.cum.begin() - 1);
      ideal -= std::log2(static_cast<double>(c.freq[s]) / kCdfTotal);
      enc.encode_symbol(c, s);
    }
    const double actual = 8.0 * static_cast<double>(enc.finish().size());
    CAPTURE(ideal);
    CHECK(actual <= ideal + 2000 * 1e-3 + 64);
    CHECK(actual >= ideal - 8);
  }
}

TEST_CASE("decoding with the wrong cdf diverges") {
  std::mt19937_64 rng(77);
  std::vector<QuantizedCdf> cdfs;
  std::vector<uint32_t> syms;
  RangeEncoder enc;
  for (int i = 0; i < 400; ++i) {
    cdfs.push_back(quantize_cdf(random_probs(rng, 64, 0.5)));
    syms.push_back(static_cast<uint32_t>(rng() % 64));
    enc.encode_symbol(cdfs.back(), syms.back());
  }
  const auto bytes = enc.finish();
  const QuantizedCdf wrong = quantize_cdf(std::vector<float>(64, 1.0f / 64));
  bool diverged = false;
  try {
    RangeDecoder dec(bytes);
    for (int i = 0; i < 400 && !diverged; ++i) {
      diverged = dec.decode_symbol(i == 0 ? wrong : cdfs[i]) != syms[i];
    }
  } catch (const Error&) {
    diverged = true;
  }
  CHECK(diverged);
}

TEST_CASE("truncated payload is reported") {
  RangeEncoder enc;
  const QuantizedCdf c = quantize_cdf(std::vector<float>(1000, 1.0f / 1000));
  for (int i = 0; i < 100; ++i) enc.encode_symbol(c, static_cast<uint32_t>(i * 7 % 1000));
  auto bytes = enc.finish();
  bytes.resize(bytes.size() / 2);
  CHECK(testing::error_of([&] {
          RangeDecoder dec(bytes);
          for (int i = 0; i < 100; ++i) dec.decode_symbol(c);
        }) == ErrorCode::kCorruptArchive);
}
