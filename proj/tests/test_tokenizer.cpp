#include <random>

#include "doctest.h"
#include "oracle_values.hpp"
#include "test_util.hpp"
#include "tokenizer.hpp"

using namespace statesmix;
using testing::asset_tokenizer;

namespace {

Tokenizer tiny_tokenizer() {
  std::vector<std::string> vocab;
  for (int b = 0; b < 256; ++b) vocab.emplace_back(1, static_cast<char>(b));
  vocab.insert(vocab.end(), {"ab", "abc", "bc"});
  return Tokenizer::from_parts(std::move(vocab), {{97, 98}, {256, 99}, {98, 99}});
}

}  // namespace

TEST_CASE("asset loads with the expected shape and fingerprint") {
  const Tokenizer& tok = asset_tokenizer();
  CHECK(tok.vocab_size() == oracle::kAssetVocab);
  CHECK(tok.merges().size() == oracle::kAssetMerges);
  CHECK(tok.fingerprint() == oracle::kAssetFingerprint);
}

TEST_CASE("asset encodings match the naive reference BPE") {
  const Tokenizer& tok = asset_tokenizer();
  for (const auto& c : oracle::kBpeCases) {
    const auto bytes = testing::from_hex(c.hex);
    CAPTURE(c.hex);
    CHECK(tok.encode(bytes) == c.ids);
    CHECK(tok.decode(c.ids) == bytes);
  }
}

TEST_CASE("greedy merges on a hand-built definition") {
  const Tokenizer tok = tiny_tokenizer();
  CHECK(tok.fingerprint() == oracle::kTinyFingerprint);
  const auto ids = tok.encode(testing::bytes_of("abcbcab"));
  CHECK(ids == std::vector<uint32_t>(std::begin(oracle::kTinyAbcbc), std::end(oracle::kTinyAbcbc)));
}

TEST_CASE("empty and trivial inputs") {
  const Tokenizer& tok = asset_tokenizer();
  CHECK(tok.encode({}).empty());
  CHECK(tok.decode({}).empty());
  const auto a = tok.encode(testing::bytes_of("A"));
  REQUIRE(a.size() == 1);
  CHECK(tok.decode(a) == testing::bytes_of("A"));

  // Only byte tokens and no applicable merge: one token per byte.
  const Tokenizer tiny = tiny_tokenizer();
  CHECK(tiny.encode(testing::bytes_of("zzzz")).size() == 4);
}

TEST_CASE("random byte strings round trip") {
  const Tokenizer& tok = asset_tokenizer();
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<uint8_t> s(rng() % 200);
    const bool texty = trial % 2 == 0;
    for (auto& b : s) b = texty ? static_cast<uint8_t>("etaoin shrdlu\n"[rng() % 14]) : rng() & 0xff;
    REQUIRE(tok.decode(tok.encode(s)) == s);
  }
}

TEST_CASE("encoding is deterministic") {
  const Tokenizer& tok = asset_tokenizer();
  const auto text = testing::corpus_prefix(20000);
  CHECK(tok.encode(text) == tok.encode(text));
}

TEST_CASE("fingerprint changes under single merge mutations") {
  const Tokenizer& tok = asset_tokenizer();
  const uint64_t base = tokenizer_fingerprint(tok.vocab(), tok.merges());
  CHECK(base == tok.fingerprint());
  std::mt19937_64 rng(11);
  auto merges = tok.merges();
  for (int i = 0; i < 100; ++i) {
    const size_t at = rng() % merges.size();
    const MergeRule saved = merges[at];
    merges[at].right ^= 1 + static_cast<uint32_t>(rng() % 7);
    CHECK(tokenizer_fingerprint(tok.vocab(), merges) != base);
    merges[at] = saved;
  }
}

TEST_CASE("asset serialization round trips") {
  const Tokenizer tok = tiny_tokenizer();
  const Tokenizer again = Tokenizer::parse(serialize_tokenizer(tok));
  CHECK(again.fingerprint() == tok.fingerprint());
  CHECK(unescape_entry(escape_entry(std::string("\x00\\ \x7f", 4))) == std::string("\x00\\ \x7f", 4));
}

TEST_CASE("malformed assets are rejected") {
  using testing::error_of;
  CHECK(error_of([] { Tokenizer::parse("nope\n"); }) == ErrorCode::kTokenizerLoad);
  CHECK(error_of([] { Tokenizer::parse("statesmix-bpe 1\nvocab 1\na\nmerges 0\n"); }) ==
        ErrorCode::kTokenizerLoad);  // missing byte coverage
  CHECK(error_of([] { Tokenizer::load_file("/nonexistent/gpt2.bpe"); }) == ErrorCode::kIo);
}

TEST_CASE("corpus statistics under the shipped asset") {
  const Tokenizer& tok = asset_tokenizer();
  const auto text = testing::corpus_prefix(1 << 20);
  const auto ids = tok.encode(text);
  const double bytes_per_token = static_cast<double>(text.size()) / static_cast<double>(ids.size());
  MESSAGE("bytes/token on 1 MiB of the text corpus: " << bytes_per_token);
  CHECK(bytes_per_token > 3.0);
}
