#include <random>

#include "container.hpp"
#include "doctest.h"
#include "pipeline.hpp"
#include "test_util.hpp"

using namespace statesmix;
using testing::asset_tokenizer;
using testing::error_of;

namespace {

std::vector<uint8_t> random_bytes(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<uint8_t> v(n);
  for (auto& b : v) b = static_cast<uint8_t>(rng());
  return v;
}

std::vector<uint8_t> round_trip(std::span<const uint8_t> in, const CodecConfig& cfg = {}) {
  const auto z = compress(in, asset_tokenizer(), cfg);
  return decompress(z, asset_tokenizer());
}

const std::vector<uint8_t>& sample_text() {
  static const auto t = testing::corpus_prefix(12000);
  return t;
}

const std::vector<uint8_t>& sample_archive() {
  static const auto z = compress(sample_text(), asset_tokenizer(), CodecConfig{});
  return z;
}

}  // namespace

TEST_CASE("variant names and flags") {
  for (Variant v : {Variant::kCountOnly, Variant::kNgramCount, Variant::kSsmCount, Variant::kFull}) {
    Variant back;
    REQUIRE(parse_variant(variant_name(v), back));
    CHECK(back == v);
    CHECK(variant_from_flags(variant_flags(v)) == v);
  }
  Variant v;
  CHECK_FALSE(parse_variant("turbo", v));
}

TEST_CASE("round trip: small and degenerate inputs") {
  CHECK(round_trip({}).empty());
  const auto z = compress({}, asset_tokenizer(), {});
  const ArchiveHeader h = read_header(z);
  CHECK(h.token_count == 0);
  CHECK(h.v_e == 0);
  CHECK(h.payload_length == 0);

  const std::vector<uint8_t> one = {'x'};
  CHECK(round_trip(one) == one);
  const std::vector<uint8_t> zero = {0};
  CHECK(round_trip(zero) == zero);
  const std::vector<uint8_t> repeated(5000, 'a');
  CHECK(round_trip(repeated) == repeated);
  const std::vector<uint8_t> spaces(3000, ' ');
  CHECK(round_trip(spaces) == spaces);
}

TEST_CASE("round trip: binary and text under every variant") {
  const auto bin = random_bytes(6000, 3);
  for (Variant v : {Variant::kCountOnly, Variant::kNgramCount, Variant::kSsmCount, Variant::kFull}) {
    CodecConfig cfg;
    cfg.variant = v;
    cfg.context.table_slots_log2 = 16;
    CAPTURE(variant_name(v));
    CHECK(round_trip(bin, cfg) == bin);
    CHECK(round_trip(sample_text(), cfg) == sample_text());
  }
}

TEST_CASE("archive is deterministic and ignores observers") {
  CodecHooks hooks;
  uint64_t calls = 0;
  hooks.progress = [&](uint64_t, uint64_t) { ++calls; };
  hooks.on_chunk = [&](uint64_t, const ssm::Parameters<float>&, const ssm::State<float>&) { ++calls; };
  CodecStats stats;
  const auto z = compress(sample_text(), asset_tokenizer(), {}, &stats, hooks);
  CHECK(calls > 0);
  CHECK(z == sample_archive());
}

TEST_CASE("training events and statistics") {
  CodecStats enc, dec;
  const auto z = compress(sample_text(), asset_tokenizer(), {}, &enc);
  const auto out = decompress(z, asset_tokenizer(), {}, &dec);
  CHECK(out == sample_text());
  CHECK(enc.train_events == enc.tokens / 32);
  CHECK(dec.train_events == enc.train_events);
  CHECK(enc.payload_bytes + enc.header_bytes == z.size());
  CHECK(enc.quantized_bits >= enc.model_bits * 0.98);
  CHECK(8.0 * static_cast<double>(enc.payload_bytes) <= enc.quantized_bits + 64);
  REQUIRE_FALSE(enc.trace.empty());
  double prev = 0;
  for (const auto& p : enc.trace) {
    CHECK(p.cumulative_bits >= prev);
    prev = p.cumulative_bits;
  }
  CHECK(enc.trace.back().tokens_seen == enc.tokens);
}

TEST_CASE("training fires at every chunk boundary with the chunk index") {
  const auto& tok = asset_tokenizer();
  const auto ids = tok.encode(sample_text());
  auto [map, compact] = build_vocab_map(ids);
  std::vector<uint64_t> seen;
  CodecHooks hooks;
  hooks.on_chunk = [&](uint64_t k, const ssm::Parameters<float>&, const ssm::State<float>&) {
    seen.push_back(k);
  };
  const std::span<const CompactTokenId> first(compact.data(), 32 * 5 + 7);
  encode_tokens(first, map.size(), {}, nullptr, hooks);
  CHECK(seen == std::vector<uint64_t>{1, 2, 3, 4, 5});
}

TEST_CASE("configuration overrides travel in the archive") {
  CodecConfig cfg;
  cfg.model.d_model = 16;
  cfg.model.d_inner = 32;
  cfg.model.chunk_size = 16;
  cfg.model.seed = 99;
  cfg.mix.h0 = 4.0;
  cfg.context.table_slots_log2 = 18;
  const auto z = compress(sample_text(), asset_tokenizer(), cfg);
  const ArchiveHeader h = read_header(z);
  CHECK((h.flags & kFlagConfigBlock) != 0);
  CHECK(h.seed == 99);
  CHECK(decompress(z, asset_tokenizer()) == sample_text());
  CHECK((read_header(sample_archive()).flags & kFlagConfigBlock) == 0);

  CodecConfig seeded;
  seeded.model.seed = 5;
  const auto zs = compress(sample_text(), asset_tokenizer(), seeded);
  CHECK((read_header(zs).flags & kFlagConfigBlock) == 0);
  CHECK(zs != sample_archive());
  CHECK(decompress(zs, asset_tokenizer()) == sample_text());
}

TEST_CASE("thread count does not change the archive") {
  CodecConfig cfg;
  cfg.threads = 3;
  const auto z = compress(sample_text(), asset_tokenizer(), cfg);
  CHECK(z == sample_archive());
  CHECK(decompress(sample_archive(), asset_tokenizer(), cfg) == sample_text());
}

TEST_CASE("offsetting every SSM logit leaves the archive unchanged") {
  for (int32_t offset : {1, -65536 * 3, 12345678}) {
    CodecHooks hooks;
    hooks.ssm_logit_offset = offset;
    CHECK(compress(sample_text(), asset_tokenizer(), {}, nullptr, hooks) == sample_archive());
  }
}

TEST_CASE("update order mutations") {
  CodecHooks swap;
  swap.mutation = UpdateMutation::kSwapNgramAndLz;
  CHECK(compress(sample_text(), asset_tokenizer(), {}, nullptr, swap) == sample_archive());

  CodecHooks skip;
  skip.mutation = UpdateMutation::kSkipLz;
  const ErrorCode e = error_of([&] { decompress(sample_archive(), asset_tokenizer(), {}, nullptr, skip); });
  CHECK((e == ErrorCode::kChecksumMismatch || e == ErrorCode::kCorruptArchive));
}

TEST_CASE("corrupted archives never decode silently") {
  const auto& z = sample_archive();
  size_t header = 0;
  read_header(z, &header);
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 12; ++trial) {
    auto bad = z;
    const size_t at = header + rng() % (z.size() - header);
    bad[at] ^= static_cast<uint8_t>(1 + rng() % 255);
    CAPTURE(at);
    // Either an error, or (for flips confined to unread flush bits) the original.
    try {
      const bool same = decompress(bad, asset_tokenizer()) == sample_text();
      CHECK(same);
    } catch (const Error& e) {
      CHECK((e.code() == ErrorCode::kChecksumMismatch || e.code() == ErrorCode::kCorruptArchive));
    }
  }
  auto crc = z;
  crc[header - 12] ^= 1;
  CHECK(error_of([&] { decompress(crc, asset_tokenizer()); }) == ErrorCode::kChecksumMismatch);
}

TEST_CASE("archive level errors") {
  const auto& z = sample_archive();
  std::vector<std::string> vocab;
  for (int b = 0; b < 256; ++b) vocab.emplace_back(1, static_cast<char>(b));
  const Tokenizer bytes_only = Tokenizer::from_parts(vocab, {});
  CHECK(error_of([&] { decompress(z, bytes_only); }) == ErrorCode::kIncompatibleTokenizer);
  auto v = z;
  v[4] = 9;
  CHECK(error_of([&] { decompress(v, asset_tokenizer()); }) == ErrorCode::kUnsupportedVersion);
  auto m = z;
  m[1] = 'Q';
  CHECK(error_of([&] { decompress(m, asset_tokenizer()); }) == ErrorCode::kBadMagic);
  const std::span<const uint8_t> cut(z.data(), z.size() - 10);
  CHECK(error_of([&] { decompress(cut, asset_tokenizer()); }) == ErrorCode::kShortRead);
  CHECK(error_of([&] { decompress(std::span(z.data(), 3), asset_tokenizer()); }) == ErrorCode::kShortRead);

  CodecConfig bad;
  bad.threads = 0;
  CHECK(error_of([&] { compress(sample_text(), asset_tokenizer(), bad); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("encoder and decoder models stay identical chunk by chunk") {
  const auto ids = asset_tokenizer().encode(sample_text());
  auto [map, compact] = build_vocab_map(ids);
  std::vector<std::vector<float>> enc_params, dec_params;
  std::vector<std::vector<float>> enc_state, dec_state;
  CodecHooks eh, dh;
  eh.on_chunk = [&](uint64_t, const ssm::Parameters<float>& p, const ssm::State<float>& s) {
    enc_params.push_back(p.data);
    enc_state.push_back(s.hidden);
  };
  dh.on_chunk = [&](uint64_t, const ssm::Parameters<float>& p, const ssm::State<float>& s) {
    dec_params.push_back(p.data);
    dec_state.push_back(s.hidden);
  };
  const std::span<const CompactTokenId> prefix(compact.data(), 32 * 12);
  const auto payload = encode_tokens(prefix, map.size(), {}, nullptr, eh);
  const auto back = decode_tokens(payload, prefix.size(), map.size(), {}, nullptr, dh);
  CHECK(std::equal(back.begin(), back.end(), prefix.begin(), prefix.end()));
  REQUIRE(enc_params.size() == 12);
  CHECK(enc_params == dec_params);
  CHECK(enc_state == dec_state);
}
