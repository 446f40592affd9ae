#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "statesmix/statesmix.h"

extern "C" int capi_c_round_trip(const char* tokenizer_path);

namespace {

const std::string kAsset = std::string(STATESMIX_ASSET_DIR) + "/gpt2.bpe";

struct Tok {
  ssmx_tokenizer* p = nullptr;
  Tok() { REQUIRE(ssmx_tokenizer_load(kAsset.c_str(), &p) == SSMX_OK); }
  ~Tok() { ssmx_tokenizer_free(p); }
};

struct Opts {
  ssmx_options* p = nullptr;
  Opts() { REQUIRE(ssmx_options_new(&p) == SSMX_OK); }
  ~Opts() { ssmx_options_free(p); }
};

std::vector<uint8_t> take(ssmx_buffer& b) {
  std::vector<uint8_t> v(b.data, b.data + b.size);
  ssmx_buffer_free(&b);
  return v;
}

const char kText[] =
    "Fellow citizens, the state of our union is the sum of a great many small things. "
    "Fellow citizens, the state of our union is strong.";

}  // namespace

TEST_CASE("plain C caller") { CHECK(capi_c_round_trip(kAsset.c_str()) == 1); }

TEST_CASE("version and status strings") {
  CHECK(std::strlen(ssmx_version()) > 0);
  CHECK(std::string(ssmx_status_string(SSMX_OK)).size() > 0);
  CHECK(std::string(ssmx_status_string(SSMX_ERR_BAD_MAGIC)) != ssmx_status_string(SSMX_OK));
}

TEST_CASE("tokenizer handle") {
  Tok t;
  CHECK(ssmx_tokenizer_vocab_size(t.p) == 50257);
  CHECK(ssmx_tokenizer_fingerprint(t.p) != 0);
  ssmx_tokenizer* bad = nullptr;
  CHECK(ssmx_tokenizer_load("/no/such/file", &bad) == SSMX_ERR_IO);
  CHECK(bad == nullptr);
  CHECK(std::strlen(ssmx_last_error_message()) > 0);
}

TEST_CASE("compress, inspect and decompress") {
  Tok t;
  Opts o;
  ssmx_buffer z{};
  ssmx_stats stats{};
  REQUIRE(ssmx_compress(t.p, o.p, reinterpret_cast<const uint8_t*>(kText), sizeof kText - 1, &z,
                        &stats) == SSMX_OK);
  const auto archive = take(z);
  CHECK(stats.tokens > 0);
  CHECK(stats.payload_bytes + stats.header_bytes == archive.size());

  ssmx_archive_info info{};
  REQUIRE(ssmx_archive_info_read(archive.data(), archive.size(), &info) == SSMX_OK);
  CHECK(info.original_length == sizeof kText - 1);
  CHECK(info.token_count == stats.tokens);
  CHECK(info.v_e == stats.v_e);
  CHECK(info.tokenizer_fingerprint == ssmx_tokenizer_fingerprint(t.p));
  CHECK(info.has_config_block == 0);

  ssmx_buffer out{};
  REQUIRE(ssmx_decompress(t.p, nullptr, archive.data(), archive.size(), &out, nullptr) == SSMX_OK);
  const auto back = take(out);
  CHECK(std::string(back.begin(), back.end()) == kText);
}

TEST_CASE("options") {
  Opts o;
  CHECK(ssmx_options_set(o.p, "variant", "ngram+count") == SSMX_OK);
  CHECK(ssmx_options_set(o.p, "variant", "bogus") == SSMX_ERR_INVALID_ARGUMENT);
  CHECK(ssmx_options_set(o.p, "no_such_key", "1") == SSMX_ERR_INVALID_ARGUMENT);
  CHECK(ssmx_options_set(o.p, "threads", "-2") == SSMX_ERR_INVALID_ARGUMENT);
  CHECK(ssmx_options_set(o.p, "lr", "abc") == SSMX_ERR_INVALID_ARGUMENT);
  CHECK(ssmx_options_set(o.p, "d_model", "8") == SSMX_OK);
  CHECK(ssmx_options_set(o.p, "chunk_size", "8") == SSMX_OK);
  CHECK(ssmx_options_set(o.p, nullptr, "1") == SSMX_ERR_INVALID_ARGUMENT);

  Tok t;
  ssmx_buffer z{};
  REQUIRE(ssmx_compress(t.p, o.p, reinterpret_cast<const uint8_t*>(kText), sizeof kText - 1, &z,
                        nullptr) == SSMX_OK);
  const auto archive = take(z);
  ssmx_archive_info info{};
  REQUIRE(ssmx_archive_info_read(archive.data(), archive.size(), &info) == SSMX_OK);
  CHECK(info.has_config_block == 1);
  CHECK(info.flags == 3 - 1 + 0x80);  // ngrams only, plus the config block
  ssmx_buffer out{};
  REQUIRE(ssmx_decompress(t.p, nullptr, archive.data(), archive.size(), &out, nullptr) == SSMX_OK);
  CHECK(take(out).size() == sizeof kText - 1);
}

TEST_CASE("callbacks") {
  Tok t;
  Opts o;
  REQUIRE(ssmx_options_set(o.p, "stats_interval", "10") == SSMX_OK);
  struct Seen {
    int progress = 0;
    std::vector<double> bits;
  } seen;
  ssmx_options_set_progress(
      o.p, [](uint64_t, uint64_t, void* u) { static_cast<Seen*>(u)->progress++; }, &seen);
  ssmx_options_set_trace(
      o.p,
      [](uint64_t, double bits, double, void* u) { static_cast<Seen*>(u)->bits.push_back(bits); },
      &seen);
  ssmx_buffer z{};
  REQUIRE(ssmx_compress(t.p, o.p, reinterpret_cast<const uint8_t*>(kText), sizeof kText - 1, &z,
                        nullptr) == SSMX_OK);
  take(z);
  CHECK(seen.progress > 0);
  REQUIRE(seen.bits.size() > 1);
  for (size_t i = 1; i < seen.bits.size(); ++i) CHECK(seen.bits[i] >= seen.bits[i - 1]);
}

TEST_CASE("error codes surface through the C API") {
  Tok t;
  ssmx_buffer out{};
  const uint8_t junk[] = {'N', 'O', 'P', 'E', 1, 0, 0, 0};
  CHECK(ssmx_decompress(t.p, nullptr, junk, sizeof junk, &out, nullptr) == SSMX_ERR_BAD_MAGIC);
  CHECK(out.data == nullptr);
  const uint8_t shortish[] = {'S', 'S'};
  CHECK(ssmx_decompress(t.p, nullptr, shortish, sizeof shortish, &out, nullptr) ==
        SSMX_ERR_SHORT_READ);
  CHECK(ssmx_compress(nullptr, nullptr, nullptr, 0, &out, nullptr) == SSMX_ERR_INVALID_ARGUMENT);
  CHECK(ssmx_compress(t.p, nullptr, nullptr, 5, &out, nullptr) == SSMX_ERR_INVALID_ARGUMENT);
  ssmx_archive_info info{};
  CHECK(ssmx_archive_info_read(junk, sizeof junk, &info) == SSMX_ERR_BAD_MAGIC);
}

TEST_CASE("empty input through the C API") {
  Tok t;
  ssmx_buffer z{};
  REQUIRE(ssmx_compress(t.p, nullptr, nullptr, 0, &z, nullptr) == SSMX_OK);
  const auto archive = take(z);
  ssmx_buffer out{};
  REQUIRE(ssmx_decompress(t.p, nullptr, archive.data(), archive.size(), &out, nullptr) == SSMX_OK);
  CHECK(out.size == 0);
  ssmx_buffer_free(&out);
}
