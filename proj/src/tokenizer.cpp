#include "tokenizer.hpp"

#include <charconv>
#include <fstream>
#include <queue>
#include <sstream>

#include "errors.hpp"

namespace statesmix {
namespace {

constexpr std::string_view kAssetMagic = "statesmix-bpe 1";

uint64_t pair_key(GlobalTokenId a, GlobalTokenId b) {
  return (static_cast<uint64_t>(a) << 32) | b;
}

class Fnv1a {
 public:
  void bytes(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void u64(uint64_t v) {
    uint8_t le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<uint8_t>(v >> (8 * i));
    bytes(le, 8);
  }
  uint64_t value() const { return h_; }

 private:
  uint64_t h_ = 0xcbf29ce484222325ULL;
};

[[noreturn]] void load_error(const std::string& msg) {
  fail(ErrorCode::kTokenizerLoad, "tokenizer definition: " + msg);
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

uint64_t parse_count(std::string_view line, std::string_view keyword) {
  if (line.substr(0, keyword.size()) != keyword || line.size() <= keyword.size() + 1 ||
      line[keyword.size()] != ' ') {
    load_error("expected '" + std::string(keyword) + " <count>'");
  }
  uint64_t n = 0;
  const auto digits = line.substr(keyword.size() + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) {
    load_error("bad count in '" + std::string(line) + "'");
  }
  return n;
}

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}
  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    size_t end = text_.find('\n', pos_);
    if (end == std::string_view::npos) end = text_.size();
    line = text_.substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end + 1;
    ++lineno_;
    return true;
  }
  std::string_view expect() {
    std::string_view line;
    if (!next(line)) load_error("unexpected end of file after line " + std::to_string(lineno_));
    return line;
  }

 private:
  std::string_view text_;
  size_t pos_ = 0;
  size_t lineno_ = 0;
};

}  // namespace

std::string escape_entry(std::string_view raw) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(raw.size());
  for (unsigned char b : raw) {
    if (b == '\\') {
      out += "\\\\";
    } else if (b >= 0x21 && b <= 0x7e) {
      out += static_cast<char>(b);
    } else {
      out += "\\x";
      out += kHex[b >> 4];
      out += kHex[b & 15];
    }
  }
  return out;
}

std::string unescape_entry(std::string_view escaped) {
  std::string out;
  for (size_t i = 0; i < escaped.size(); ++i) {
    const char c = escaped[i];
    if (c != '\\') {
      out += c;
      continue;
    }
    if (i + 1 < escaped.size() && escaped[i + 1] == '\\') {
      out += '\\';
      i += 1;
    } else if (i + 3 < escaped.size() && escaped[i + 1] == 'x' &&
               hex_digit(escaped[i + 2]) >= 0 && hex_digit(escaped[i + 3]) >= 0) {
      out += static_cast<char>(hex_digit(escaped[i + 2]) * 16 + hex_digit(escaped[i + 3]));
      i += 3;
    } else {
      load_error("bad escape in entry '" + std::string(escaped) + "'");
    }
  }
  return out;
}

uint64_t tokenizer_fingerprint(const std::vector<std::string>& vocab,
                               const std::vector<MergeRule>& merges) {
  Fnv1a h;
  h.bytes(kAssetMagic.data(), kAssetMagic.size());
  h.u64(vocab.size());
  for (const auto& entry : vocab) {
    h.u64(entry.size());
    h.bytes(entry.data(), entry.size());
  }
  h.u64(merges.size());
  for (const auto& m : merges) {
    h.u64((static_cast<uint64_t>(m.left) << 32) | m.right);
  }
  return h.value();
}

Tokenizer Tokenizer::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open tokenizer file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Tokenizer Tokenizer::parse(std::string_view text) {
  LineReader reader(text);
  if (reader.expect() != kAssetMagic) load_error("missing 'statesmix-bpe 1' header");

  const uint64_t n_vocab = parse_count(reader.expect(), "vocab");
  if (n_vocab == 0 || n_vocab > (1ULL << 31)) load_error("vocabulary size out of range");
  std::vector<std::string> vocab;
  vocab.reserve(n_vocab);
  for (uint64_t i = 0; i < n_vocab; ++i) {
    auto line = reader.expect();
    if (line.empty()) load_error("empty vocabulary entry " + std::to_string(i));
    vocab.push_back(unescape_entry(line));
  }

  const uint64_t n_merges = parse_count(reader.expect(), "merges");
  std::vector<MergeRule> merges;
  merges.reserve(n_merges);
  for (uint64_t i = 0; i < n_merges; ++i) {
    auto line = reader.expect();
    const auto sp = line.find(' ');
    if (sp == std::string_view::npos) load_error("bad merge line '" + std::string(line) + "'");
    MergeRule m{};
    auto r1 = std::from_chars(line.data(), line.data() + sp, m.left);
    auto r2 = std::from_chars(line.data() + sp + 1, line.data() + line.size(), m.right);
    if (r1.ec != std::errc() || r1.ptr != line.data() + sp || r2.ec != std::errc() ||
        r2.ptr != line.data() + line.size()) {
      load_error("bad merge line '" + std::string(line) + "'");
    }
    merges.push_back(m);
  }
  std::string_view rest;
  while (reader.next(rest)) {
    if (!rest.empty()) load_error("trailing content after merge list");
  }
  return from_parts(std::move(vocab), std::move(merges));
}

Tokenizer Tokenizer::from_parts(std::vector<std::string> vocab, std::vector<MergeRule> merges) {
  Tokenizer t;
  t.vocab_ = std::move(vocab);
  t.merges_ = std::move(merges);
  t.build_indexes();
  t.fingerprint_ = tokenizer_fingerprint(t.vocab_, t.merges_);
  return t;
}

void Tokenizer::build_indexes() {
  if (vocab_.empty()) load_error("empty vocabulary");
  std::unordered_map<std::string_view, GlobalTokenId> by_content;
  by_content.reserve(vocab_.size());
  for (GlobalTokenId id = 0; id < vocab_.size(); ++id) {
    if (vocab_[id].empty()) load_error("empty vocabulary entry " + std::to_string(id));
    by_content.try_emplace(vocab_[id], id);
  }
  for (int b = 0; b < 256; ++b) {
    const char c = static_cast<char>(b);
    auto it = by_content.find(std::string_view(&c, 1));
    if (it == by_content.end()) {
      load_error("byte value " + std::to_string(b) + " has no single-byte entry");
    }
    byte_token_[b] = it->second;
  }
  rules_.reserve(merges_.size() * 2);
  for (uint32_t rank = 0; rank < merges_.size(); ++rank) {
    const auto& m = merges_[rank];
    if (m.left >= vocab_.size() || m.right >= vocab_.size()) {
      load_error("merge " + std::to_string(rank) + " references an unknown id");
    }
    const std::string joined = vocab_[m.left] + vocab_[m.right];
    auto it = by_content.find(joined);
    if (it == by_content.end()) {
      load_error("merge " + std::to_string(rank) + " result is not in the vocabulary");
    }
    rules_.try_emplace(pair_key(m.left, m.right), Rule{rank, it->second});
  }
}

std::vector<GlobalTokenId> Tokenizer::encode(std::span<const uint8_t> bytes) const {
  const size_t n = bytes.size();
  std::vector<GlobalTokenId> tok(n);
  std::vector<int64_t> next(n), prev(n);
  for (size_t i = 0; i < n; ++i) {
    tok[i] = byte_token_[bytes[i]];
    next[i] = (i + 1 < n) ? static_cast<int64_t>(i + 1) : -1;
    prev[i] = static_cast<int64_t>(i) - 1;
  }

  struct Candidate {
    uint32_t rank;
    int64_t pos;
    bool operator>(const Candidate& o) const {
      return rank != o.rank ? rank > o.rank : pos > o.pos;
    }
  };
  std::vector<Candidate> storage;
  storage.reserve(n);
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap(
      std::greater<>{}, std::move(storage));

  auto rule_at = [&](int64_t pos) -> const Rule* {
    if (pos < 0 || next[pos] < 0) return nullptr;
    auto it = rules_.find(pair_key(tok[pos], tok[next[pos]]));
    return it == rules_.end() ? nullptr : &it->second;
  };
  auto push = [&](int64_t pos) {
    if (const Rule* r = rule_at(pos)) heap.push({r->rank, pos});
  };

  std::vector<bool> alive(n, true);
  for (size_t i = 0; i + 1 < n; ++i) push(static_cast<int64_t>(i));

  while (!heap.empty()) {
    const Candidate c = heap.top();
    heap.pop();
    if (!alive[c.pos]) continue;
    const Rule* r = rule_at(c.pos);
    if (r == nullptr || r->rank != c.rank) continue;  // stale entry
    const int64_t right = next[c.pos];
    tok[c.pos] = r->result;
    alive[right] = false;
    next[c.pos] = next[right];
    if (next[right] >= 0) prev[next[right]] = c.pos;
    push(prev[c.pos]);
    push(c.pos);
  }

  std::vector<GlobalTokenId> out;
  for (int64_t p = n ? 0 : -1; p >= 0; p = next[p]) out.push_back(tok[p]);
  return out;
}

std::vector<uint8_t> Tokenizer::decode(std::span<const GlobalTokenId> tokens) const {
  std::vector<uint8_t> out;
  for (GlobalTokenId id : tokens) {
    if (id >= vocab_.size()) {
      fail(ErrorCode::kCorruptArchive, "token id " + std::to_string(id) + " outside vocabulary");
    }
    const auto& e = vocab_[id];
    out.insert(out.end(), e.begin(), e.end());
  }
  return out;
}

std::string serialize_tokenizer(const Tokenizer& tok) {
  std::string out(kAssetMagic);
  out += "\nvocab " + std::to_string(tok.vocab_size()) + "\n";
  for (const auto& e : tok.vocab()) out += escape_entry(e) + "\n";
  out += "merges " + std::to_string(tok.merges().size()) + "\n";
  for (const auto& m : tok.merges()) {
    out += std::to_string(m.left) + " " + std::to_string(m.right) + "\n";
  }
  return out;
}

}  // namespace statesmix
