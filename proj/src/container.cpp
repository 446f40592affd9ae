#include "container.hpp"

#include <bit>
#include <cstring>
#include <string>

#include <zlib.h>

#include "errors.hpp"

namespace statesmix {

namespace {

class Writer {
 public:
  template <class T>
  void put(T v) {
    if constexpr (std::is_floating_point_v<T>) {
      put(std::bit_cast<std::conditional_t<sizeof(T) == 8, uint64_t, uint32_t>>(v));
    } else {
      for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
  }
  void put_bytes(std::span<const uint8_t> b) { out.insert(out.end(), b.begin(), b.end()); }
  std::vector<uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> in) : in_(in) {}
  template <class T>
  T get() {
    if constexpr (std::is_floating_point_v<T>) {
      return std::bit_cast<T>(get<std::conditional_t<sizeof(T) == 8, uint64_t, uint32_t>>());
    } else {
      need(sizeof(T));
      T v = 0;
      for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in_[pos_ + i]) << (8 * i));
      pos_ += sizeof(T);
      return v;
    }
  }
  std::span<const uint8_t> get_bytes(uint64_t n) {
    need(n);
    auto s = in_.subspan(pos_, static_cast<size_t>(n));
    pos_ += static_cast<size_t>(n);
    return s;
  }
  size_t pos() const { return pos_; }
  size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(uint64_t n) const {
    if (n > in_.size() - pos_) fail(ErrorCode::kShortRead, "archive truncated");
  }
  std::span<const uint8_t> in_;
  size_t pos_ = 0;
};

}  // namespace

ConfigBlock make_config_block(const ModelConfig& m, const ContextConfig& c, const MixConfig& x) {
  return {static_cast<uint32_t>(m.d_model), static_cast<uint32_t>(m.d_state),
          static_cast<uint32_t>(m.d_inner), static_cast<uint32_t>(m.d_conv),
          static_cast<uint32_t>(m.n_layers), static_cast<uint32_t>(m.chunk_size),
          m.label_smoothing, m.lr, m.beta1, m.beta2, m.adam_eps, m.grad_clip,
          static_cast<uint8_t>(c.table_slots_log2), static_cast<uint8_t>(c.lz_slots_log2),
          x.beta, x.h0, x.s_min, x.s_max};
}

void apply_config_block(const ConfigBlock& b, ModelConfig& m, ContextConfig& c, MixConfig& x) {
  m.d_model = b.d_model;
  m.d_state = b.d_state;
  m.d_inner = b.d_inner;
  m.d_conv = b.d_conv;
  m.n_layers = b.n_layers;
  m.chunk_size = b.chunk_size;
  m.label_smoothing = b.label_smoothing;
  m.lr = b.lr;
  m.beta1 = b.beta1;
  m.beta2 = b.beta2;
  m.adam_eps = b.adam_eps;
  m.grad_clip = b.grad_clip;
  c.table_slots_log2 = b.table_slots_log2;
  c.lz_slots_log2 = b.lz_slots_log2;
  x.beta = b.mix_beta;
  x.h0 = b.mix_h0;
  x.s_min = b.mix_s_min;
  x.s_max = b.mix_s_max;
}

bool ArchiveHeader::operator==(const ArchiveHeader& o) const {
  return version == o.version && flags == o.flags && original_length == o.original_length &&
         token_count == o.token_count && v_e == o.v_e &&
         tokenizer_fingerprint == o.tokenizer_fingerprint && seed == o.seed &&
         config == o.config && map.rice_parameter == o.map.rice_parameter &&
         map.payload == o.map.payload && crc32 == o.crc32 && payload_length == o.payload_length;
}

std::vector<uint8_t> write_header(const ArchiveHeader& h) {
  if (h.config.has_value() != ((h.flags & kFlagConfigBlock) != 0)) {
    fail(ErrorCode::kInternal, "config flag does not match config block");
  }
  Writer w;
  w.put_bytes(kMagic);
  w.put(h.version);
  w.put(h.flags);
  w.put(h.original_length);
  w.put(h.token_count);
  w.put(h.v_e);
  w.put(h.tokenizer_fingerprint);
  w.put(h.seed);
  if (h.config) {
    const ConfigBlock& b = *h.config;
    for (uint32_t v : {b.d_model, b.d_state, b.d_inner, b.d_conv, b.n_layers, b.chunk_size}) w.put(v);
    for (double v : {b.label_smoothing, b.lr, b.beta1, b.beta2, b.adam_eps, b.grad_clip}) w.put(v);
    w.put(b.table_slots_log2);
    w.put(b.lz_slots_log2);
    for (double v : {b.mix_beta, b.mix_h0, b.mix_s_min, b.mix_s_max}) w.put(v);
  }
  w.put(h.map.rice_parameter);
  w.put(static_cast<uint32_t>(h.map.payload.size()));
  w.put_bytes(h.map.payload);
  w.put(h.crc32);
  w.put(h.payload_length);
  return std::move(w.out);
}

ArchiveHeader read_header(std::span<const uint8_t> bytes, size_t* consumed) {
  Reader r(bytes);
  const auto magic = r.get_bytes(kMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
    fail(ErrorCode::kBadMagic, "not a statesmix archive");
  }
  ArchiveHeader h;
  h.version = r.get<uint8_t>();
  if (h.version != kFormatVersion) {
    fail(ErrorCode::kUnsupportedVersion, "unsupported archive version " + std::to_string(h.version));
  }
  h.flags = r.get<uint8_t>();
  if (h.flags & ~kKnownFlags) fail(ErrorCode::kCorruptArchive, "unknown archive flags");
  h.original_length = r.get<uint64_t>();
  h.token_count = r.get<uint64_t>();
  h.v_e = r.get<uint32_t>();
  h.tokenizer_fingerprint = r.get<uint64_t>();
  h.seed = r.get<uint64_t>();
  if (h.flags & kFlagConfigBlock) {
    ConfigBlock b{};
    for (uint32_t* v : {&b.d_model, &b.d_state, &b.d_inner, &b.d_conv, &b.n_layers, &b.chunk_size}) {
      *v = r.get<uint32_t>();
    }
    for (double* v : {&b.label_smoothing, &b.lr, &b.beta1, &b.beta2, &b.adam_eps, &b.grad_clip}) {
      *v = r.get<double>();
    }
    b.table_slots_log2 = r.get<uint8_t>();
    b.lz_slots_log2 = r.get<uint8_t>();
    for (double* v : {&b.mix_beta, &b.mix_h0, &b.mix_s_min, &b.mix_s_max}) *v = r.get<double>();
    h.config = b;
  }
  h.map.rice_parameter = r.get<uint8_t>();
  const auto map_len = r.get<uint32_t>();
  const auto map_bytes = r.get_bytes(map_len);
  h.map.payload.assign(map_bytes.begin(), map_bytes.end());
  h.crc32 = r.get<uint32_t>();
  h.payload_length = r.get<uint64_t>();
  if (h.v_e > h.token_count || (h.v_e == 0) != (h.token_count == 0)) {
    fail(ErrorCode::kCorruptArchive, "inconsistent token counts");
  }
  if (consumed) *consumed = r.pos();
  return h;
}

std::vector<uint8_t> write_archive(const Archive& a) {
  if (a.header.payload_length != a.payload.size()) {
    fail(ErrorCode::kInternal, "payload_length does not match payload");
  }
  std::vector<uint8_t> out = write_header(a.header);
  out.insert(out.end(), a.payload.begin(), a.payload.end());
  return out;
}

Archive read_archive(std::span<const uint8_t> bytes) {
  Archive a;
  size_t used = 0;
  a.header = read_header(bytes, &used);
  const uint64_t rest = bytes.size() - used;
  if (rest < a.header.payload_length) fail(ErrorCode::kShortRead, "archive payload truncated");
  if (rest > a.header.payload_length) fail(ErrorCode::kCorruptArchive, "trailing bytes after payload");
  a.payload.assign(bytes.begin() + static_cast<ptrdiff_t>(used), bytes.end());
  return a;
}

uint32_t crc32_of(std::span<const uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  size_t off = 0;
  while (off < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, n);
    off += n;
  }
  return static_cast<uint32_t>(crc);
}

}  // namespace statesmix
