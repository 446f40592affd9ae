// statesmix command-line front end. Links only the C API.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "statesmix/statesmix.h"

#ifndef STATESMIX_DEFAULT_TOKENIZER
#define STATESMIX_DEFAULT_TOKENIZER "assets/gpt2.bpe"
#endif

namespace {

struct CliError {
  ssmx_status status;
  std::string message;
};

void check(ssmx_status s, const std::string& what) {
  if (s != SSMX_OK) {
    throw CliError{s, what + ": " + ssmx_status_string(s) + " (" + ssmx_last_error_message() + ")"};
  }
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError{SSMX_ERR_IO, "cannot open " + path};
  std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw CliError{SSMX_ERR_IO, "read failed: " + path};
  return data;
}

void write_file(const std::string& path, const uint8_t* data, size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CliError{SSMX_ERR_IO, "cannot create " + path};
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw CliError{SSMX_ERR_IO, "write failed: " + path};
}

struct Buffer {
  ssmx_buffer b{nullptr, 0};
  ~Buffer() { ssmx_buffer_free(&b); }
};

using TokenizerPtr = std::unique_ptr<ssmx_tokenizer, decltype(&ssmx_tokenizer_free)>;
using OptionsPtr = std::unique_ptr<ssmx_options, decltype(&ssmx_options_free)>;

TokenizerPtr load_tokenizer(std::string path) {
  if (path.empty()) {
    const char* env = std::getenv("STATESMIX_TOKENIZER");
    path = env ? env : STATESMIX_DEFAULT_TOKENIZER;
  }
  ssmx_tokenizer* t = nullptr;
  check(ssmx_tokenizer_load(path.c_str(), &t), "loading tokenizer " + path);
  return TokenizerPtr(t, ssmx_tokenizer_free);
}

struct Common {
  std::string tokenizer;
  unsigned threads = 1;
  bool progress = false;
  uint64_t seed = 0;
  std::string variant = "full";
  std::vector<std::string> overrides;
};

void show_progress(uint64_t done, uint64_t total, void*) {
  std::fprintf(stderr, "\r%llu / %llu tokens (%.1f%%)", static_cast<unsigned long long>(done),
               static_cast<unsigned long long>(total), total ? 100.0 * done / total : 100.0);
  if (done == total) std::fputc('\n', stderr);
}

OptionsPtr make_options(const Common& c, bool model_settings) {
  ssmx_options* o = nullptr;
  check(ssmx_options_new(&o), "options");
  OptionsPtr opts(o, ssmx_options_free);
  check(ssmx_options_set(o, "threads", std::to_string(c.threads).c_str()), "--threads");
  if (model_settings) {
    check(ssmx_options_set(o, "seed", std::to_string(c.seed).c_str()), "--seed");
    check(ssmx_options_set(o, "variant", c.variant.c_str()), "--variant");
    for (const auto& kv : c.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw CliError{SSMX_ERR_INVALID_ARGUMENT, "--set expects key=value: " + kv};
      const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
      check(ssmx_options_set(o, key.c_str(), value.c_str()), "--set " + kv);
    }
  }
  if (c.progress) check(ssmx_options_set_progress(o, show_progress, nullptr), "progress");
  return opts;
}

void collect_trace(uint64_t tokens, double bits, double bpt, void* user) {
  auto* out = static_cast<std::string*>(user);
  char line[128];
  std::snprintf(line, sizeof line, "%llu\t%.3f\t%.4f\n", static_cast<unsigned long long>(tokens),
                bits, bpt);
  *out += line;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void add_common(CLI::App* cmd, Common& c, bool model_settings) {
  cmd->add_option("--tokenizer", c.tokenizer, "Tokenizer asset (default: built-in path or $STATESMIX_TOKENIZER)");
  cmd->add_option("--threads", c.threads, "Worker threads (output is identical for any value)")
      ->check(CLI::Range(1u, 256u));
  cmd->add_flag("--progress", c.progress, "Report progress on stderr");
  if (model_settings) {
    cmd->add_option("--seed", c.seed, "Model initialization seed");
    cmd->add_option("--set", c.overrides, "Config override key=value (repeatable)");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"statesmix: lossless text compressor with an online-trained state space model"};
  app.require_subcommand(1);
  Common common;
  std::string input, output, stats_path;
  std::vector<std::string> bench_inputs;
  std::vector<std::string> variants;

  auto* comp = app.add_subcommand("compress", "Compress a file");
  comp->add_option("-i,--input", input, "Input file")->required();
  comp->add_option("-o,--output", output, "Archive to write")->required();
  comp->add_option("--stats", stats_path, "Write the bpt progression as TSV");
  comp->add_option("--variant", common.variant, "count-only | ngram+count | ssm+count | full");
  add_common(comp, common, true);

  auto* decomp = app.add_subcommand("decompress", "Decompress an archive");
  decomp->add_option("-i,--input", input, "Archive")->required();
  decomp->add_option("-o,--output", output, "File to write")->required();
  add_common(decomp, common, false);

  auto* info = app.add_subcommand("info", "Print archive header fields");
  info->add_option("-i,--input", input, "Archive")->required();

  auto* bench = app.add_subcommand("bench", "Compress, verify and time one or more files");
  bench->add_option("inputs", bench_inputs, "Input files")->required();
  bench->add_option("--variant", common.variant, "Model variant");
  add_common(bench, common, true);

  auto* ablate = app.add_subcommand("ablate", "Compare model variants on one file");
  ablate->add_option("-i,--input", input, "Input file")->required();
  ablate->add_option("--variant", variants, "Variant(s) to run (default: all four)");
  add_common(ablate, common, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : SSMX_ERR_INVALID_ARGUMENT;
  }

  try {
    if (*comp) {
      auto tok = load_tokenizer(common.tokenizer);
      auto opts = make_options(common, true);
      std::string trace = "tokens_seen\tcumulative_bits\tbpt\n";
      if (!stats_path.empty()) check(ssmx_options_set_trace(opts.get(), collect_trace, &trace), "stats");
      const auto data = read_file(input);
      Buffer out;
      ssmx_stats st{};
      check(ssmx_compress(tok.get(), opts.get(), data.data(), data.size(), &out.b, &st), "compress");
      write_file(output, out.b.data, out.b.size);
      if (!stats_path.empty()) write_file(stats_path, reinterpret_cast<const uint8_t*>(trace.data()), trace.size());
      std::fprintf(stderr, "%zu -> %zu bytes, %.4f bpb, %llu tokens, v_e %llu\n", data.size(),
                   out.b.size, data.empty() ? 0.0 : 8.0 * out.b.size / data.size(),
                   static_cast<unsigned long long>(st.tokens), static_cast<unsigned long long>(st.v_e));
    } else if (*decomp) {
      auto tok = load_tokenizer(common.tokenizer);
      auto opts = make_options(common, false);
      const auto data = read_file(input);
      Buffer out;
      check(ssmx_decompress(tok.get(), opts.get(), data.data(), data.size(), &out.b, nullptr), "decompress");
      write_file(output, out.b.data, out.b.size);
    } else if (*info) {
      const auto data = read_file(input);
      ssmx_archive_info h{};
      check(ssmx_archive_info_read(data.data(), data.size(), &h), "info");
      std::printf("version\t%u\nflags\t0x%02x\noriginal_length\t%llu\ntoken_count\t%llu\nv_e\t%u\n"
                  "tokenizer_fingerprint\t%016llx\nseed\t%llu\nrice_parameter\t%u\nmap_length\t%u\n"
                  "crc32\t%08x\npayload_length\t%llu\nconfig_block\t%s\n",
                  h.version, h.flags, static_cast<unsigned long long>(h.original_length),
                  static_cast<unsigned long long>(h.token_count), h.v_e,
                  static_cast<unsigned long long>(h.tokenizer_fingerprint),
                  static_cast<unsigned long long>(h.seed), h.rice_parameter, h.map_length, h.crc32,
                  static_cast<unsigned long long>(h.payload_length), h.has_config_block ? "yes" : "no");
    } else if (*bench) {
      auto tok = load_tokenizer(common.tokenizer);
      auto opts = make_options(common, true);
      std::printf("input\tbytes_in\tbytes_out\tbpb\traw_bpb\tcompress_s\tdecompress_s\tverified\n");
      for (const auto& path : bench_inputs) {
        const auto data = read_file(path);
        Buffer packed, unpacked;
        const auto t0 = std::chrono::steady_clock::now();
        check(ssmx_compress(tok.get(), opts.get(), data.data(), data.size(), &packed.b, nullptr), path);
        const double tc = seconds_since(t0);
        const auto t1 = std::chrono::steady_clock::now();
        check(ssmx_decompress(tok.get(), opts.get(), packed.b.data, packed.b.size, &unpacked.b, nullptr), path);
        const double td = seconds_since(t1);
        const bool ok = unpacked.b.size == data.size() &&
                        (data.empty() || std::equal(data.begin(), data.end(), unpacked.b.data));
        std::printf("%s\t%zu\t%zu\t%.4f\t8.0000\t%.2f\t%.2f\t%s\n", path.c_str(), data.size(),
                    packed.b.size, data.empty() ? 0.0 : 8.0 * packed.b.size / data.size(), tc, td,
                    ok ? "yes" : "NO");
        std::fflush(stdout);
        if (!ok) throw CliError{SSMX_ERR_INTERNAL, "round trip mismatch on " + path};
      }
    } else if (*ablate) {
      auto tok = load_tokenizer(common.tokenizer);
      if (variants.empty()) variants = {"count-only", "ngram+count", "ssm+count", "full"};
      const auto data = read_file(input);
      std::printf("variant\tbytes_out\tbpb\tcompress_s\n");
      for (const auto& v : variants) {
        Common c = common;
        c.variant = v;
        auto opts = make_options(c, true);
        Buffer packed;
        const auto t0 = std::chrono::steady_clock::now();
        check(ssmx_compress(tok.get(), opts.get(), data.data(), data.size(), &packed.b, nullptr), v);
        std::printf("%s\t%zu\t%.4f\t%.2f\n", v.c_str(), packed.b.size,
                    data.empty() ? 0.0 : 8.0 * packed.b.size / data.size(), seconds_since(t0));
        std::fflush(stdout);
      }
    }
  } catch (const CliError& e) {
    std::fprintf(stderr, "statesmix: %s\n", e.message.c_str());
    return static_cast<int>(e.status);
  }
  return 0;
}
