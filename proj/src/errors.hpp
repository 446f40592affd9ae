#pragma once

#include <stdexcept>
#include <string>

namespace statesmix {

// Values mirror ssmx_status in include/statesmix/statesmix.h.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kIo = 2,
  kTokenizerLoad = 3,
  kBadMagic = 4,
  kUnsupportedVersion = 5,
  kShortRead = 6,
  kCorruptArchive = 7,
  kIncompatibleTokenizer = 8,
  kChecksumMismatch = 9,
  kNumericFault = 10,
  kUnsupportedVocabulary = 11,
  kApiMisuse = 12,
  kInternal = 13,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace statesmix
