#pragma once

#include <stdexcept>
#include <string>

namespace nnstego {

enum class Errc {
  kNotPinned,
  kMalformedHeader,
  kOffsetOverlap,
  kTruncatedData,
  kMissingTensor,
  kShapeMismatch,
  kPayloadTooLarge,
  kLayerTooSmall,
  kEmptyPayload,
  kNoStegoHeader,
  kUnsupportedVersion,
  kDigestMismatch,
  kNonFiniteLoss,
  kInvalidArgument,
  kIo,
};

const char* to_string(Errc code);

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can branch on the category.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace nnstego
