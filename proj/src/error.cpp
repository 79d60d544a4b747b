#include "nnstego/error.hpp"

namespace nnstego {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::kNotPinned: return "not pinned";
    case Errc::kMalformedHeader: return "malformed header";
    case Errc::kOffsetOverlap: return "offset overlap";
    case Errc::kTruncatedData: return "truncated data";
    case Errc::kMissingTensor: return "missing tensor";
    case Errc::kShapeMismatch: return "shape mismatch";
    case Errc::kPayloadTooLarge: return "payload too large";
    case Errc::kLayerTooSmall: return "layer too small";
    case Errc::kEmptyPayload: return "empty payload";
    case Errc::kNoStegoHeader: return "no stego header";
    case Errc::kUnsupportedVersion: return "unsupported version";
    case Errc::kDigestMismatch: return "digest mismatch";
    case Errc::kNonFiniteLoss: return "non-finite loss";
    case Errc::kInvalidArgument: return "invalid argument";
    case Errc::kIo: return "i/o error";
  }
  return "unknown error";
}

}  // namespace nnstego
