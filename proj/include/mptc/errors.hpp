#pragma once

#include <stdexcept>
#include <string>

namespace mptc {

// Root of every error raised by the library. Each failure mode has its own
// type so callers (and tests) can discriminate without parsing messages.
class Error : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

#define MPTC_DEFINE_ERROR(Name)                        \
    class Name : public Error {                        \
     public:                                           \
        explicit Name(const std::string& what)         \
            : Error(std::string(#Name ": ") + what) {} \
    }

MPTC_DEFINE_ERROR(ShapeMismatch);
MPTC_DEFINE_ERROR(InvalidArgument);
MPTC_DEFINE_ERROR(ResidualImaginary);
MPTC_DEFINE_ERROR(ZeroReference);
MPTC_DEFINE_ERROR(NonFiniteGradient);
MPTC_DEFINE_ERROR(BadRank);
MPTC_DEFINE_ERROR(BridgeFailure);
MPTC_DEFINE_ERROR(ImageTooSmall);
MPTC_DEFINE_ERROR(Diverged);
MPTC_DEFINE_ERROR(BadRate);
MPTC_DEFINE_ERROR(InconsistentStack);
MPTC_DEFINE_ERROR(UnsupportedBitDepth);
MPTC_DEFINE_ERROR(BadMagic);
MPTC_DEFINE_ERROR(TruncatedFile);
MPTC_DEFINE_ERROR(IoError);

#undef MPTC_DEFINE_ERROR

}  // namespace mptc
