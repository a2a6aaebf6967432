#pragma once

#include <stdexcept>
#include <string>

namespace preformer {

/// Base of every error raised by the library. Each subclass names one
/// failure mode so callers can catch exactly what they can recover from.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PREFORMER_DEFINE_ERROR(Name)                               \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

PREFORMER_DEFINE_ERROR(ShapeMismatch);
PREFORMER_DEFINE_ERROR(InvalidKernel);
PREFORMER_DEFINE_ERROR(NotScalar);
PREFORMER_DEFINE_ERROR(OddInputLength);
PREFORMER_DEFINE_ERROR(TooFewSegments);
PREFORMER_DEFINE_ERROR(InvalidConfig);
PREFORMER_DEFINE_ERROR(ConfigMismatch);
PREFORMER_DEFINE_ERROR(MissingGrad);
PREFORMER_DEFINE_ERROR(EmptyDataset);
PREFORMER_DEFINE_ERROR(ParseError);
PREFORMER_DEFINE_ERROR(GapError);
PREFORMER_DEFINE_ERROR(EmptyFile);
PREFORMER_DEFINE_ERROR(TooShort);
PREFORMER_DEFINE_ERROR(UnknownKind);
PREFORMER_DEFINE_ERROR(CheckpointError);

#undef PREFORMER_DEFINE_ERROR

}  // namespace preformer
