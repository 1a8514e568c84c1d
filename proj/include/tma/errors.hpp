#pragma once

#include <stdexcept>
#include <string>

namespace tma {

/// Root of every error raised by the library.  The CLI maps subclasses onto
/// exit codes; tests match on the concrete type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TMA_DEFINE_ERROR(Name)        \
  class Name : public Error {         \
   public:                            \
    using Error::Error;               \
  }

TMA_DEFINE_ERROR(DomainViolation);
TMA_DEFINE_ERROR(DimensionMismatch);
TMA_DEFINE_ERROR(NotPositiveDefinite);
TMA_DEFINE_ERROR(IllConditioned);
TMA_DEFINE_ERROR(NotHermitian);
TMA_DEFINE_ERROR(AmplitudeTooLarge);
TMA_DEFINE_ERROR(NoConvergence);
TMA_DEFINE_ERROR(DomainExceeded);
TMA_DEFINE_ERROR(ClassExit);
TMA_DEFINE_ERROR(CFLViolation);
TMA_DEFINE_ERROR(EmptyCylinder);
TMA_DEFINE_ERROR(DegenerateLadder);
TMA_DEFINE_ERROR(ConfigInvalid);
TMA_DEFINE_ERROR(ParseError);
TMA_DEFINE_ERROR(UnknownAtom);
TMA_DEFINE_ERROR(InvalidArgument);

#undef TMA_DEFINE_ERROR

}  // namespace tma
