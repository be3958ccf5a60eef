#pragma once

#include <stdexcept>
#include <string>

namespace vloc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define VLOC_DEFINE_ERROR(Name)          \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

// geometry
VLOC_DEFINE_ERROR(InvalidDepth);
VLOC_DEFINE_ERROR(NearSingularRotation);
VLOC_DEFINE_ERROR(InvalidIntrinsics);

// images / file formats
VLOC_DEFINE_ERROR(FormatError);
VLOC_DEFINE_ERROR(VersionMismatch);
VLOC_DEFINE_ERROR(OutOfBounds);

// mapping and retrieval
VLOC_DEFINE_ERROR(NoDepth);
VLOC_DEFINE_ERROR(EmptyImage);
VLOC_DEFINE_ERROR(EmptyMap);
VLOC_DEFINE_ERROR(DimensionMismatch);
VLOC_DEFINE_ERROR(NonUnitNorm);

// fusion
VLOC_DEFINE_ERROR(UnknownState);
VLOC_DEFINE_ERROR(NoGaugePrior);
VLOC_DEFINE_ERROR(SingularNormalEquations);
VLOC_DEFINE_ERROR(NonMonotonicTimestamp);
VLOC_DEFINE_ERROR(EmptyGraph);
VLOC_DEFINE_ERROR(NotLocalized);

// simulator
VLOC_DEFINE_ERROR(PoseInCollision);
VLOC_DEFINE_ERROR(UnreachableWaypoint);

// planning and evaluation
VLOC_DEFINE_ERROR(NoPath);
VLOC_DEFINE_ERROR(NoMatches);
VLOC_DEFINE_ERROR(EmptyInput);

#undef VLOC_DEFINE_ERROR

}  // namespace vloc
