#pragma once

#include <stdexcept>
#include <string>

namespace ioncast {

// Base of every error the library throws. The CLI maps ConfigError to exit
// code 2 and everything else to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define IONCAST_DEFINE_ERROR(Name)              \
  class Name : public Error {                   \
   public:                                      \
    using Error::Error;                         \
  }

IONCAST_DEFINE_ERROR(DimensionError);
IONCAST_DEFINE_ERROR(ArgumentError);
IONCAST_DEFINE_ERROR(IndexError);
IONCAST_DEFINE_ERROR(RangeError);
IONCAST_DEFINE_ERROR(ConstructionError);
IONCAST_DEFINE_ERROR(FormatError);
IONCAST_DEFINE_ERROR(IngestError);
IONCAST_DEFINE_ERROR(AlignmentError);
IONCAST_DEFINE_ERROR(SplitError);
IONCAST_DEFINE_ERROR(SamplingError);
IONCAST_DEFINE_ERROR(ConfigError);
IONCAST_DEFINE_ERROR(TrainingError);
IONCAST_DEFINE_ERROR(RolloutError);
IONCAST_DEFINE_ERROR(EvaluationError);

#undef IONCAST_DEFINE_ERROR

}  // namespace ioncast
