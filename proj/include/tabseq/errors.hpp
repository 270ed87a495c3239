#pragma once

#include <stdexcept>
#include <string>

namespace tabseq {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TABSEQ_DEFINE_ERROR(Name)          \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

TABSEQ_DEFINE_ERROR(SchemaMismatch);
TABSEQ_DEFINE_ERROR(ParseError);
TABSEQ_DEFINE_ERROR(ValidationError);
TABSEQ_DEFINE_ERROR(EmptyResult);
TABSEQ_DEFINE_ERROR(FieldKindError);
TABSEQ_DEFINE_ERROR(ShapeError);
TABSEQ_DEFINE_ERROR(RangeError);
TABSEQ_DEFINE_ERROR(LengthMismatch);
TABSEQ_DEFINE_ERROR(DegenerateLabels);
TABSEQ_DEFINE_ERROR(ConfigError);
TABSEQ_DEFINE_ERROR(TooFewSamples);
TABSEQ_DEFINE_ERROR(NonFiniteError);
TABSEQ_DEFINE_ERROR(DivergenceError);
TABSEQ_DEFINE_ERROR(VocabularyMismatch);
TABSEQ_DEFINE_ERROR(IoError);

#undef TABSEQ_DEFINE_ERROR

}  // namespace tabseq
