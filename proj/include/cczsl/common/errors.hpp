// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cczsl {

// Root of every error raised by the library. Callers that only need to
// report failures can catch this; tests match on the concrete subclasses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CCZSL_DEFINE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

CCZSL_DEFINE_ERROR(DimensionError);
CCZSL_DEFINE_ERROR(DomainError);
CCZSL_DEFINE_ERROR(DegenerateVectorError);
CCZSL_DEFINE_ERROR(RankError);
CCZSL_DEFINE_ERROR(NumericError);
CCZSL_DEFINE_ERROR(GraphError);
CCZSL_DEFINE_ERROR(ValidationError);
CCZSL_DEFINE_ERROR(InfeasibleError);
CCZSL_DEFINE_ERROR(SchemaError);
CCZSL_DEFINE_ERROR(IndexError);
CCZSL_DEFINE_ERROR(ConfigError);
CCZSL_DEFINE_ERROR(ConstraintViolation);
CCZSL_DEFINE_ERROR(ConsistencyError);
CCZSL_DEFINE_ERROR(IntegrityError);
CCZSL_DEFINE_ERROR(CompletenessError);
CCZSL_DEFINE_ERROR(IncomparableError);
CCZSL_DEFINE_ERROR(DegenerateProtocolError);

#undef CCZSL_DEFINE_ERROR

}  // namespace cczsl
