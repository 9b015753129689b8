#pragma once

#include <stdexcept>
#include <string>

namespace fmc {

/// Base of every error raised by the library. Each subclass corresponds to
/// one failure kind so callers can catch selectively.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FMC_DEFINE_ERROR(Name)            \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  };

FMC_DEFINE_ERROR(UnknownCategory)
FMC_DEFINE_ERROR(UnknownArea)
FMC_DEFINE_ERROR(SchemaError)
FMC_DEFINE_ERROR(EmptyDataset)
FMC_DEFINE_ERROR(TooFewRecords)
FMC_DEFINE_ERROR(NonpositiveWeight)
FMC_DEFINE_ERROR(DegenerateNode)
FMC_DEFINE_ERROR(SchemaMismatch)
FMC_DEFINE_ERROR(InvalidK)
FMC_DEFINE_ERROR(UnsupportedLearner)
FMC_DEFINE_ERROR(NoModelsAvailable)
FMC_DEFINE_ERROR(LengthMismatch)
FMC_DEFINE_ERROR(EmptyMatrix)
FMC_DEFINE_ERROR(UndefinedAuc)
FMC_DEFINE_ERROR(TooManyFeatures)
FMC_DEFINE_ERROR(UnknownFeature)
FMC_DEFINE_ERROR(StageOrderError)
FMC_DEFINE_ERROR(StaleArtifactError)
FMC_DEFINE_ERROR(UnsupportedVersion)
FMC_DEFINE_ERROR(ParseError)
FMC_DEFINE_ERROR(ConfigError)

#undef FMC_DEFINE_ERROR

/// Raised by record validation; carries the offending column and raw value.
class FieldError : public Error {
 public:
  FieldError(std::string column, std::string value, const std::string& why)
      : Error("field '" + column + "' value '" + value + "': " + why),
        column_(std::move(column)),
        value_(std::move(value)) {}

  const std::string& column() const { return column_; }
  const std::string& value() const { return value_; }

 private:
  std::string column_;
  std::string value_;
};

}  // namespace fmc
