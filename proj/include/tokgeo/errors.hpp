#pragma once

#include <stdexcept>
#include <string>

namespace tokgeo {

// Process exit status for CLI failures: 2 for input/validation problems,
// 3 for numerical or degenerate input.
enum class ErrorClass { input = 2, numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(std::string kind, ErrorClass cls, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)), class_(cls) {}

  const std::string& kind() const noexcept { return kind_; }
  ErrorClass error_class() const noexcept { return class_; }
  int exit_status() const noexcept { return static_cast<int>(class_); }

 private:
  std::string kind_;
  ErrorClass class_;
};

#define TOKGEO_DEFINE_ERROR(Name, Class)                                   \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(#Name, Class, what) {} \
  };

TOKGEO_DEFINE_ERROR(FormatError, ErrorClass::input)
TOKGEO_DEFINE_ERROR(DataError, ErrorClass::input)
TOKGEO_DEFINE_ERROR(IoError, ErrorClass::input)
TOKGEO_DEFINE_ERROR(SpecError, ErrorClass::input)
TOKGEO_DEFINE_ERROR(CalibrationError, ErrorClass::input)
TOKGEO_DEFINE_ERROR(DegenerateInput, ErrorClass::numerical)
TOKGEO_DEFINE_ERROR(GeometryError, ErrorClass::numerical)
TOKGEO_DEFINE_ERROR(EstimationError, ErrorClass::numerical)

#undef TOKGEO_DEFINE_ERROR

}  // namespace tokgeo
