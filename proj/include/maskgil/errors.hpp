#pragma once

#include <stdexcept>
#include <string>

namespace maskgil {

// Every failure raised by the library derives from Error. The CLI maps
// the concrete type onto its exit-code taxonomy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

#define MASKGIL_DEFINE_ERROR(Name, tag)                         \
  class Name : public Error {                                   \
   public:                                                      \
    using Error::Error;                                         \
    const char* kind() const noexcept override { return tag; }  \
  };

MASKGIL_DEFINE_ERROR(ShapeError, "shape")
MASKGIL_DEFINE_ERROR(ConfigError, "config")
MASKGIL_DEFINE_ERROR(InputError, "input")
MASKGIL_DEFINE_ERROR(NumericError, "numeric")
MASKGIL_DEFINE_ERROR(ContractError, "contract")
MASKGIL_DEFINE_ERROR(FormatError, "format")
MASKGIL_DEFINE_ERROR(UsageError, "usage")

#undef MASKGIL_DEFINE_ERROR

}  // namespace maskgil
