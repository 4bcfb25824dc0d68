#pragma once

#include <stdexcept>
#include <string>

namespace qnn {

// Root of every error the library raises. Subclasses map onto the failure
// categories callers need to tell apart (the CLI turns all of them into exit 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
  using Error::Error;
};
class ParameterError : public Error {
  using Error::Error;
};
class InputError : public Error {
  using Error::Error;
};
class FormatError : public Error {
  using Error::Error;
};
class IoError : public Error {
  using Error::Error;
};
class CompatibilityError : public Error {
  using Error::Error;
};
class CalibrationError : public Error {
  using Error::Error;
};
class BuildError : public Error {
  using Error::Error;
};
class NumericError : public Error {
  using Error::Error;
};

}  // namespace qnn
