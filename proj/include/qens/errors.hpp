#pragma once

#include <stdexcept>
#include <string>

namespace qens {

// Root of every error the library throws. Subclasses name the failing
// contract so callers (and the CLI exit-code mapping) can tell them apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterizationError : public Error { using Error::Error; };
class DimensionError : public Error { using Error::Error; };
class CovarianceError : public Error { using Error::Error; };
class ConfigurationError : public Error { using Error::Error; };
class ClusterError : public Error { using Error::Error; };
class CapacityError : public Error { using Error::Error; };

// Data-level failures: bad files, dangling references, malformed records.
class DataError : public Error { using Error::Error; };
class ReferenceError : public DataError { using DataError::DataError; };
class ValidationError : public DataError { using DataError::DataError; };

}  // namespace qens
