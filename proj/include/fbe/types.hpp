#ifndef FBE_TYPES_HPP_
#define FBE_TYPES_HPP_

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace fbe {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using ComplexVector = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

// Rows are frames, columns are bins.
template <typename Scalar>
using ComplexFrames =
    Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VectorXd = Vector<double>;
using ComplexVectorXd = ComplexVector<double>;
using ComplexFramesXd = ComplexFrames<double>;

using Index = Eigen::Index;

// Error hierarchy. The CLI maps each class onto an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid geometry or parameters (including a stream that does not match
// the active configuration).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input data: audio files, gain streams, lengths.
class DataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : DataError(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

// Numeric invariant violations.
class NumericError : public Error {
 public:
  using Error::Error;
};

class SymmetryError : public NumericError {
 public:
  using NumericError::NumericError;
};

class DomainError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace fbe

#endif  // FBE_TYPES_HPP_
