#ifndef RFLOCK_TYPES_HPP
#define RFLOCK_TYPES_HPP

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace rflock {

template <typename Scalar>
struct eigen_types {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
};

using MatrixXd = Eigen::MatrixXd;
using VectorXd = Eigen::VectorXd;

/// Raised for invalid inputs at module boundaries; `code()` is a stable
/// machine-readable tag (e.g. "dangling_endpoint").
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace rflock

#endif  // RFLOCK_TYPES_HPP
