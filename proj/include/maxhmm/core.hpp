#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace maxhmm {

using Complex = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Vec3c = Eigen::Vector3cd;
using Mat3 = Eigen::Matrix3d;
using Mat3c = Eigen::Matrix3cd;
using CVector = std::vector<Complex>;

inline constexpr Complex I_UNIT{0.0, 1.0};

// Configuration / input validation problems (CLI maps these to exit code 2).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Geometry that cannot be meshed as requested (misaligned or out-of-range boxes).
struct AlignmentError : ConfigError {
  explicit AlignmentError(const std::string& msg) : ConfigError(msg) {}
};

struct GeometryError : ConfigError {
  explicit GeometryError(const std::string& msg) : ConfigError(msg) {}
};

// Numerical failures (CLI maps these to exit code 3).
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SingularMatrixError : SolverError {
  int row = -1;
  SingularMatrixError(const std::string& msg, int row_index)
      : SolverError(msg), row(row_index) {}
};

}  // namespace maxhmm
