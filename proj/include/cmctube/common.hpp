#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmctube {

using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;
using Eigen::VectorXi;

// Classified failure modes. `code` is stable and machine-checkable; the CLI
// maps codes onto exit codes.
enum class ErrorCode {
  SingularChart,
  NoConvergence,
  NotMinimal,
  NotAdmissible,
  BadAngle,
  NotSolvable,
  FocalRadiusExceeded,
  OrderMismatch,
  SelfIntersection,
  OutOfChart,
  DegenerateMetric,
  NotCapillary,
  NotSmallEigenvalue,
  BranchLost,
  EmptyRange,
  ResonantEpsilon,
  IllConditioned,
  DegenerateK,
  OrderUnsupported,
  BadConfig,
};

inline const char* error_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::SingularChart: return "SingularChart";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NotMinimal: return "NotMinimal";
    case ErrorCode::NotAdmissible: return "NotAdmissible";
    case ErrorCode::BadAngle: return "BadAngle";
    case ErrorCode::NotSolvable: return "NotSolvable";
    case ErrorCode::FocalRadiusExceeded: return "FocalRadiusExceeded";
    case ErrorCode::OrderMismatch: return "OrderMismatch";
    case ErrorCode::SelfIntersection: return "SelfIntersection";
    case ErrorCode::OutOfChart: return "OutOfChart";
    case ErrorCode::DegenerateMetric: return "DegenerateMetric";
    case ErrorCode::NotCapillary: return "NotCapillary";
    case ErrorCode::NotSmallEigenvalue: return "NotSmallEigenvalue";
    case ErrorCode::BranchLost: return "BranchLost";
    case ErrorCode::EmptyRange: return "EmptyRange";
    case ErrorCode::ResonantEpsilon: return "ResonantEpsilon";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::DegenerateK: return "DegenerateK";
    case ErrorCode::OrderUnsupported: return "OrderUnsupported";
    case ErrorCode::BadConfig: return "BadConfig";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what),
        code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) fail(code, what);
}

constexpr double kPi = 3.14159265358979323846;

// Least-squares slope of log|y| vs log x, ignoring entries below `floor`.
// Returns NaN if fewer than two usable points remain (e.g. exactly zero
// residuals on the flat model); callers treat NaN as "no measurable error".
inline double fitted_slope(const std::vector<double>& x,
                           const std::vector<double>& y,
                           double floor = 1e-13) {
  std::vector<double> lx, ly;
  for (size_t i = 0; i < x.size(); ++i) {
    if (std::abs(y[i]) > floor) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(std::abs(y[i])));
    }
  }
  if (lx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double n = double(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Coefficient of eps^d in a function sampled on a geometric ladder
// eps_j = eps0 / 2^j, assuming f(eps) = sum_{p>=pmin} c_p eps^p.
// Solves the small Vandermonde system for powers pmin..pmin+m-1 and returns
// the requested one.
inline double taylor_coefficient(const std::vector<double>& eps,
                                 const std::vector<double>& f, int pmin,
                                 int d) {
  const int m = int(eps.size());
  MatrixXd V(m, m);
  VectorXd rhs(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) V(i, j) = std::pow(eps[i], pmin + j);
    rhs(i) = f[i];
  }
  VectorXd c = V.fullPivLu().solve(rhs);
  return c(d - pmin);
}

// Deterministic float formatting used by every report writer.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double sup_norm(const VectorXd& v) {
  return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}
inline double sup_norm(const MatrixXd& v) {
  return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}

}  // namespace cmctube
