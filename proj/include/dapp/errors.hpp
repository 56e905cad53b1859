// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef DAPP_ERRORS_HPP
#define DAPP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dapp {

// Bad user-supplied configuration (flags, grids, prior tables).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input data cannot support the requested computation (too few trials,
// malformed files, events outside the response window).
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical breakdown that survived all recovery attempts (e.g. a
// covariance factorization that fails after jitter escalation).
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dapp

#endif
