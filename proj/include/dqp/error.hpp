#pragma once

#include <stdexcept>
#include <string>

namespace dqp {

// Contract violations on inputs (bad levels, malformed specs, ...).
struct invalid_argument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Failures of the numerics themselves (Cholesky breakdown, divergence, ...).
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// I/O and parse failures; carries a line number when one is known.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dqp
