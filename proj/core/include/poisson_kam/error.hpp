#pragma once

#include <stdexcept>
#include <string>

namespace poisson_kam {

enum class ErrorKind {
  structural,           // operands live in different series spaces / shapes
  invariant_violation,  // e.g. η-degree overflow in a product
  domain,               // operation not defined for this input
  resonance,            // exact resonance k·ω = 0 within the truncation
  near_resonance,       // divisor below the floating-point guard
  secular_term,         // k = 0, p = 0 forcing in a homological equation
  divergence_risk,      // Lie contraction factor above 1/2
  smallness_violated,   // theoretical smallness condition refused a step
  divergence,           // measured ε grew twice in a row
  stiffness,            // integrator step size underflow
  parse,                // malformed input file
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace poisson_kam
