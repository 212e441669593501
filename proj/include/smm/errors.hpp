#pragma once

#include <stdexcept>
#include <string>

namespace smm {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed inputs: dimension mismatches, bad files, out-of-range arguments.
struct InvalidInput : Error {
  using Error::Error;
};

// Model construction failed (non-finite parameters, non-positive normalizer).
struct InvalidModel : Error {
  using Error::Error;
};

// Conditioning on a prefix whose marginal evidence is zero.
struct DegenerateConditioning : Error {
  using Error::Error;
};

// Inverse-transform bounds leave visible mass outside [lower, upper].
struct BoundsTooTight : Error {
  std::size_t dimension;
  BoundsTooTight(const std::string& msg, std::size_t dim) : Error(msg), dimension(dim) {}
};

// Rejection sampling exhausted its proposal budget before reaching the
// requested number of acceptances.
struct InsufficientAcceptance : Error {
  double observed_rate;
  InsufficientAcceptance(const std::string& msg, double rate) : Error(msg), observed_rate(rate) {}
};

// A fixed-budget rejection run accepted nothing.
struct NoAcceptance : Error {
  using Error::Error;
};

// Importance weight with zero proposal density but nonzero integrand.
struct UnboundedWeight : Error {
  using Error::Error;
};

// Sample budget too small for the requested stratification.
struct BudgetTooSmall : Error {
  using Error::Error;
};

// Gradient requested where the model density is exactly zero.
struct GradientAtZero : Error {
  using Error::Error;
};

// The target lacks a capability the requested operation needs.
struct UnsupportedTarget : Error {
  using Error::Error;
};

// Training aborted after repeated consecutive rollbacks.
struct TrainingAborted : Error {
  using Error::Error;
};

}  // namespace smm
