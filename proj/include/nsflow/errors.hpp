#pragma once

#include <stdexcept>
#include <string>

namespace nsflow {

// Error taxonomy. The CLI maps these to exit codes: config errors 2,
// cap errors 3, violated inequalities 4.

struct NonNormalized : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DuplicateAtom : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NegativeProb : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CapExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CoordinateOutOfRange : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateLaw : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ZeroVariance : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoAdmissibleQ : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OutOfRange : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoRoot : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SupportEscape : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SignedTestFunction : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace nsflow
