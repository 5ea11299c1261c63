#pragma once

#include <stdexcept>
#include <string>

namespace vdctr {

// Shapes that do not line up for the requested operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A vector whose norm is below the normalization floor, or an augmentation
// that produced one.
class DegenerateVectorError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// NaN/Inf, probabilities outside their open interval, empty reductions.
class NumericalError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A gradient reached a parameter marked frozen, or an optimizer was asked to
// update one.
class FrozenParameterError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A checkpoint was used in a pipeline position its stage tag does not allow.
class ProvenanceError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vdctr
