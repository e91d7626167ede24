#pragma once

#include <stdexcept>
#include <string>

namespace gis {

// Array shapes disagree (channel counts, resolutions, pyramid levels).
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration ranges or hyperparameters are inconsistent.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Data violates a documented invariant (e.g. non-positive foreground depth).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A loss or gradient became NaN/Inf during optimization.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gis
