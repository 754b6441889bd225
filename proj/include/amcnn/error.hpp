#pragma once

#include <stdexcept>
#include <string>

namespace amcnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (files, annotations, configs).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or divergence during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace amcnn
