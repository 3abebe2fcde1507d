// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SOFI_TYPES_HPP
#define SOFI_TYPES_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace sofi {

using Eigen::ArrayXd;
using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

/// Malformed or unusable input data (files, formats, empty corpora).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure (instability, divergence, non-finite intermediates).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Mono time-domain signal with its sample rate. Samples are nominally in
/// [-1, 1] and must be finite.
struct AudioBuffer {
  ArrayXd samples;
  int sample_rate = 22050;

  Index size() const { return samples.size(); }

  void validate() const {
    if (sample_rate <= 0) throw std::invalid_argument("AudioBuffer: sample_rate must be positive");
    if (!samples.allFinite()) throw NumericalError("AudioBuffer: non-finite samples");
  }
};

}  // namespace sofi

#endif  // SOFI_TYPES_HPP
