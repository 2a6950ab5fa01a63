#pragma once

#include <vector>

#include "nexusflow/matrix.hpp"

namespace nexusflow {

struct EigenDecomposition {
    std::vector<double> values;  // descending
    Matrix vectors;              // column k pairs with values[k]
};

/// Cyclic Jacobi rotations. Input must be square and symmetric to 1e-10
/// (relative to its largest entry).
EigenDecomposition symmetric_eigen(const Matrix& a);

/// Sample covariance with divisor (rows - 1).
Matrix covariance(const Matrix& data);

/// Eigenvalues of the sample covariance, descending, roundoff negatives
/// clamped to zero.
std::vector<double> pca_spectrum(const Matrix& data);

}  // namespace nexusflow
